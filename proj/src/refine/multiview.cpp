#include "wbforge/refine/multiview.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"

namespace wbforge {

SyntheticConditioning::SyntheticConditioning(Pose3D world, const Rig& rig) : world_(std::move(world)), rig_(&rig)
{
    if (!world_.coords.allFinite())
        throw ValidationError("synthetic conditioning needs a finite world pose");
}

Conditioning SyntheticConditioning::conditioning(int view, const CropSpec& crop, const std::vector<int>& rows,
                                                 const RefinerConfig& config) const
{
    if (static_cast<int>(rows.size()) != config.keypoints)
        throw ValidationError("conditioning: row count does not match the refiner");
    const CameraModel& cam = rig_->camera(view);
    Coords2 uv(static_cast<Eigen::Index>(rows.size()), 2);
    std::vector<std::uint8_t> visible(rows.size(), 1);
    for (size_t k = 0; k < rows.size(); ++k) {
        const Eigen::Vector3d X = world_.coords.row(rows[k]).transpose();
        if (!(cam.to_camera(X).z() > 1.0)) {
            visible[k] = 0;
            uv.row(static_cast<Eigen::Index>(k)).setZero();
            continue;
        }
        uv.row(static_cast<Eigen::Index>(k)) = crop.to_crop(project(X, cam).uv).transpose();
    }
    return render_conditioning(uv, config, &visible);
}

RgbImage RgbImage::load_ppm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open image " + path.string());
    std::string magic;
    int maxval = 0;
    RgbImage img;
    in >> magic >> img.width >> img.height >> maxval;
    if (magic != "P6" || img.width <= 0 || img.height <= 0 || maxval != 255)
        throw SchemaError(path.string() + ": expected a binary 8-bit PPM");
    in.get();
    std::vector<unsigned char> raw(static_cast<size_t>(img.width) * img.height * 3);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw SchemaError(path.string() + ": truncated pixel data");
    img.rgb.resize(raw.size());
    std::transform(raw.begin(), raw.end(), img.rgb.begin(), [](unsigned char v) { return v / 255.0f; });
    return img;
}

double RgbImage::sample(int channel, double x, double y) const
{
    if (!(x > -1.0) || !(y > -1.0) || !(x < width) || !(y < height))
        return 0.0;
    const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
    const double fx = x - xi, fy = y - yi;
    auto px = [&](int yy, int xx) -> double {
        if (xx < 0 || yy < 0 || xx >= width || yy >= height)
            return 0.0;
        return rgb[(static_cast<size_t>(yy) * width + xx) * 3 + static_cast<size_t>(channel)];
    };
    return (1 - fy) * ((1 - fx) * px(yi, xi) + fx * px(yi, xi + 1)) +
           fy * ((1 - fx) * px(yi + 1, xi) + fx * px(yi + 1, xi + 1));
}

RgbConditioning::RgbConditioning(std::vector<RgbImage> views, int keypoints, std::uint64_t seed)
    : views_(std::move(views))
{
    for (const auto& v : views_)
        if (v.rgb.size() != static_cast<size_t>(v.width) * v.height * 3)
            throw ValidationError("rgb image has inconsistent dimensions");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    weights_ = Eigen::MatrixXd::NullaryExpr(keypoints, 4, [&] { return n(rng); });
}

Conditioning RgbConditioning::conditioning(int view, const CropSpec& crop, const std::vector<int>& rows,
                                           const RefinerConfig& config) const
{
    if (static_cast<int>(rows.size()) != config.keypoints || weights_.rows() != config.keypoints)
        throw ValidationError("conditioning: row count does not match the refiner");
    const RgbImage& img = views_.at(static_cast<size_t>(view));
    HeatmapRender dense;
    dense.channels = config.keypoints;
    dense.width = dense.height = CropSpec::kSize;
    dense.data.assign(static_cast<size_t>(dense.channels) * dense.width * dense.height, 0.0f);
    for (int y = 0; y < CropSpec::kSize; ++y)
        for (int x = 0; x < CropSpec::kSize; ++x) {
            const Eigen::Vector2d p = crop.to_image(Eigen::Vector2d(x, y));
            const Eigen::Vector4d c(img.sample(0, p.x(), p.y()), img.sample(1, p.x(), p.y()), img.sample(2, p.x(), p.y()), 1.0);
            const Eigen::VectorXd act = weights_ * c;
            for (int k = 0; k < dense.channels; ++k)
                dense.at(k, y, x) = static_cast<float>(1.0 / (1.0 + std::exp(-act(k))));
        }
    return Conditioning::from(TiledHeatmaps::from_dense(dense), config.pool);
}

const RefinerModel& RefinerSet::for_part(Part part) const
{
    const RefinerModel* m = part == Part::face ? face : (part == Part::left_hand || part == Part::right_hand ? hand : nullptr);
    if (!m)
        throw ValidationError("no refiner for part " + std::string(to_string(part)));
    return *m;
}

MultiviewRefineResult refine_pose_views(const Pose3D& pose, const Rig& rig, const RefinerSet& refiners,
                                        const ConditioningProvider& provider, const MultiviewRefineOptions& options,
                                        const KeypointLayout& layout)
{
    if (pose.size() != layout.total() || !pose.coords.allFinite())
        throw ValidationError("refine_pose_views needs a finite pose with the layout's keypoints");
    MultiviewRefineResult out;
    out.pose = pose;

    for (Part part : options.parts) {
        const RefinerModel& model = refiners.for_part(part);
        const auto& rows = layout.rows(part);
        PartRefinement pr;
        pr.part = part;

        std::vector<Coords2> refined(static_cast<size_t>(rig.size()));
        std::vector<double> shift(static_cast<size_t>(rig.size()), 0.0);
        for (int v = 0; v < rig.size(); ++v) {
            const CameraModel& cam = rig.camera(v);
            Coords2 uv(static_cast<Eigen::Index>(rows.size()), 2);
            bool ok = true;
            for (size_t k = 0; k < rows.size() && ok; ++k) {
                const Eigen::Vector3d X = pose.coords.row(rows[k]).transpose();
                ok = cam.to_camera(X).z() > 1.0;
                if (ok)
                    uv.row(static_cast<Eigen::Index>(k)) = project(X, cam).uv.transpose();
            }
            if (!ok)
                continue; // empty projection set: zero variance, never selected
            const CropSpec crop = make_crop(uv, CropPlacement::center);
            const Conditioning cond = provider.conditioning(v, crop, rows, model.config());
            const Coords2 r = crop.to_image(refine(model, cond, crop.to_crop(uv), options.iterations).keypoints);
            shift[static_cast<size_t>(v)] = (r - uv).rowwise().norm().mean();
            refined[static_cast<size_t>(v)] = r;
        }

        const auto [a, b] = select_views(refined, rig, options.aggregation);
        pr.views = {a, b};
        if (refined[static_cast<size_t>(a)].rows() == 0 || refined[static_cast<size_t>(b)].rows() == 0) {
            pr.skipped = true;
            spdlog::debug("refine_pose_views: no usable view pair for {}", to_string(part));
            out.parts.push_back(pr);
            continue;
        }
        pr.mean_shift_px = 0.5 * (shift[static_cast<size_t>(a)] + shift[static_cast<size_t>(b)]);
        for (size_t k = 0; k < rows.size(); ++k) {
            const Observation obs[2] = {{a, refined[static_cast<size_t>(a)].row(static_cast<Eigen::Index>(k)).transpose()},
                                        {b, refined[static_cast<size_t>(b)].row(static_cast<Eigen::Index>(k)).transpose()}};
            out.pose.coords.row(rows[k]) = triangulate(obs, rig).point.transpose();
        }
        out.parts.push_back(pr);
    }
    return out;
}

} // namespace wbforge
