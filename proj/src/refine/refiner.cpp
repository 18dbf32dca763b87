#include "wbforge/refine/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"
#include "wbforge/geometry/camera.hpp"
#include "wbforge/nn/optim.hpp"
#include "wbforge/synth/dataset.hpp"
#include "wbforge/synth/generator.hpp"

namespace wbforge {

using nn::Mat;

double NoiseSchedule::sigma(int t) const
{
    if (t < 0 || t > steps)
        throw ValidationError("noise step " + std::to_string(t) + " outside [0, " + std::to_string(steps) + "]");
    if (t == 0)
        return 0.0;
    if (steps == 1)
        return sigma_first;
    return sigma_first + (sigma_last - sigma_first) * (t - 1) / (steps - 1);
}

nlohmann::json NoiseSchedule::to_json() const
{
    return {{"steps", steps}, {"sigma_first", sigma_first}, {"sigma_last", sigma_last}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j)
{
    NoiseSchedule s;
    s.steps = j.at("steps").get<int>();
    s.sigma_first = j.at("sigma_first").get<double>();
    s.sigma_last = j.at("sigma_last").get<double>();
    if (s.steps < 1 || !(s.sigma_first > 0.0) || (s.steps > 1 && !(s.sigma_last > s.sigma_first)))
        throw ValidationError("noise schedule must be positive and strictly increasing");
    return s;
}

Coords2 corrupt(const Coords2& gt, int t, std::uint64_t seed, const NoiseSchedule& schedule)
{
    if (t < 1 || t > schedule.steps)
        throw ValidationError("corrupt: step must lie in [1, " + std::to_string(schedule.steps) + "]");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, schedule.sigma(t));
    Coords2 out = gt;
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out.data()[i] += n(rng);
    return out;
}

std::vector<Coords2> noise_chain(const Coords2& gt, const NoiseSchedule& schedule, std::mt19937_64& rng)
{
    std::vector<Coords2> chain{gt};
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 1; t <= schedule.steps; ++t) {
        const double a = schedule.sigma(t - 1), b = schedule.sigma(t);
        const double inc = std::sqrt(b * b - a * a);
        Coords2 x = chain.back();
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x.data()[i] += inc * n(rng);
        chain.push_back(std::move(x));
    }
    return chain;
}

Coords2 CropSpec::to_crop(const Coords2& image_uv) const
{
    Coords2 out(image_uv.rows(), 2);
    for (Eigen::Index r = 0; r < image_uv.rows(); ++r)
        out.row(r) = to_crop(Eigen::Vector2d(image_uv.row(r).transpose())).transpose();
    return out;
}

Coords2 CropSpec::to_image(const Coords2& crop_uv) const
{
    Coords2 out(crop_uv.rows(), 2);
    for (Eigen::Index r = 0; r < crop_uv.rows(); ++r)
        out.row(r) = to_image(Eigen::Vector2d(crop_uv.row(r).transpose())).transpose();
    return out;
}

void CropSpec::validate() const
{
    if (!(scale > 0.0) || !origin.allFinite() || !offset.allFinite())
        throw ValidationError("crop: scale must be positive and the placement finite");
    for (int a = 0; a < 2; ++a)
        if (offset(a) < 0.0 || offset(a) + kSize > kCanvas)
            throw ValidationError("crop: window leaves the resized region");
}

CropSpec make_crop(const Coords2& part_uv, CropPlacement placement, double region_scale)
{
    if (part_uv.rows() == 0 || !part_uv.allFinite())
        throw ValidationError("crop: part needs finite keypoints");
    const Eigen::Vector2d lo = part_uv.colwise().minCoeff().transpose();
    const Eigen::Vector2d hi = part_uv.colwise().maxCoeff().transpose();
    const double extent = std::max({hi.x() - lo.x(), hi.y() - lo.y(), 8.0 / CropSpec::kRegionFactor});
    const double side = CropSpec::kRegionFactor * extent * region_scale;
    CropSpec c;
    c.scale = CropSpec::kCanvas / side;
    c.origin = 0.5 * (lo + hi) - Eigen::Vector2d::Constant(0.5 * side);

    const Eigen::Vector2d blo = (lo - c.origin) * c.scale, bhi = (hi - c.origin) * c.scale;
    const double m = CropSpec::kCornerMargin, size = CropSpec::kSize;
    Eigen::Vector2d off;
    switch (placement) {
    case CropPlacement::center: off = Eigen::Vector2d::Constant(0.5 * (CropSpec::kCanvas - size)); break;
    case CropPlacement::top_left: off = blo - Eigen::Vector2d::Constant(m); break;
    case CropPlacement::top_right: off = {bhi.x() + m - size, blo.y() - m}; break;
    case CropPlacement::bottom_left: off = {blo.x() - m, bhi.y() + m - size}; break;
    case CropPlacement::bottom_right: off = bhi + Eigen::Vector2d::Constant(m - size); break;
    }
    c.offset = off.cwiseMax(0.0).cwiseMin(static_cast<double>(CropSpec::kCanvas - CropSpec::kSize));
    return c;
}

std::string_view to_string(RefinerPart part) { return part == RefinerPart::face ? "face" : "hand"; }

RefinerPart refiner_part_from_string(std::string_view name)
{
    if (name == "face")
        return RefinerPart::face;
    if (name == "hand")
        return RefinerPart::hand;
    throw ValidationError("unknown refiner part '" + std::string(name) + "'");
}

RefinerConfig RefinerConfig::for_part(RefinerPart part)
{
    RefinerConfig c;
    c.part = part;
    c.keypoints = part == RefinerPart::face ? 68 : 21;
    return c;
}

nlohmann::json RefinerConfig::to_json() const
{
    return {{"part", to_string(part)},   {"keypoints", keypoints},         {"coarse_grid", coarse_grid},
            {"coarse_stride", coarse_stride}, {"pool", pool},                 {"fine_grid", fine_grid},
            {"fine_stride", fine_stride}, {"hidden1", hidden1},             {"hidden2", hidden2},
            {"output_scale", output_scale}, {"heatmap_sigma", heatmap_sigma}, {"schedule", schedule.to_json()}};
}

RefinerConfig RefinerConfig::from_json(const nlohmann::json& j)
{
    RefinerConfig c;
    c.part = refiner_part_from_string(j.at("part").get<std::string>());
    c.keypoints = j.at("keypoints").get<int>();
    c.coarse_grid = j.at("coarse_grid").get<int>();
    c.coarse_stride = j.at("coarse_stride").get<double>();
    c.pool = j.at("pool").get<int>();
    c.fine_grid = j.at("fine_grid").get<int>();
    c.fine_stride = j.at("fine_stride").get<double>();
    c.hidden1 = j.at("hidden1").get<int>();
    c.hidden2 = j.at("hidden2").get<int>();
    c.output_scale = j.at("output_scale").get<double>();
    c.heatmap_sigma = j.at("heatmap_sigma").get<double>();
    c.schedule = NoiseSchedule::from_json(j.at("schedule"));
    return c;
}

Conditioning Conditioning::from(TiledHeatmaps render, int pool)
{
    Conditioning c;
    c.pooled = render.pooled(pool);
    c.render = std::move(render);
    return c;
}

Conditioning render_conditioning(const Coords2& crop_uv, const RefinerConfig& config,
                                 const std::vector<std::uint8_t>* visible)
{
    Pose2D p;
    p.coords = crop_uv;
    p.visible = visible ? *visible : std::vector<std::uint8_t>(static_cast<size_t>(crop_uv.rows()), 1);
    p.confidence = Eigen::VectorXd::Ones(crop_uv.rows());
    return Conditioning::from(TiledHeatmaps::render(p, CropSpec::kSize, CropSpec::kSize, config.heatmap_sigma),
                              config.pool);
}

RefinerModel::RefinerModel(RefinerConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed)
{
    if (config_.keypoints <= 0 || config_.coarse_grid <= 0 || config_.fine_grid <= 0 || config_.pool <= 0 ||
        config_.hidden1 <= 0 || config_.hidden2 <= 0 || !(config_.output_scale > 0.0))
        throw ValidationError("refiner config: sizes must be positive");
    nn::Rng rng(seed);
    l1_ = nn::Linear::create(params_, "l1", config_.features(), config_.hidden1, rng);
    l2_ = nn::Linear::create(params_, "l2", config_.hidden1, config_.hidden2, rng);
    l3_ = nn::Linear::create(params_, "l3", config_.hidden2, 2, rng, 0.1);
}

RefinerModel RefinerModel::identity(RefinerPart part)
{
    RefinerModel m(RefinerConfig::for_part(part), 0);
    m.params_[m.l3_.w].setZero();
    m.params_[m.l3_.b].setZero();
    m.trained_ = true;
    return m;
}

Mat RefinerModel::features(const Conditioning& cond, const Coords2& current) const
{
    const int n = static_cast<int>(current.rows());
    if (n != cond.render.channels())
        throw ValidationError("refiner: conditioning channels do not match the keypoint count");
    Mat f(n, config_.features());
    const double cg = 0.5 * (config_.coarse_grid - 1), fg = 0.5 * (config_.fine_grid - 1);
    const double pool = config_.pool, pool_center = 0.5 * (config_.pool - 1);
    for (int k = 0; k < n; ++k) {
        const double x = current(k, 0), y = current(k, 1);
        int col = 0;
        for (int i = 0; i < config_.coarse_grid; ++i)
            for (int j = 0; j < config_.coarse_grid; ++j) {
                const double sx = x + (j - cg) * config_.coarse_stride, sy = y + (i - cg) * config_.coarse_stride;
                f(k, col++) = cond.pooled.sample(k, (sx - pool_center) / pool, (sy - pool_center) / pool);
            }
        for (int i = 0; i < config_.fine_grid; ++i)
            for (int j = 0; j < config_.fine_grid; ++j)
                f(k, col++) = cond.render.sample(k, x + (j - fg) * config_.fine_stride, y + (i - fg) * config_.fine_stride);
    }
    return f;
}

Mat RefinerModel::regress(const Mat& x, Tape* tape) const
{
    Mat h1 = nn::relu(l1_.forward(params_, x));
    Mat h2 = nn::relu(l2_.forward(params_, h1));
    Mat out = l3_.forward(params_, h2) * config_.output_scale;
    if (tape) {
        tape->x = x;
        tape->h1 = std::move(h1);
        tape->h2 = std::move(h2);
    }
    return out;
}

void RefinerModel::backward(const Tape& tape, const Mat& d_offset, nn::Gradients& g) const
{
    const Mat dh2 = l3_.backward(params_, tape.h2, d_offset * config_.output_scale, g);
    const Mat dh1 = l2_.backward(params_, tape.h1, nn::relu_backward(tape.h2, dh2), g);
    l1_.backward(params_, tape.x, nn::relu_backward(tape.h1, dh1), g);
}

Coords2 RefinerModel::step(const Conditioning& cond, const Coords2& current) const
{
    const Mat off = regress(features(cond, current));
    Coords2 next = current;
    for (Eigen::Index k = 0; k < current.rows(); ++k)
        if (!cond.render.empty(static_cast<int>(k)))
            next.row(k) += off.row(k);
    return next;
}

void RefinerModel::save(const std::filesystem::path& path, const nlohmann::json& extra) const
{
    nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
    header["kind"] = "refiner";
    header["part"] = to_string(config_.part);
    header["config"] = config_.to_json();
    header["seed"] = seed_;
    nn::save_checkpoint(path, header, params_);
}

RefinerModel RefinerModel::load(const std::filesystem::path& path)
{
    const auto header = nn::read_checkpoint_header(path);
    if (header.value("kind", std::string()) != "refiner")
        throw SchemaError("checkpoint " + path.string() + " is not a refiner model");
    RefinerModel m(RefinerConfig::from_json(header.at("config")), header.at("seed").get<std::uint64_t>());
    nn::load_checkpoint(path, m.params_);
    m.trained_ = true;
    return m;
}

RefineResult refine(const RefinerModel& model, const Conditioning& cond, const Coords2& initial, int iterations)
{
    if (iterations < 0)
        throw ValidationError("refine: iterations must be non-negative");
    RefineResult r;
    r.keypoints = initial;
    for (int it = 0; it < iterations; ++it) {
        Coords2 next = model.step(cond, r.keypoints);
        r.displacement.push_back(initial.rows() ? (next - r.keypoints).rowwise().norm().mean() : 0.0);
        r.keypoints = std::move(next);
    }
    return r;
}

std::vector<RefinerSample> make_refiner_corpus(RefinerPart part, int count, std::uint64_t seed)
{
    const auto& layout = KeypointLayout::builtin();
    const SyntheticPoseGenerator gen;
    const Rig rig = Rig::corner_rig();
    const std::vector<int>* rows[2] = {&layout.rows(Part::face), &layout.rows(Part::left_hand)};
    std::vector<RefinerSample> out;
    std::uint64_t i = 0;
    while (static_cast<int>(out.size()) < count) {
        std::mt19937_64 rng(derive_seed(seed, 7, i));
        const Pose3D pose = gen.generate(derive_seed(seed, 8, i));
        ++i;
        const int view = std::uniform_int_distribution<int>(0, rig.size() - 1)(rng);
        const std::vector<int>& part_rows =
            part == RefinerPart::face ? *rows[0]
                                      : (std::uniform_int_distribution<int>(0, 1)(rng) ? layout.rows(Part::right_hand)
                                                                                        : *rows[1]);
        Coords2 uv(static_cast<Eigen::Index>(part_rows.size()), 2);
        bool ok = true;
        for (size_t k = 0; k < part_rows.size() && ok; ++k) {
            const Eigen::Vector3d X = pose.coords.row(part_rows[k]).transpose();
            const auto& cam = rig.camera(view);
            if (!(cam.to_camera(X).z() > 1.0)) {
                ok = false;
                break;
            }
            const auto pr = project(X, cam);
            ok = pr.in_image;
            uv.row(static_cast<Eigen::Index>(k)) = pr.uv.transpose();
        }
        if (!ok)
            continue;
        const double jitter = std::uniform_real_distribution<double>(0.85, 1.2)(rng);
        CropSpec crop = make_crop(uv, CropPlacement::center, jitter);
        const CropSpec a = make_crop(uv, CropPlacement::top_left, jitter);
        const CropSpec b = make_crop(uv, CropPlacement::bottom_right, jitter);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int d = 0; d < 2; ++d)
            crop.offset(d) = a.offset(d) + u(rng) * (b.offset(d) - a.offset(d));
        out.push_back({crop.to_crop(uv)});
    }
    return out;
}

RefinerValidation make_validation_inputs(const std::vector<RefinerSample>& samples, const NoiseSchedule& schedule,
                                         std::uint64_t seed)
{
    RefinerValidation v;
    std::mt19937_64 rng(seed);
    for (const auto& s : samples) {
        const int t = std::uniform_int_distribution<int>(1, schedule.steps)(rng);
        v.initial.push_back(corrupt(s.gt, t, rng(), schedule));
    }
    return v;
}

std::vector<std::vector<double>> refinement_errors(const RefinerModel& model, const std::vector<RefinerSample>& samples,
                                                   const RefinerValidation& inputs, int iterations)
{
    std::vector<std::vector<double>> out(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
        const auto& s = samples[static_cast<size_t>(i)];
        const Conditioning cond = render_conditioning(s.gt, model.config());
        Coords2 x = inputs.initial[static_cast<size_t>(i)];
        auto& e = out[static_cast<size_t>(i)];
        e.push_back((x - s.gt).rowwise().norm().mean());
        for (int it = 0; it < iterations; ++it) {
            x = model.step(cond, x);
            e.push_back((x - s.gt).rowwise().norm().mean());
        }
    }
    return out;
}

namespace {

double mean_final_error(const RefinerModel& model, const std::vector<RefinerSample>& val, const RefinerValidation& in,
                        int iterations)
{
    if (val.empty())
        return 0.0;
    const auto errs = refinement_errors(model, val, in, iterations);
    double s = 0.0;
    for (const auto& e : errs)
        s += e.back();
    return s / static_cast<double>(errs.size());
}

} // namespace

RefinerHistory train_refiner(RefinerModel& model, const std::vector<RefinerSample>& train,
                             const std::vector<RefinerSample>& val, const RefinerTrainConfig& cfg)
{
    if (train.empty() || cfg.epochs <= 0 || cfg.batch <= 0)
        throw ValidationError("refiner training: need samples and positive epochs/batch");
    const RefinerConfig& rc = model.config();
    for (const auto* set : {&train, &val})
        for (const auto& s : *set)
            if (s.gt.rows() != rc.keypoints || !s.gt.allFinite())
                throw ValidationError("refiner training: sample keypoint count does not match the model");

    std::mt19937_64 rng(cfg.seed);
    const RefinerValidation vin = make_validation_inputs(val, rc.schedule, cfg.seed ^ 0x51ed2701u);
    RefinerHistory h;
    h.initial_val_error = mean_final_error(model, val, vin, cfg.iterations);
    h.best_val_error = h.initial_val_error;
    nn::Parameters best = model.parameters();
    bool have_best = false;

    nn::Adam adam(model.parameters());
    const int steps_per_epoch = static_cast<int>((train.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch));
    const int total = steps_per_epoch * cfg.epochs;
    const int S = rc.schedule.steps, K = rc.keypoints;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    int step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            const size_t lo = static_cast<size_t>(s) * static_cast<size_t>(cfg.batch);
            const size_t hi = std::min(train.size(), lo + static_cast<size_t>(cfg.batch));
            const int m = static_cast<int>(hi - lo);
            std::vector<std::vector<Coords2>> chains;
            for (int i = 0; i < m; ++i)
                chains.push_back(noise_chain(train[order[lo + static_cast<size_t>(i)]].gt, rc.schedule, rng));

            // Rows: sample i, step t (input x_t, target x_{t-1}), keypoint k.
            Mat X(static_cast<Eigen::Index>(m) * S * K, rc.features());
            Mat target(X.rows(), 2), current(X.rows(), 2);
#pragma omp parallel for schedule(dynamic)
            for (int i = 0; i < m; ++i) {
                const Conditioning cond = render_conditioning(chains[static_cast<size_t>(i)][0], rc);
                for (int t = 1; t <= S; ++t) {
                    const Eigen::Index r0 = (static_cast<Eigen::Index>(i) * S + (t - 1)) * K;
                    const Coords2& in = chains[static_cast<size_t>(i)][static_cast<size_t>(t)];
                    X.middleRows(r0, K) = model.features(cond, in);
                    current.middleRows(r0, K) = in;
                    target.middleRows(r0, K) = chains[static_cast<size_t>(i)][static_cast<size_t>(t - 1)];
                }
            }
            RefinerModel::Tape tape;
            const Mat off = model.regress(X, &tape);
            const Mat diff = current + off - target;
            const double loss = diff.cwiseAbs().sum() / static_cast<double>(X.rows());
            if (!std::isfinite(loss))
                throw DivergenceError("refiner training diverged at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
            const Mat d = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }) /
                          static_cast<double>(X.rows());
            nn::Gradients g = model.parameters().zeros();
            model.backward(tape, d, g);
            adam.step(model.parameters(), g, nn::cosine_lr(cfg.lr, step, total, cfg.lr_floor));
            epoch_loss += loss * m;
            ++step;
        }
        h.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
        const double v = val.empty() ? h.train_loss.back() : mean_final_error(model, val, vin, cfg.iterations);
        h.val_error.push_back(v);
        if (val.empty())
            spdlog::info("refiner[{}] epoch {}: loss {:.3f} px", to_string(rc.part), epoch, h.train_loss.back());
        else
            spdlog::info("refiner[{}] epoch {}: loss {:.3f} px, val error {:.3f} px", to_string(rc.part), epoch,
                         h.train_loss.back(), v);
        if (!have_best || v < h.best_val_error) {
            h.best_val_error = v;
            best = model.parameters();
            have_best = true;
        }
    }
    model.parameters() = best;
    model.mark_trained();
    return h;
}

} // namespace wbforge
