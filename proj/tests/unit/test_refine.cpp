#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wbforge/errors.hpp"
#include "wbforge/refine/multiview.hpp"
#include "wbforge/synth/detections.hpp"
#include "wbforge/synth/generator.hpp"

using namespace wbforge;

namespace {

const RefinerModel& trained_hand()
{
    static const RefinerModel model = [] {
        RefinerModel m(RefinerConfig::for_part(RefinerPart::hand), 11);
        RefinerTrainConfig cfg;
        cfg.epochs = 6;
        cfg.seed = 12;
        train_refiner(m, make_refiner_corpus(RefinerPart::hand, 600, 13), make_refiner_corpus(RefinerPart::hand, 60, 14), cfg);
        return m;
    }();
    return model;
}

Coords2 grid_points(int n, double spacing)
{
    Coords2 c(n, 2);
    for (int i = 0; i < n; ++i)
        c.row(i) << 60.0 + spacing * (i % 5), 70.0 + spacing * (i / 5);
    return c;
}

} // namespace

TEST_CASE("noise schedule is linear in standard deviation")
{
    NoiseSchedule s;
    CHECK(s.sigma(0) == 0.0);
    CHECK(s.sigma(1) == doctest::Approx(5.0));
    CHECK(s.sigma(3) == doctest::Approx(15.0));
    CHECK(s.sigma(5) == doctest::Approx(25.0));
    for (int t = 1; t < 5; ++t)
        CHECK(s.sigma(t + 1) > s.sigma(t));
    CHECK_THROWS_AS(s.sigma(6), ValidationError);
    CHECK_THROWS_AS(s.sigma(-1), ValidationError);
}

TEST_CASE("corrupt draws isotropic noise of the scheduled magnitude")
{
    NoiseSchedule s;
    const Coords2 gt = Coords2::Zero(1, 2);
    for (int t : {1, 3, 5}) {
        double sx = 0.0, sy = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const Coords2 x = corrupt(gt, t, static_cast<std::uint64_t>(i) * 7919u + static_cast<std::uint64_t>(t), s);
            sx += x(0, 0) * x(0, 0);
            sy += x(0, 1) * x(0, 1);
        }
        CHECK(std::sqrt(sx / n) == doctest::Approx(s.sigma(t)).epsilon(0.02));
        CHECK(std::sqrt(sy / n) == doctest::Approx(s.sigma(t)).epsilon(0.02));
    }
    const Coords2 a = corrupt(grid_points(5, 4), 2, 42, s), b = corrupt(grid_points(5, 4), 2, 42, s);
    CHECK(a == b);
    CHECK_THROWS_AS(corrupt(gt, 0, 1, s), ValidationError);
    CHECK_THROWS_AS(corrupt(gt, 6, 1, s), ValidationError);
}

TEST_CASE("noise chain is nested with the scheduled marginals")
{
    NoiseSchedule s;
    std::mt19937_64 rng(5);
    const Coords2 gt = Coords2::Zero(1, 2);
    std::vector<double> sq(6, 0.0), inc(6, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto chain = noise_chain(gt, s, rng);
        REQUIRE(chain.size() == 6);
        CHECK(chain[0] == gt);
        for (int t = 1; t <= 5; ++t) {
            sq[t] += chain[t].squaredNorm() / 2.0;
            inc[t] += (chain[t] - chain[t - 1]).squaredNorm() / 2.0;
        }
    }
    for (int t = 1; t <= 5; ++t) {
        CHECK(std::sqrt(sq[t] / n) == doctest::Approx(s.sigma(t)).epsilon(0.03));
        const double expect = std::sqrt(s.sigma(t) * s.sigma(t) - s.sigma(t - 1) * s.sigma(t - 1));
        CHECK(std::sqrt(inc[t] / n) == doctest::Approx(expect).epsilon(0.03));
    }
}

TEST_CASE("crop transforms round trip")
{
    SUBCASE("dyadic placement is exact")
    {
        CropSpec c;
        c.origin = {100.25, 200.5};
        c.scale = 2.0;
        c.offset = {80.0, 80.0};
        const Coords2 uv = grid_points(10, 3.125);
        CHECK(c.to_image(c.to_crop(uv)) == uv);
    }
    SUBCASE("general placement within 1e-9")
    {
        Coords2 uv(4, 2);
        uv << 412.3, 377.9, 451.7, 380.2, 430.1, 421.6, 440.0, 399.99;
        for (auto p : {CropPlacement::center, CropPlacement::top_left, CropPlacement::bottom_right}) {
            const CropSpec c = make_crop(uv, p);
            CHECK_NOTHROW(c.validate());
            CHECK((c.to_image(c.to_crop(uv)) - uv).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("corner crops keep the part inside the window at the margin")
{
    Coords2 uv(3, 2);
    uv << 500.0, 500.0, 560.0, 520.0, 520.0, 560.0; // square extent 60 px, region 480 px
    const CropSpec center = make_crop(uv, CropPlacement::center);
    CHECK(center.scale == doctest::Approx(384.0 / 480.0));
    const Coords2 cc = center.to_crop(uv);
    CHECK(cc.col(0).minCoeff() > 0.0);
    CHECK(cc.col(0).maxCoeff() < 224.0);

    const Coords2 tl = make_crop(uv, CropPlacement::top_left).to_crop(uv);
    CHECK(tl.col(0).minCoeff() == doctest::Approx(8.0));
    CHECK(tl.col(1).minCoeff() == doctest::Approx(8.0));
    const Coords2 br = make_crop(uv, CropPlacement::bottom_right).to_crop(uv);
    CHECK(br.col(0).maxCoeff() == doctest::Approx(216.0));
    CHECK(br.col(1).maxCoeff() == doctest::Approx(216.0));
    const Coords2 tr = make_crop(uv, CropPlacement::top_right).to_crop(uv);
    CHECK(tr.col(0).maxCoeff() == doctest::Approx(216.0));
    CHECK(tr.col(1).minCoeff() == doctest::Approx(8.0));

    // A narrow axis cannot reach the margin; the window stops at the canvas edge.
    Coords2 narrow = uv;
    narrow(1, 0) = 530.0;
    const CropSpec clamped = make_crop(narrow, CropPlacement::top_left);
    CHECK(clamped.offset.x() == doctest::Approx(160.0));
    CHECK(clamped.to_crop(narrow).col(0).minCoeff() > 8.0);
    CHECK_NOTHROW(clamped.validate());

    CHECK_THROWS_AS(make_crop(Coords2(0, 2), CropPlacement::center), ValidationError);
}

TEST_CASE("identity refiner is a fixed point with a full trace")
{
    const RefinerModel m = RefinerModel::identity(RefinerPart::hand);
    const Coords2 gt = make_refiner_corpus(RefinerPart::hand, 1, 3)[0].gt;
    const Conditioning cond = render_conditioning(gt, m.config());
    for (int iters : {0, 1, 10}) {
        const RefineResult r = refine(m, cond, gt, iters);
        CHECK(r.displacement.size() == static_cast<size_t>(iters));
        for (double d : r.displacement)
            CHECK(d == 0.0);
        CHECK(r.keypoints == gt);
    }
    CHECK_THROWS_AS(refine(m, cond, gt, -1), ValidationError);
}

TEST_CASE("refiner config and feature layout")
{
    CHECK(RefinerConfig::for_part(RefinerPart::face).keypoints == 68);
    CHECK(RefinerConfig::for_part(RefinerPart::hand).keypoints == 21);
    CHECK(RefinerConfig{}.features() == 12 * 12 + 8 * 8);
    CHECK(refiner_part_from_string("hand") == RefinerPart::hand);
    CHECK_THROWS_AS(refiner_part_from_string("foot"), ValidationError);

    const RefinerModel m(RefinerConfig::for_part(RefinerPart::hand), 1);
    const Coords2 gt = make_refiner_corpus(RefinerPart::hand, 1, 3)[0].gt;
    const Conditioning cond = render_conditioning(gt, m.config());
    const auto f = m.features(cond, gt);
    CHECK(f.rows() == 21);
    // Centre taps of the fine grid straddle the keypoint: the peak is close to 1.
    CHECK(f.row(0).maxCoeff() > 0.8);
    CHECK_THROWS_AS(m.features(cond, Coords2::Zero(3, 2)), ValidationError);
}

TEST_CASE("hidden keypoints keep their position")
{
    const RefinerModel m(RefinerConfig::for_part(RefinerPart::hand), 2);
    const Coords2 gt = make_refiner_corpus(RefinerPart::hand, 1, 4)[0].gt;
    std::vector<std::uint8_t> vis(21, 1);
    vis[3] = vis[17] = 0;
    const Conditioning cond = render_conditioning(gt, m.config(), &vis);
    const Coords2 start = corrupt(gt, 2, 9, m.config().schedule);
    const RefineResult r = refine(m, cond, start, 10);
    CHECK(r.keypoints.row(3) == start.row(3));
    CHECK(r.keypoints.row(17) == start.row(17));
}

TEST_CASE("corpus keeps every part keypoint inside the crop window")
{
    for (auto part : {RefinerPart::face, RefinerPart::hand}) {
        const auto corpus = make_refiner_corpus(part, 50, 21);
        REQUIRE(corpus.size() == 50);
        for (const auto& s : corpus) {
            CHECK(s.gt.rows() == RefinerConfig::for_part(part).keypoints);
            CHECK(s.gt.minCoeff() >= 0.0);
            CHECK(s.gt.maxCoeff() <= 224.0);
        }
    }
}

TEST_CASE("training lowers validation error below the first noise level")
{
    const RefinerModel& m = trained_hand();
    CHECK(m.trained());
    const auto val = make_refiner_corpus(RefinerPart::hand, 100, 31);
    const auto in = make_validation_inputs(val, m.config().schedule, 32);
    const auto errs = refinement_errors(m, val, in, 10);
    double initial = 0.0, final_ = 0.0;
    int monotone = 0;
    for (const auto& e : errs) {
        REQUIRE(e.size() == 11);
        initial += e[0];
        final_ += e[10];
        monotone += e[10] <= e[1];
    }
    initial /= static_cast<double>(errs.size());
    final_ /= static_cast<double>(errs.size());
    MESSAGE("validation error " << initial << " px -> " << final_ << " px");
    CHECK(final_ < initial);
    CHECK(final_ < 5.0);
    CHECK(monotone >= 95);
}

TEST_CASE("retraining under a fixed seed is deterministic")
{
    auto run = [] {
        RefinerModel m(RefinerConfig::for_part(RefinerPart::face), 5);
        RefinerTrainConfig cfg;
        cfg.epochs = 1;
        cfg.seed = 6;
        return train_refiner(m, make_refiner_corpus(RefinerPart::face, 40, 7), make_refiner_corpus(RefinerPart::face, 10, 8), cfg);
    };
    const auto a = run(), b = run();
    CHECK(a.best_val_error == b.best_val_error);
    CHECK(a.train_loss == b.train_loss);
    CHECK(a.best_val_error < a.initial_val_error);
}

TEST_CASE("refiner checkpoints round trip")
{
    const auto path = std::filesystem::temp_directory_path() / "wbforge_refiner_test.ckpt";
    const RefinerModel& m = trained_hand();
    m.save(path);
    const RefinerModel back = RefinerModel::load(path);
    CHECK(back.trained());
    CHECK(back.config().part == RefinerPart::hand);
    const Coords2 gt = make_refiner_corpus(RefinerPart::hand, 1, 41)[0].gt;
    const Conditioning cond = render_conditioning(gt, m.config());
    const Coords2 start = corrupt(gt, 3, 1, m.config().schedule);
    CHECK(refine(back, cond, start).keypoints == refine(m, cond, start).keypoints);
    std::filesystem::remove(path);
}

TEST_CASE("training rejects mismatched samples")
{
    RefinerModel m(RefinerConfig::for_part(RefinerPart::hand), 1);
    std::vector<RefinerSample> bad{{Coords2::Zero(68, 2)}};
    CHECK_THROWS_AS(train_refiner(m, bad, {}, {}), ValidationError);
    CHECK_THROWS_AS(train_refiner(m, {}, {}, {}), ValidationError);
}

TEST_CASE("identity multiview refinement leaves the pose unchanged")
{
    const Rig rig = Rig::corner_rig();
    const Pose3D pose = SyntheticPoseGenerator().generate(17);
    const RefinerModel face = RefinerModel::identity(RefinerPart::face), hand = RefinerModel::identity(RefinerPart::hand);
    const SyntheticConditioning provider(pose, rig);
    const auto r = refine_pose_views(pose, rig, {&face, &hand}, provider);
    CHECK((r.pose.coords - pose.coords).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(r.parts.size() == 3);
    for (const auto& p : r.parts) {
        CHECK_FALSE(p.skipped);
        CHECK_FALSE(rig.opposing(p.views.first, p.views.second));
        CHECK(p.mean_shift_px < 1e-9);
    }
    CHECK(r.pose.size() == 133);
}

TEST_CASE("trained refiner repairs an injected hand misalignment")
{
    const Rig rig = Rig::corner_rig();
    const auto& layout = KeypointLayout::builtin();
    const RefinerModel& hand = trained_hand();
    const RefinerModel face = RefinerModel::identity(RefinerPart::face);
    MultiviewRefineOptions opt;
    opt.parts = {Part::right_hand};

    int improved = 0, trials = 0;
    for (std::uint64_t seed = 100; trials < 5; ++seed) {
        const Pose3D gt = SyntheticPoseGenerator().generate(seed);
        const auto& rows = layout.rows(Part::right_hand);
        // Two adjacent views, each shifted +20 px horizontally, re-triangulated.
        std::vector<Pose2D> views;
        for (int v = 0; v < rig.size(); ++v)
            views.push_back(project_pose(gt, rig.camera(v)));
        std::vector<Coords2> proj;
        for (const auto& v : views)
            proj.push_back(part_slice(v.coords, layout, Part::right_hand));
        const auto [a, b] = select_views(proj, rig);
        bool visible = true;
        for (int r : rows)
            for (int v : {a, b})
                visible = visible && rig.camera(v).in_image(views[v].coords.row(r).transpose());
        if (!visible)
            continue;
        ++trials;
        Pose3D bad = gt;
        for (int r : rows) {
            const Observation obs[2] = {{a, views[a].coords.row(r).transpose() + Eigen::Vector2d(20.0, 0.0)},
                                        {b, views[b].coords.row(r).transpose() + Eigen::Vector2d(20.0, 0.0)}};
            bad.coords.row(r) = triangulate(obs, rig).point.transpose();
        }
        auto hand_err = [&](const Pose3D& p) {
            double s = 0.0;
            for (int r : rows)
                s += (p.coords.row(r) - gt.coords.row(r)).norm();
            return s / static_cast<double>(rows.size());
        };
        const SyntheticConditioning provider(gt, rig);
        const auto out = refine_pose_views(bad, rig, {&face, &hand}, provider, opt);
        MESSAGE("hand error " << hand_err(bad) << " mm -> " << hand_err(out.pose) << " mm");
        improved += hand_err(out.pose) < hand_err(bad);
        // Rows outside the refined part are untouched.
        for (int r = 0; r < 133; ++r)
            if (std::find(rows.begin(), rows.end(), r) == rows.end())
                CHECK(out.pose.coords.row(r) == bad.coords.row(r));
    }
    CHECK(improved == trials);
}

TEST_CASE("rgb conditioning produces one channel per keypoint")
{
    RgbImage img;
    img.width = 64;
    img.height = 48;
    img.rgb.assign(64 * 48 * 3, 0.5f);
    const auto path = std::filesystem::temp_directory_path() / "wbforge_rgb_test.ppm";
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n64 48\n255\n";
        for (int i = 0; i < 64 * 48; ++i)
            out.put(static_cast<char>(i % 256)).put(static_cast<char>(10)).put(static_cast<char>(200));
    }
    const RgbImage loaded = RgbImage::load_ppm(path);
    CHECK(loaded.width == 64);
    CHECK(loaded.sample(1, 3.0, 2.0) == doctest::Approx(10.0 / 255.0));
    CHECK(loaded.sample(0, 1.5, 0.0) == doctest::Approx(1.5 / 255.0));
    std::filesystem::remove(path);

    const RgbConditioning provider({img, img, img, img}, 21, 3);
    Coords2 uv(21, 2);
    for (int k = 0; k < 21; ++k)
        uv.row(k) << 20.0 + k, 20.0 + 0.5 * k;
    const CropSpec crop = make_crop(uv, CropPlacement::center);
    const RefinerConfig cfg = RefinerConfig::for_part(RefinerPart::hand);
    std::vector<int> rows(21);
    const Conditioning c = provider.conditioning(0, crop, rows, cfg);
    CHECK(c.render.channels() == 21);
    CHECK(c.render.width() == 224);
    CHECK(c.pooled.width() == 56);
    CHECK_THROWS_AS(provider.conditioning(0, crop, std::vector<int>(5), cfg), ValidationError);
}

TEST_CASE("dense to tiled conversion is exact")
{
    Pose2D p;
    p.coords = grid_points(4, 9.0);
    p.visible = {1, 0, 1, 1};
    p.confidence = Eigen::VectorXd::Ones(4);
    const HeatmapRender dense = render_heatmaps(p, 120, 100, 3.0);
    const TiledHeatmaps t = TiledHeatmaps::from_dense(dense);
    CHECK(t.empty(1));
    CHECK_FALSE(t.empty(0));
    CHECK(t.to_dense().data == dense.data);
    CHECK(t.pooled(4).to_dense().data == dense.pooled(4).data);
}
