#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "wbforge/errors.hpp"
#include "wbforge/geometry/triangulation.hpp"
#include "wbforge/io.hpp"
#include "wbforge/kernels/kernels.hpp"
#include "wbforge/synth/dataset.hpp"
#include "wbforge/synth/detections.hpp"
#include "wbforge/synth/generator.hpp"
#include "wbforge/synth/heatmap.hpp"

using namespace wbforge;
namespace fs = std::filesystem;

namespace {

const KeypointLayout& L()
{
    return KeypointLayout::builtin();
}

fs::path temp_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("wbforge_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("generator: rest config reproduces the template")
{
    SyntheticPoseGenerator gen(GeneratorConfig::rest());
    auto p = gen.generate(123);
    CHECK(p.coords == gen.template_pose());
    CHECK(p.frame == Frame::world);
}

TEST_CASE("generator: determinism and symmetry")
{
    SyntheticPoseGenerator gen;
    CHECK(gen.generate(42).coords == gen.generate(42).coords);
    CHECK(gen.generate(42).coords != gen.generate(43).coords);

    double worst = 0.0, min_hips = 1e9, max_hips = 0.0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto p = generate_pose(gen, s);
        worst = std::max(worst, symmetric_length_error(p.coords, L()));
        const double hips = (p.coords.row(11) - p.coords.row(12)).norm();
        min_hips = std::min(min_hips, hips);
        max_hips = std::max(max_hips, hips);
        REQUIRE(p.coords.allFinite());
    }
    CHECK(worst < 1e-9);
    CHECK(min_hips >= 200.0);
    CHECK(max_hips <= 400.0);
}

TEST_CASE("generator: poses stay inside every view")
{
    SyntheticPoseGenerator gen;
    const Rig rig = Rig::corner_rig();
    int outside = 0;
    for (std::uint64_t s = 0; s < 300; ++s) {
        const auto p = gen.generate(s);
        for (const auto& cam : rig.cameras()) {
            const auto proj = project_pose(p, cam);
            for (int k = 0; k < 133; ++k)
                outside += cam.in_image(proj.coords.row(k).transpose()) ? 0 : 1;
        }
    }
    CHECK(outside == 0);
}

TEST_CASE("detections: no occlusion, no noise gives exact projections")
{
    SyntheticPoseGenerator gen;
    const Rig rig = Rig::corner_rig();
    const auto pose = gen.generate(7);
    const auto views = simulate_detections(pose, rig, OcclusionConfig::none(), 1);
    REQUIRE(views.size() == 4);
    for (int v = 0; v < 4; ++v) {
        for (int k = 0; k < 133; ++k) {
            CHECK(views[v].visible[k] == 1);
            const auto uv = project(pose.coords.row(k).transpose(), rig.camera(v)).uv;
            CHECK((views[v].coords.row(k).transpose() - uv).norm() < 1e-9);
        }
    }
    // Composed with triangulation the pose comes back.
    const auto tri = triangulate_pose(views, rig);
    CHECK((tri.pose.coords - pose.coords).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(classify_pose(tri.status) == PoseClass::complete);
}

TEST_CASE("detections: forced hand drop in one view")
{
    SyntheticPoseGenerator gen;
    const Rig rig = Rig::corner_rig();
    auto cfg = OcclusionConfig::none();
    cfg.hand_drop_per_view = {0.0, 1.0, 0.0, 0.0};
    const auto views = simulate_detections(gen.generate(9), rig, cfg, 2);
    for (int v = 0; v < 4; ++v)
        for (int k = 0; k < 133; ++k) {
            const bool hand = k >= 91;
            CHECK(views[v].visible[k] == ((v == 1 && hand) ? 0 : 1));
        }
}

TEST_CASE("detections: confidence ranges and determinism")
{
    SyntheticPoseGenerator gen;
    const Rig rig = Rig::corner_rig();
    const auto pose = gen.generate(3);
    const auto a = simulate_detections(pose, rig, OcclusionConfig{}, 5);
    const auto b = simulate_detections(pose, rig, OcclusionConfig{}, 5);
    for (int v = 0; v < 4; ++v) {
        CHECK(a[v].coords == b[v].coords);
        CHECK(a[v].visible == b[v].visible);
        for (int k = 0; k < 133; ++k) {
            if (a[v].visible[k])
                CHECK((a[v].confidence[k] >= 0.6 && a[v].confidence[k] <= 1.0));
            else
                CHECK((a[v].confidence[k] >= 0.05 && a[v].confidence[k] <= 0.45));
        }
    }
}

TEST_CASE("detections: default occlusion class frequencies")
{
    CorpusConfig cfg;
    cfg.poses = 10000;
    cfg.seed = 77;
    const Rig rig = Rig::corner_rig();
    const auto sets = synthesize_pose_sets(cfg, rig);
    std::vector<kernels::ViewSet> views;
    for (const auto& s : sets)
        views.push_back(s.detections);
    const auto tri = kernels::triangulate_batch_parallel(views, rig);
    int counts[3] = {0, 0, 0};
    for (const auto& t : tri)
        ++counts[static_cast<int>(classify_pose(t.status))];
    MESSAGE("complete " << counts[0] << ", incomplete " << counts[1] << ", rejected " << counts[2]);
    CHECK(counts[0] + counts[1] + counts[2] == 10000);
    // The default model produces all three classes, with most poses usable.
    CHECK(counts[0] > 1000);
    CHECK(counts[1] > 1000);
    CHECK(counts[2] > 0);
    CHECK(counts[0] + counts[1] > counts[2]);
}

TEST_CASE("heatmaps")
{
    SUBCASE("single keypoint argmax")
    {
        Coords2 uv(1, 2);
        uv << 10, 10;
        auto r = render_heatmaps(Pose2D::all_visible(uv), 32, 32, 3.0);
        CHECK(r.argmax(0) == std::pair<int, int>{10, 10});
        CHECK(r.max(0) == doctest::Approx(1.0));
    }
    SUBCASE("nothing visible renders zeros")
    {
        Coords2 uv(3, 2);
        uv << 5, 5, 10, 10, 20, 3;
        auto p = Pose2D::all_visible(uv);
        std::fill(p.visible.begin(), p.visible.end(), 0);
        auto r = render_heatmaps(p, 32, 32, 3.0);
        for (float x : r.data)
            CHECK(x == 0.0f);
        auto c = render_heatmaps(p, 32, 32, 3.0, true);
        CHECK(*std::max_element(c.data.begin(), c.data.end()) == 0.0f);
    }
    SUBCASE("composite of two close blobs matches the formula")
    {
        Coords2 uv(2, 2);
        uv << 20.3, 17.6, 21.3, 17.6;
        const double s = 3.0;
        auto r = render_heatmaps(Pose2D::all_visible(uv), 48, 40, s, true);
        double worst = 0.0;
        for (int y = 0; y < 40; ++y)
            for (int x = 0; x < 48; ++x) {
                double expect = 0.0;
                for (int k = 0; k < 2; ++k) {
                    const double dx = x - uv(k, 0), dy = y - uv(k, 1);
                    expect += std::exp(-(dx * dx + dy * dy) / (2 * s * s));
                }
                worst = std::max(worst, std::abs(expect - r.at(0, y, x)));
            }
        CHECK(worst < 1e-6);
    }
    SUBCASE("tiled render equals dense render, pooled too")
    {
        SyntheticPoseGenerator gen;
        const Rig rig = Rig::corner_rig();
        auto p = project_pose(gen.generate(1), rig.camera(0));
        // Shift into a 224 window so some blobs are clipped at the border.
        p.coords.rowwise() -= p.coords.row(0) - Eigen::RowVector2d(20.0, 100.0);
        p.visible[5] = 0;
        auto dense = render_heatmaps(p, 224, 224, 3.0);
        auto tiled = TiledHeatmaps::render(p, 224, 224, 3.0);
        CHECK(tiled.to_dense().data == dense.data);
        CHECK(tiled.pooled(4).to_dense().data == dense.pooled(4).data);
        const auto [x, y] = dense.argmax(0);
        CHECK(tiled.sample(0, x, y) == doctest::Approx(dense.at(0, y, x)));
        const double mid = tiled.sample(0, x + 0.5, y);
        CHECK(mid == doctest::Approx(0.5 * (dense.at(0, y, x) + dense.at(0, y, x + 1))));
        CHECK(tiled.sample(0, -5.0, 10.0) == 0.0);
    }
}

TEST_CASE("dataset round trip and consistency")
{
    const Rig rig = Rig::corner_rig();
    CorpusConfig cfg;
    cfg.poses = 25;
    cfg.seed = 5;
    const auto sets = synthesize_pose_sets(cfg, rig);
    std::vector<BenchmarkSample> samples;
    for (const auto& s : sets)
        for (auto& b : benchmark_samples(s, rig))
            samples.push_back(std::move(b));
    REQUIRE(samples.size() == 100);

    for (const auto& s : samples) {
        const auto& cam = rig.camera(rig.index_of(s.camera));
        for (int k = 0; k < 133; ++k) {
            if (!s.pose2d.visible[k])
                continue;
            const Eigen::Vector3d h = cam.K * s.pose3d.coords.row(k).transpose();
            CHECK((h.head<2>() / h.z() - s.pose2d.coords.row(k).transpose()).norm() <= 0.5);
            CHECK(s.pose2d.coords(k, 0) >= s.bbox[0]);
            CHECK(s.pose2d.coords(k, 1) >= s.bbox[1]);
            CHECK(s.pose2d.coords(k, 0) <= s.bbox[2]);
            CHECK(s.pose2d.coords(k, 1) <= s.bbox[3]);
        }
    }

    const auto dir = temp_dir("dataset");
    write_dataset(dir, samples);
    const auto back = read_dataset(dir);
    REQUIRE(back.samples.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& a = samples[i];
        const auto& b = back.samples[i];
        CHECK(a.id == b.id);
        CHECK(a.subject == b.subject);
        CHECK(a.camera == b.camera);
        CHECK((a.pose3d.coords - b.pose3d.coords).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((a.pose2d.coords - b.pose2d.coords).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(a.pose2d.visible == b.pose2d.visible);
        CHECK((a.bbox - b.bbox).cwiseAbs().maxCoeff() <= 1e-9);
    }

    SUBCASE("splits")
    {
        const auto sp = make_splits(samples, 3);
        CHECK(sp.train.size() == 80);
        CHECK(sp.test.size() == 20);
        std::set<std::string> train_subjects, test_subjects;
        for (const auto& s : samples) {
            if (std::count(sp.train.begin(), sp.train.end(), s.id))
                train_subjects.insert(s.subject);
            if (std::count(sp.test.begin(), sp.test.end(), s.id))
                test_subjects.insert(s.subject);
        }
        CHECK(test_subjects == std::set<std::string>{"S8"});
        CHECK(train_subjects.count("S8") == 0);

        std::set<int> lift(sp.test_lift.begin(), sp.test_lift.end());
        std::set<int> ilift(sp.test_ilift.begin(), sp.test_ilift.end());
        CHECK(lift.size() == 10);
        CHECK(ilift.size() == 10);
        for (int id : lift)
            CHECK(ilift.count(id) == 0);
        std::set<int> both = lift;
        both.insert(ilift.begin(), ilift.end());
        CHECK(both == std::set<int>(sp.test.begin(), sp.test.end()));

        write_manifests(dir, sp);
        const auto again = read_manifests(dir);
        CHECK(again.test_lift == sp.test_lift);
        CHECK(again.train == sp.train);
        CHECK(make_splits(samples, 3).test_lift == sp.test_lift);
    }
    SUBCASE("schema errors")
    {
        auto meta = read_json(dir / "meta.json");
        meta["schema_version"] = 99;
        write_json_atomic(dir / "meta.json", meta);
        CHECK_THROWS_AS(read_dataset(dir), SchemaError);
        meta["schema_version"] = kDatasetSchemaVersion;
        write_json_atomic(dir / "meta.json", meta);
        write_text_atomic(dir / "annotations.jsonl", "{\"id\": 1, \"subject\": \"S1\"}\n");
        CHECK_THROWS_AS(read_dataset(dir), SchemaError);
        write_text_atomic(dir / "annotations.jsonl", "{not json\n");
        CHECK_THROWS_AS(read_dataset(dir), SchemaError);
    }
    SUBCASE("absent confidence reads as one")
    {
        auto j = to_json(samples[0]);
        for (auto& e : j["kp2d"])
            if (e.size() == 4)
                e.erase(3);
        auto s = sample_from_json(j, L());
        CHECK(s.pose2d.confidence.minCoeff() == 1.0);
    }
}

TEST_CASE("pose set files round trip")
{
    const Rig rig = Rig::corner_rig();
    CorpusConfig cfg;
    cfg.poses = 6;
    const auto sets = synthesize_pose_sets(cfg, rig);
    const auto dir = temp_dir("posesets");
    write_pose_sets(dir, sets, rig);
    const auto back = read_pose_sets(dir, rig);
    REQUIRE(back.size() == sets.size());
    for (size_t i = 0; i < sets.size(); ++i) {
        CHECK(back[i].world.coords == sets[i].world.coords);
        for (int v = 0; v < 4; ++v) {
            CHECK(back[i].detections[v].coords == sets[i].detections[v].coords);
            CHECK(back[i].detections[v].confidence == sets[i].detections[v].confidence);
        }
    }
}

TEST_CASE("template: mirror pairs list the subject's left side first")
{
    SyntheticPoseGenerator gen(GeneratorConfig::rest());
    const auto& t = gen.template_pose();
    for (auto [l, r] : L().mirror_pairs()) {
        INFO("pair " << l.value << ", " << r.value);
        CHECK(t(l.row(), 0) > 0.0);
        CHECK(t(r.row(), 0) == doctest::Approx(-t(l.row(), 0)));
        CHECK(t(r.row(), 1) == doctest::Approx(t(l.row(), 1)));
        CHECK(t(r.row(), 2) == doctest::Approx(t(l.row(), 2)));
    }
    // Face midline keypoints sit on x = 0.
    for (int row : L().rows(Part::face))
        if (L().mirror_row(row) == row)
            CHECK(t(row, 0) == doctest::Approx(0.0));
}
