#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>

#include "wbforge/completion/completion.hpp"
#include "wbforge/errors.hpp"
#include "wbforge/synth/dataset.hpp"
#include "wbforge/synth/detections.hpp"

using namespace wbforge;

namespace {

// Five keypoints: a root, two mirrored "shoulders" and two mirrored "hands".
KeypointLayout toy_layout()
{
    return KeypointLayout::from_json({{"schema_version", 1},
                                      {"name", "toy"},
                                      {"version", "1"},
                                      {"total", 5},
                                      {"ranges", {{"body", {1, 3}}, {"face", {4, 3}}, {"left_hand", {4, 4}}, {"right_hand", {5, 5}}}},
                                      {"nose", 1},
                                      {"hips", {2, 3}},
                                      {"left_wrist", 4},
                                      {"right_wrist", 5},
                                      {"mirror_pairs", {{2, 3}, {4, 5}}},
                                      {"bones", {{1, 2}, {1, 3}, {2, 4}, {3, 5}}}});
}

CompletionNetConfig toy_config()
{
    CompletionNetConfig c;
    c.keypoints = 5;
    c.d_model = 8;
    c.blocks = 2;
    c.layers_per_block = 1;
    c.ff_dim = 16;
    c.curriculum = {{0, 1, 2}, {0, 1, 2, 3, 4}};
    return c;
}

Coords3 toy_pose()
{
    Coords3 p(5, 3);
    p << 0, 0, 1400, 180, 10, 1350, -180, 10, 1350, 260, 40, 1000, -230, -20, 1050;
    return p;
}

std::vector<CompletionSample> corpus(int n, std::uint64_t seed, const Rig& rig)
{
    CorpusConfig cc;
    cc.poses = n;
    cc.seed = seed;
    std::vector<CompletionSample> out;
    for (auto& s : synthesize_pose_sets(cc, rig))
        out.push_back({s.world.coords, s.detections});
    return out;
}

} // namespace

TEST_CASE("encoding: zero coordinate gives sin 0 and cos 1")
{
    const auto w = coordinate_frequencies(8, 1000.0);
    const nn::Mat f = encode_coordinates(Coords3::Zero(1, 3), w);
    REQUIRE(f.cols() == 48);
    for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 8; ++k) {
            CHECK(f(0, a * 16 + k) == 0.0);
            CHECK(f(0, a * 16 + 8 + k) == 1.0);
        }
    CHECK(w(0) == doctest::Approx(3.14159265358979 / 1000.0));
    CHECK(w(7) == doctest::Approx(128 * 3.14159265358979 / 1000.0));
}

TEST_CASE("encoding: unit coordinate at unit frequency")
{
    Eigen::VectorXd w(1);
    w << 1.0;
    Coords3 c(1, 3);
    c << 1.0, 0.0, 0.0;
    const nn::Mat f = encode_coordinates(c, w);
    CHECK(f(0, 0) == doctest::Approx(0.84147).epsilon(1e-5));
    CHECK(f(0, 1) == doctest::Approx(0.54030).epsilon(1e-5));
}

TEST_CASE("training mask: branch and marginal frequencies")
{
    const auto& layout = KeypointLayout::builtin();
    nn::Rng rng(17);
    const int draws = 100000;
    std::vector<int> category(6, 0); // per-keypoint branch, then the five blocks
    std::vector<int> masked(133, 0);
    for (int i = 0; i < draws; ++i) {
        const auto d = draw_training_mask(layout, rng);
        category[d.block_branch ? 1 + d.block : 0]++;
        for (int r = 0; r < 133; ++r)
            masked[r] += d.mask[r];
    }
    const double block_freq = 1.0 - static_cast<double>(category[0]) / draws;
    CHECK(std::abs(block_freq - 0.5) < 0.01);

    // Chi-square over {per-keypoint, body, left hand, right hand, left face, right face}, df = 5.
    const double expect[6] = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
    double chi2 = 0.0;
    for (int c = 0; c < 6; ++c) {
        const double e = expect[c] * draws;
        chi2 += (category[c] - e) * (category[c] - e) / e;
    }
    CHECK(chi2 < 15.086);

    const int hand = layout.left_hand_range().first; // 1-based id of a left-hand keypoint
    CHECK(std::abs(masked[hand - 1] / static_cast<double>(draws) - 0.175) < 0.005);

    // Every keypoint's marginal against its analytic rate, 1% two-sided normal bound
    // corrected for 133 comparisons.
    for (int r = 0; r < 133; ++r) {
        double block = 0.0;
        block += std::count(layout.rows(Part::body).begin(), layout.rows(Part::body).end(), r) ? 0.2 : 0.0;
        block += std::count(layout.rows(Part::left_hand).begin(), layout.rows(Part::left_hand).end(), r) ? 0.2 : 0.0;
        block += std::count(layout.rows(Part::right_hand).begin(), layout.rows(Part::right_hand).end(), r) ? 0.2 : 0.0;
        block += std::count(layout.left_face_rows().begin(), layout.left_face_rows().end(), r) ? 0.2 : 0.0;
        block += std::count(layout.right_face_rows().begin(), layout.right_face_rows().end(), r) ? 0.2 : 0.0;
        const double p = 0.5 * 0.15 + 0.5 * block;
        const double z = (masked[r] - p * draws) / std::sqrt(draws * p * (1 - p));
        CHECK(std::abs(z) < 4.0);
    }
}

TEST_CASE("training mask: seeded draws reproduce and keep a known keypoint")
{
    const auto& layout = KeypointLayout::builtin();
    CHECK(sample_training_mask(layout, 5) == sample_training_mask(layout, 5));
    nn::Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const auto m = draw_training_mask(layout, rng).mask;
        CHECK(std::count(m.begin(), m.end(), 0) > 0);
    }
}

TEST_CASE("config: standard curriculum and validation")
{
    const auto c = CompletionNetConfig::standard();
    REQUIRE(c.curriculum.size() == 4);
    CHECK(c.curriculum[0].size() == 17);
    CHECK(c.curriculum[1].size() == 23);
    CHECK(c.curriculum[2].size() == 91);
    CHECK(c.curriculum[3].size() == 133);
    CHECK(c.token_features() == 48);
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    std::swap(bad.curriculum[1], bad.curriculum[2]);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.curriculum[1] = bad.curriculum[0];
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.curriculum[3].pop_back();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK(CompletionNetConfig::from_json(c.to_json()).curriculum == c.curriculum);
}

TEST_CASE("forward: shapes, pass-through and determinism")
{
    const CompletionNet net(CompletionNetConfig::standard(), 11);
    const Rig rig = Rig::corner_rig();
    const auto samples = corpus(2, 4, rig);
    const Coords3& pose = samples[0].pose;

    const MaskPattern none(133, 0);
    const auto out = net.forward(pose, none);
    REQUIRE(out.blocks.size() == 4);
    for (const auto& b : out.blocks) {
        CHECK(b.rows() == 133);
        CHECK(b.cols() == 3);
    }
    CHECK(out.completed == pose);

    const auto mask = sample_training_mask(KeypointLayout::builtin(), 8);
    const auto a = CompletionNet(CompletionNetConfig::standard(), 11).forward(pose, mask);
    const auto b = net.forward(pose, mask);
    for (size_t i = 0; i < 4; ++i)
        CHECK(a.blocks[i] == b.blocks[i]);
    for (int r = 0; r < 133; ++r)
        if (!mask[r])
            CHECK(b.completed.row(r) == pose.row(r));

    // Translation moves the prediction with the input (centroid-relative encoding).
    Coords3 shifted = pose;
    shifted.rowwise() += Eigen::RowVector3d(64, -128, 32);
    const auto c = net.forward(shifted, mask);
    CHECK((c.blocks[3].rowwise() - Eigen::RowVector3d(64, -128, 32) - b.blocks[3]).cwiseAbs().maxCoeff() < 1e-6);

    MaskPattern all(133, 1);
    CHECK_THROWS_AS(net.forward(pose, all), ValidationError);
    CHECK_THROWS_AS(net.forward(pose, MaskPattern(5, 0)), ValidationError);
}

TEST_CASE("loss: perfect prediction on a symmetric pose is zero")
{
    const auto layout = toy_layout();
    const auto cfg = toy_config();
    const Coords3 gt = toy_pose();
    Coords3 sym = gt;
    sym.row(4) << -260, 40, 1000; // exact mirror of keypoint 4
    sym.row(2) << -180, 10, 1350;
    CompletionNet::Output out{{sym, sym}, sym};
    const MaskPattern mask{0, 0, 1, 1, 1};
    const auto L = completion_loss(out, sym, std::nullopt, mask, {}, cfg, layout);
    CHECK(L.total == 0.0);
    CHECK(L.lsym == 0.0);
}

TEST_CASE("loss: l1 of a (3, 4, 0) offset is 7 mm")
{
    const auto layout = toy_layout();
    const auto cfg = toy_config();
    const Coords3 gt = toy_pose();
    Coords3 pred = gt;
    pred.row(3) += Eigen::RowVector3d(3, 4, 0);
    CompletionNet::Output out{{pred, pred}, pred};
    const MaskPattern mask{0, 0, 0, 1, 0};
    const auto L = completion_loss(out, gt, std::nullopt, mask, {0.0, 0.0}, cfg, layout);
    // Only the final block supervises keypoint 4; its mean runs over 5 keypoints.
    CHECK(L.l3d * 5.0 == doctest::Approx(7.0));
    CHECK(L.total == doctest::Approx(7.0 / 5.0));
}

TEST_CASE("loss: zero weights leave only the 3D term")
{
    const auto layout = toy_layout();
    const auto cfg = toy_config();
    const Rig rig = Rig::corner_rig();
    const Coords3 gt = toy_pose();
    std::vector<Pose2D> views;
    for (const auto& cam : rig.cameras())
        views.push_back(project_pose(Pose3D{gt, Frame::world}, cam));
    Coords3 p0 = gt, p1 = gt;
    p0.row(1) += Eigen::RowVector3d(10, -5, 2);
    p1.row(4) += Eigen::RowVector3d(-20, 7, 1);
    p1.row(1) += Eigen::RowVector3d(4, 4, 4);
    CompletionNet::Output out{{p0, p1}, gt};
    out.completed.row(1) = p1.row(1);
    out.completed.row(4) = p1.row(4);
    const MaskPattern mask{0, 1, 0, 0, 1};
    const CompletionViews cv{&rig, views};
    const auto zero = completion_loss(out, gt, cv, mask, {0.0, 0.0}, cfg, layout);
    CHECK(zero.total == zero.l3d);
    CHECK(zero.l3d == doctest::Approx(17.0 / 3.0 + (12.0 + 28.0) / 5.0));
    const auto full = completion_loss(out, gt, cv, mask, {0.1, 0.01}, cfg, layout);
    CHECK(full.l3d == zero.l3d);
    CHECK(full.l2d > 0.0);
    CHECK(full.lsym > 0.0);
    CHECK(full.total == doctest::Approx(full.l3d + 0.1 * full.l2d + 0.01 * full.lsym));
    CHECK_THROWS_AS(completion_loss(out, gt, cv, mask, {-1.0, 0.0}, cfg, layout), ValidationError);
}

TEST_CASE("loss gradient matches central differences on a tiny network")
{
    const auto layout = toy_layout();
    const auto cfg = toy_config();
    const Rig rig = Rig::corner_rig();
    CompletionNet net(cfg, 21);
    const Coords3 gt = toy_pose();
    std::vector<Pose2D> views;
    for (const auto& cam : rig.cameras())
        views.push_back(project_pose(Pose3D{gt, Frame::world}, cam));
    views[2].visible[3] = 0;
    const CompletionViews cv{&rig, views};
    const MaskPattern mask{0, 1, 0, 1, 1};
    const CompletionLossConfig lc{0.1, 0.01};

    auto loss = [&] { return completion_loss(net.forward(gt, mask), gt, cv, mask, lc, cfg, layout).total; };

    CompletionNet::Tape tape;
    const auto out = net.forward(gt, mask, tape);
    std::vector<Coords3> d;
    completion_loss(out, gt, cv, mask, lc, cfg, layout, &d);
    nn::Gradients g = net.parameters().zeros();
    net.backward(tape, d, g);

    auto& p = net.parameters();
    const double h = 1e-6;
    double num = 0.0, den = 0.0, worst = 0.0;
    int checked = 0;
    for (int id = 0; id < p.size(); ++id)
        for (Eigen::Index i = 0; i < p[id].size(); ++i) {
            const double orig = p[id].data()[i];
            p[id].data()[i] = orig + h;
            const double up = loss();
            p[id].data()[i] = orig - h;
            const double down = loss();
            p[id].data()[i] = orig;
            const double fd = (up - down) / (2 * h);
            const double an = g[id].data()[i];
            num += (fd - an) * (fd - an);
            den += fd * fd;
            worst = std::max(worst, std::abs(fd - an) / std::max(1e-2, std::abs(fd) + std::abs(an)));
            ++checked;
        }
    CHECK(checked > 500);
    CHECK(std::sqrt(num / den) < 1e-4);
    CHECK(worst < 1e-4);
}

TEST_CASE("complete: contract and checkpoint round trip")
{
    const auto& layout = KeypointLayout::builtin();
    CompletionNet net(CompletionNetConfig::standard(), 2);
    const Rig rig = Rig::corner_rig();
    const auto samples = corpus(1, 9, rig);
    Pose3D pose{samples[0].pose, Frame::world};
    std::vector<KeypointStatus> st(133, KeypointStatus::triangulated);
    CHECK_THROWS_AS(complete(net, pose, st), Error);
    net.mark_trained();
    CHECK(complete(net, pose, st).coords == pose.coords);

    for (int r : layout.rows(Part::left_hand))
        st[r] = KeypointStatus::seen_once;
    const auto done = complete(net, pose, st);
    int changed = 0;
    for (int r = 0; r < 133; ++r) {
        if (st[r] == KeypointStatus::triangulated)
            CHECK(done.coords.row(r) == pose.coords.row(r));
        else
            changed += done.coords.row(r) != pose.coords.row(r);
    }
    CHECK(changed == 21);

    const auto path = std::filesystem::temp_directory_path() / "wbforge_completion.ckpt";
    net.save(path, {{"layout", layout.tag()}});
    const auto loaded = CompletionNet::load(path);
    CHECK(loaded.trained());
    CHECK(complete(loaded, pose, st).coords == done.coords);
    std::filesystem::remove(path);
}

TEST_CASE("training: loss falls and the net beats the mean pose")
{
    const auto& layout = KeypointLayout::builtin();
    const Rig rig = Rig::corner_rig();
    const auto train = corpus(400, 100, rig);
    const auto val = corpus(40, 200, rig);

    CompletionTrainConfig tc;
    tc.epochs = 4;
    tc.batch = 4;
    tc.seed = 1;
    CompletionNet net(CompletionNetConfig::standard(), 1);
    const auto h = train_completion(net, train, val, &rig, {}, tc, layout);
    REQUIRE(h.train_loss.size() >= 2);
    CHECK(h.train_loss.back() < h.train_loss.front());
    CHECK(h.best_val_mpjpe < h.initial_val_mpjpe);
    CHECK(net.trained());

    std::vector<MaskPattern> masks;
    nn::Rng rng(77);
    for (size_t i = 0; i < val.size(); ++i)
        masks.push_back(draw_training_mask(layout, rng).mask);
    const double mean_err = MeanPoseCompleter(train).masked_mpjpe(val, masks);
    const double net_err = masked_mpjpe(net, val, masks);
    MESSAGE("net " << net_err << " mm, mean pose " << mean_err << " mm");
    CHECK(net_err < mean_err);
}

TEST_CASE("training: deterministic and the symmetry term changes the result")
{
    const auto& layout = KeypointLayout::builtin();
    const Rig rig = Rig::corner_rig();
    const auto train = corpus(24, 300, rig);
    const auto val = corpus(8, 400, rig);
    CompletionTrainConfig tc;
    tc.epochs = 2;
    tc.batch = 4;
    tc.seed = 3;

    auto run = [&](CompletionLossConfig lc) {
        CompletionNet net(CompletionNetConfig::standard(), 5);
        const auto h = train_completion(net, train, val, &rig, lc, tc, layout);
        double sym = 0.0;
        nn::Rng rng(9);
        for (const auto& s : val)
            sym += symmetric_length_error(net.forward(s.pose, draw_training_mask(layout, rng).mask).completed, layout);
        return std::pair{h.train_loss, sym};
    };
    const auto a = run({0.1, 0.01});
    const auto b = run({0.1, 0.01});
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    const auto off = run({0.0, 0.0});
    CHECK(off.second != a.second);
}

TEST_CASE("training: divergence aborts")
{
    const auto& layout = KeypointLayout::builtin();
    const Rig rig = Rig::corner_rig();
    auto train = corpus(4, 500, rig);
    CompletionTrainConfig tc;
    tc.epochs = 1;
    tc.batch = 4;
    CompletionNet net(CompletionNetConfig::standard(), 5);

    auto bad_pose = train;
    bad_pose[1].pose(3, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_completion(net, bad_pose, {}, &rig, {}, tc, layout), ValidationError);

    // A corrupt detection makes the 2D term, and so the loss, NaN.
    for (auto& s : train)
        for (auto& v : s.views)
            for (int r = 0; r < 133; ++r)
                if (v.is_visible(r))
                    v.coords(r, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_completion(net, train, {}, &rig, {}, tc, layout), DivergenceError);
}
