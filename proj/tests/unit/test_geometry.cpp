#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "wbforge/errors.hpp"
#include "wbforge/geometry/camera.hpp"
#include "wbforge/geometry/triangulation.hpp"

using namespace wbforge;

namespace {

CameraModel identity_camera(double f = 1000.0)
{
    CameraModel c;
    c.id = "cam";
    c.K << f, 0, 320, 0, f, 240, 0, 0, 1;
    c.width = 640;
    c.height = 480;
    return c;
}

Eigen::Vector3d random_point(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> xy(-1000.0, 1000.0), z(0.0, 2000.0);
    return {xy(rng), xy(rng), z(rng)};
}

std::vector<Observation> observe(const Eigen::Vector3d& X, const Rig& rig)
{
    std::vector<Observation> obs;
    for (int v = 0; v < rig.size(); ++v)
        obs.push_back({v, project(X, rig.camera(v)).uv});
    return obs;
}

} // namespace

TEST_CASE("projection basics")
{
    auto cam = identity_camera();
    auto p = project({0, 0, 1500}, cam);
    CHECK(p.uv.x() == doctest::Approx(320.0));
    CHECK(p.uv.y() == doctest::Approx(240.0));
    CHECK(p.depth == doctest::Approx(1500.0));

    auto q1 = project({100, -50, 2000}, cam);
    auto cam2 = identity_camera(2000.0);
    auto q2 = project({100, -50, 2000}, cam2);
    CHECK((q2.uv - Eigen::Vector2d(320, 240)).x() == doctest::Approx(2.0 * (q1.uv - Eigen::Vector2d(320, 240)).x()));
    CHECK((q2.uv - Eigen::Vector2d(320, 240)).y() == doctest::Approx(2.0 * (q1.uv - Eigen::Vector2d(320, 240)).y()));

    // Out-of-image points are flagged, not clamped.
    auto far = project({5000, 0, 1000}, cam);
    CHECK_FALSE(far.in_image);
    CHECK(far.uv.x() > 640.0);

    CHECK_THROWS_AS(project({0, 0, -1}, cam), BehindCameraError);
}

TEST_CASE("projection matches a homogeneous matrix oracle")
{
    std::mt19937_64 rng(11);
    const Rig rig = Rig::corner_rig();
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector3d X = random_point(rng);
        for (const auto& cam : rig.cameras()) {
            Eigen::Matrix<double, 3, 4> Rt;
            Rt << cam.R, cam.t;
            const Eigen::Vector3d h = cam.K * (Rt * Eigen::Vector4d(X.x(), X.y(), X.z(), 1.0));
            const Eigen::Vector2d oracle(h.x() / h.z(), h.y() / h.z());
            CHECK((project(X, cam).uv - oracle).norm() < 1e-9);
        }
    }
}

TEST_CASE("camera center has zero depth and is rejected")
{
    const Rig rig = Rig::corner_rig();
    for (const auto& cam : rig.cameras())
        CHECK_THROWS_AS(project(cam.center(), cam), BehindCameraError);
}

TEST_CASE("camera and rig validation and JSON")
{
    const Rig rig = Rig::corner_rig();
    for (const auto& cam : rig.cameras()) {
        CHECK_NOTHROW(cam.validate());
        auto back = CameraModel::from_json(cam.to_json());
        CHECK((back.R - cam.R).cwiseAbs().maxCoeff() == 0.0);
        CHECK((back.t - cam.t).cwiseAbs().maxCoeff() == 0.0);
    }
    auto bad = rig.camera(0);
    bad.R(0, 0) += 1e-3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    auto neg = rig.camera(0);
    neg.K(0, 0) = -1;
    CHECK_THROWS_AS(neg.validate(), ValidationError);

    auto cams = rig.cameras();
    cams.pop_back();
    CHECK_THROWS_AS(Rig(cams, {}), ValidationError);
    CHECK_THROWS_AS(Rig(rig.cameras(), {{"c1", "c9"}}), ValidationError);

    auto again = Rig::from_json(rig.to_json());
    CHECK(again.opposing(0, 2));
    CHECK(again.opposing(1, 3));
    CHECK_FALSE(again.opposing(0, 1));
}

TEST_CASE("triangulation round trip")
{
    const Rig rig = Rig::corner_rig();
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d X = random_point(rng);
        auto tp = triangulate(observe(X, rig), rig);
        CHECK((tp.point - X).norm() < 1e-6);
        CHECK(tp.rms_residual_px < 1e-6);
    }
}

TEST_CASE("triangulation is invariant to observation order")
{
    const Rig rig = Rig::corner_rig();
    std::mt19937_64 rng(6);
    std::normal_distribution<double> noise(0.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        auto obs = observe(random_point(rng), rig);
        for (auto& o : obs)
            o.uv += Eigen::Vector2d(noise(rng), noise(rng));
        const auto a = triangulate(obs, rig);
        std::reverse(obs.begin(), obs.end());
        const auto b = triangulate(obs, rig);
        std::swap(obs[0], obs[2]);
        const auto c = triangulate(obs, rig);
        CHECK((a.point - b.point).norm() < 1e-6);
        CHECK((a.point - c.point).norm() < 1e-6);
    }
}

TEST_CASE("degenerate and insufficient observations")
{
    const Rig rig = Rig::corner_rig();
    const Eigen::Vector3d X(100, 200, 900);
    auto obs = observe(X, rig);
    CHECK_THROWS_AS(triangulate(std::span(obs.data(), 1), rig), InsufficientViewsError);

    // Two cameras at the same pose: zero baseline.
    auto cams = rig.cameras();
    cams[1] = cams[0];
    cams[1].id = "dup";
    Rig twin(cams, {{"c1", "c3"}});
    const Observation same[2] = {{0, project(X, twin.camera(0)).uv}, {1, project(X, twin.camera(1)).uv}};
    CHECK_THROWS_AS(triangulate(same, twin), DegenerateGeometryError);

    // Only an opposing pair.
    const Observation opp[2] = {obs[0], obs[2]};
    CHECK_THROWS_AS(triangulate(opp, rig), DegenerateGeometryError);
}

TEST_CASE("triangulation noise agrees with first-order error propagation")
{
    // Oracle: for isotropic pixel noise sigma, the linearised estimator has
    // covariance sigma^2 (J^T J)^-1 where J stacks the projection Jacobians.
    const Rig rig = Rig::corner_rig();
    const Eigen::Vector3d X(150.0, -80.0, 1100.0);
    Eigen::MatrixXd J(8, 3);
    for (int v = 0; v < 4; ++v) {
        const auto& cam = rig.camera(v);
        const Eigen::Vector3d pc = cam.to_camera(X);
        Eigen::Matrix<double, 2, 3> dproj;
        const double fx = cam.K(0, 0), fy = cam.K(1, 1), z = pc.z();
        dproj << fx / z, 0, -fx * pc.x() / (z * z), 0, fy / z, -fy * pc.y() / (z * z);
        J.middleRows(2 * v, 2) = dproj * cam.R;
    }
    const double sigma = 1.0;
    const Eigen::Matrix3d cov = sigma * sigma * (J.transpose() * J).inverse();
    const double predicted_rms = std::sqrt(cov.trace());

    std::mt19937_64 rng(21);
    std::normal_distribution<double> noise(0.0, sigma);
    const auto clean = observe(X, rig);
    double sq = 0.0, worst = 0.0;
    bool residual_positive = true;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        auto obs = clean;
        for (auto& o : obs)
            o.uv += Eigen::Vector2d(noise(rng), noise(rng));
        const auto tp = triangulate(obs, rig);
        const double e = (tp.point - X).norm();
        sq += e * e;
        worst = std::max(worst, e);
        residual_positive = residual_positive && tp.rms_residual_px > 0.0;
    }
    const double mc_rms = std::sqrt(sq / trials);
    CHECK(residual_positive);
    CHECK(mc_rms == doctest::Approx(predicted_rms).epsilon(0.1));
    // A 3D Gaussian exceeds 5 standard radii with negligible probability.
    CHECK(worst < 5.0 * predicted_rms);
    MESSAGE("1 px noise: predicted RMS " << predicted_rms << " mm, Monte-Carlo " << mc_rms << " mm");
}

TEST_CASE("pose triangulation statuses")
{
    const Rig rig = Rig::corner_rig();
    const int n = 6;
    Coords3 X(n, 3);
    std::mt19937_64 rng(8);
    for (int k = 0; k < n; ++k)
        X.row(k) = random_point(rng).transpose();

    std::vector<Pose2D> views(4);
    for (int v = 0; v < 4; ++v) {
        Coords2 uv(n, 2);
        for (int k = 0; k < n; ++k)
            uv.row(k) = project(X.row(k).transpose(), rig.camera(v)).uv.transpose();
        views[v] = Pose2D::all_visible(uv);
    }
    // k0 everywhere, k1 in c1+c2, k2 only c1, k3 only opposing c1+c3, k4 nowhere,
    // k5 visible but with a low confidence in all but one view.
    auto hide = [&](int k, std::initializer_list<int> vs) {
        for (int v : vs)
            views[v].visible[k] = 0;
    };
    hide(1, {2, 3});
    hide(2, {1, 2, 3});
    hide(3, {1, 3});
    hide(4, {0, 1, 2, 3});
    for (int v = 1; v < 4; ++v)
        views[v].confidence[5] = 0.3;

    auto out = triangulate_pose(views, rig);
    CHECK(out.status[0] == KeypointStatus::triangulated);
    CHECK(out.status[1] == KeypointStatus::triangulated);
    CHECK(out.status[2] == KeypointStatus::seen_once);
    CHECK(out.status[3] == KeypointStatus::opposing_only);
    CHECK(out.status[4] == KeypointStatus::unseen);
    CHECK(out.status[5] == KeypointStatus::seen_once);
    CHECK((out.pose.coords.row(0) - X.row(0)).norm() < 1e-6);
    CHECK((out.pose.coords.row(1) - X.row(1)).norm() < 1e-6);

    TriangulationOptions best;
    best.mode = ViewMode::best_pair;
    auto bp = triangulate_pose(views, rig, best);
    CHECK((bp.pose.coords.row(0) - X.row(0)).norm() < 1e-6);

    CHECK(classify_pose(out.status) == PoseClass::rejected);
    std::vector<KeypointStatus> inc(133, KeypointStatus::triangulated);
    for (int k = 0; k < 10; ++k)
        inc[k] = KeypointStatus::seen_once;
    CHECK(classify_pose(inc) == PoseClass::incomplete);
    inc[50] = KeypointStatus::opposing_only;
    CHECK(classify_pose(inc) == PoseClass::incomplete);
    std::vector<KeypointStatus> all(133, KeypointStatus::triangulated);
    CHECK(classify_pose(all) == PoseClass::complete);
}

TEST_CASE("select_views")
{
    const Rig rig = Rig::corner_rig();
    auto set_with_variance = [](double var) {
        Coords2 c(2, 2);
        const double a = std::sqrt(var);
        c << 500 - a, 500, 500 + a, 500;
        return c;
    };
    SUBCASE("highest minimum variance, ties to the lowest pair")
    {
        std::vector<Coords2> p{set_with_variance(9), set_with_variance(1), set_with_variance(8),
                               set_with_variance(2)};
        CHECK(coordinate_variance(p[0]) == doctest::Approx(9.0));
        auto sel = select_views(p, rig);
        CHECK(sel == std::pair<int, int>{0, 3});
    }
    SUBCASE("min and mean aggregation can disagree")
    {
        // min: (2,3)->min 4 ties (3,4)->min 4, lower pair wins; mean: (3,4) averages 4.75.
        std::vector<Coords2> p{set_with_variance(1), set_with_variance(5), set_with_variance(4),
                               set_with_variance(5.5)};
        CHECK(select_views(p, rig) == std::pair<int, int>{1, 2});
        CHECK(select_views(p, rig, VarianceAggregation::mean) == std::pair<int, int>{2, 3});
    }
    SUBCASE("identical variance")
    {
        std::vector<Coords2> p(4, set_with_variance(4));
        CHECK(select_views(p, rig) == std::pair<int, int>{0, 1});
    }
    SUBCASE("collapsed view is avoided")
    {
        std::vector<Coords2> p{set_with_variance(0), set_with_variance(5), set_with_variance(6),
                               set_with_variance(7)};
        auto sel = select_views(p, rig);
        CHECK(sel.first != 0);
        CHECK(sel.second != 0);
        CHECK_FALSE(rig.opposing(sel.first, sel.second));
    }
}
