#include <doctest.h>

#include <random>

#include <Eigen/Geometry>

#include "wbforge/errors.hpp"
#include "wbforge/skeleton/layout.hpp"
#include "wbforge/skeleton/normalizer.hpp"
#include "wbforge/skeleton/pose.hpp"
#include "wbforge/synth/generator.hpp"

using namespace wbforge;

namespace {

const KeypointLayout& L()
{
    return KeypointLayout::builtin();
}

Coords3 random_coords(std::uint64_t seed, int n = 133)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1000.0, 1000.0);
    Coords3 c(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
            c(i, a) = d(rng);
    return c;
}

} // namespace

TEST_CASE("builtin layout ranges and roots")
{
    const auto& l = L();
    CHECK(l.total() == 133);
    CHECK(l.body_range().first == 1);
    CHECK(l.body_range().last == 23);
    CHECK(l.face_range().first == 24);
    CHECK(l.face_range().last == 91);
    CHECK(l.left_hand_range().first == 92);
    CHECK(l.right_hand_range().last == 133);
    CHECK(l.nose().value == 1);
    CHECK(l.left_wrist().value == 92);
    CHECK(l.right_wrist().value == 113);
    CHECK(l.hips().first.value == 12);
    CHECK(l.hips().second.value == 13);
}

TEST_CASE("part slices")
{
    const auto& l = L();
    CHECK(l.rows(Part::face).size() == 68);
    CHECK(l.rows(Part::face).front() == 23);
    CHECK(l.rows(Part::hands).size() == 42);
    CHECK(l.rows(Part::hands).front() == 91);
    CHECK(l.rows(Part::all).size() == 133);
    CHECK(l.rows(Part::body).size() == 23);

    Pose3D p{random_coords(1), Frame::world};
    auto face = part_slice(p, l, Part::face);
    CHECK(face.size() == 68);
    CHECK(face.coords.row(0) == p.coords.row(23));
    CHECK(part_slice(p, l, Part::all).coords == p.coords);

    // Ranges partition the pose: concatenating the slices in order rebuilds it.
    Coords3 joined(133, 3);
    int at = 0;
    for (Part part : {Part::body, Part::face, Part::left_hand, Part::right_hand}) {
        auto s = part_slice(p.coords, l, part);
        joined.middleRows(at, s.rows()) = s;
        at += static_cast<int>(s.rows());
    }
    CHECK(at == 133);
    CHECK(joined == p.coords);

    CHECK_THROWS_AS(part_from_string("torso"), ValidationError);
    CHECK(part_from_string("left_hand") == Part::left_hand);
}

TEST_CASE("mirror map is an involution")
{
    const auto& l = L();
    for (int r = 0; r < 133; ++r)
        CHECK(l.mirror_row(l.mirror_row(r)) == r);
    for (auto [a, b] : l.mirror_pairs()) {
        CHECK(l.mirror_row(a.row()) == b.row());
        CHECK(a != b);
    }
    CHECK(l.mirror_row(91) == 112); // left hand root <-> right hand root
    CHECK(l.mirror_row(0) == 0);    // nose on the midline
}

TEST_CASE("mirror of a symmetric pose is itself")
{
    SyntheticPoseGenerator gen(GeneratorConfig::rest());
    const Coords3 t = gen.template_pose();
    CHECK((mirror(t, L()) - t).cwiseAbs().maxCoeff() < 1e-9);
    const Coords3 r = random_coords(3);
    CHECK(mirror(mirror(r, L()), L()) == r);
}

TEST_CASE("center_on")
{
    const auto& l = L();
    Pose3D p{random_coords(2), Frame::world};
    auto c = center_on(p, Root::pelvis, l);
    CHECK(pelvis(c.coords, l).norm() < 1e-12);
    // Idempotent and translation invariant (up to rounding for arbitrary doubles).
    CHECK((center_on(c, Root::pelvis, l).coords - c.coords).cwiseAbs().maxCoeff() < 1e-9);
    Pose3D moved = p;
    moved.coords.col(0).array() += 100.0;
    auto cm = center_on(moved, Root::pelvis, l);
    CHECK((cm.coords - c.coords).cwiseAbs().maxCoeff() < 1e-9);

    auto cn = center_on(p, Root::nose, l);
    CHECK(cn.coords.row(0).norm() == 0.0);
    auto cw = center_on(p, Root::right_wrist, l);
    CHECK(cw.coords.row(112).norm() == 0.0);
}

TEST_CASE("center_on is exact on dyadic coordinates")
{
    // Multiples of 1/64 mm and a dyadic shift keep every operation exact.
    Coords3 c = (random_coords(4) * 64.0).array().round() / 64.0;
    Pose3D p{c, Frame::world};
    Pose3D q = p;
    q.coords.rowwise() += Eigen::RowVector3d(100.0, -250.5, 37.25);
    CHECK(center_on(q, Root::pelvis, L()).coords == center_on(p, Root::pelvis, L()).coords);
    const auto once = center_on(p, Root::pelvis, L());
    CHECK(center_on(once, Root::pelvis, L()).coords == once.coords);
}

TEST_CASE("hip midpoint on a toy pose")
{
    Coords3 c = Coords3::Zero(133, 3);
    c.row(11) << 0.0, 0.0, 0.0;
    c.row(12) << 2.0, 0.0, 0.0;
    c.row(0) << 5.0, 5.0, 5.0;
    auto out = center_on(Pose3D{c, Frame::world}, Root::pelvis, L());
    CHECK(out.coords(0, 0) == doctest::Approx(4.0));
    CHECK(out.coords(11, 0) == doctest::Approx(-1.0));
    CHECK(out.coords(12, 0) == doctest::Approx(1.0));
    CHECK(out.coords(50, 0) == doctest::Approx(-1.0));
}

TEST_CASE("symmetric_length_error")
{
    const auto& l = L();
    SyntheticPoseGenerator gen(GeneratorConfig::rest());
    Coords3 t = gen.template_pose();
    CHECK(symmetric_length_error(t, l) == doctest::Approx(0.0).epsilon(1e-12));

    // Left forearm (8 -> 10) 2 mm longer than the right one.
    Coords3 s = t;
    const Eigen::RowVector3d dir = (s.row(9) - s.row(7)).normalized();
    const Eigen::RowVector3d shift = 2.0 * dir;
    s.row(9) += shift;
    // Carry the hand along so no other bone changes.
    for (int r : l.rows(Part::left_hand))
        s.row(r) += shift;
    CHECK(symmetric_length_error(s, l) == doctest::Approx(2.0).epsilon(1e-9));

    // Rotation invariance.
    const Eigen::Matrix3d R = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
    Coords3 rot = s * R.transpose();
    CHECK(symmetric_length_error(rot, l) == doctest::Approx(2.0).epsilon(1e-9));

    const Coords3 r = random_coords(9);
    CHECK(symmetric_length_error(r, l) > 0.0);
}

TEST_CASE("symmetric_length_error gradient")
{
    const auto& l = L();
    const Coords3 c = random_coords(5);
    Coords3 g;
    symmetric_length_error(c, l, &g);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const int row = (trial * 37) % 133, axis = trial % 3;
        Coords3 a = c, b = c;
        a(row, axis) += h;
        b(row, axis) -= h;
        const double fd = (symmetric_length_error(a, l) - symmetric_length_error(b, l)) / (2 * h);
        CHECK(g(row, axis) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("normalizers")
{
    const auto& l = L();
    Eigen::MatrixXd rows(50, 133 * 3);
    for (int i = 0; i < 50; ++i) {
        const Coords3 c = random_coords(100 + i);
        rows.row(i) = Eigen::Map<const Eigen::RowVectorXd>(c.data(), 133 * 3);
    }
    auto ms = Normalizer::fit_mean_std(rows);
    auto z = ms.normalize(ms.mean());
    CHECK(z.values.cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd x = rows.row(3).transpose();
    const auto back = ms.denormalize(ms.normalize(x));
    CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-9 * x.cwiseAbs().maxCoeff());

    auto pf = Normalizer::pelvis_frobenius(l, 3);
    auto n = pf.normalize(x);
    CHECK(n.values.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const auto back2 = pf.denormalize(n);
    CHECK((back2 - x).cwiseAbs().maxCoeff() <= 1e-9 * x.cwiseAbs().maxCoeff());

    Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(5, 6);
    CHECK_THROWS_AS(Normalizer::fit_mean_std(constant), DegenerateInputError);
    Eigen::VectorXd collapsed = Eigen::VectorXd::Constant(133 * 3, 7.0);
    CHECK_THROWS_AS(pf.normalize(collapsed), DegenerateInputError);

    auto reloaded = Normalizer::from_json(ms.to_json(), l);
    CHECK(reloaded.normalize(x).values == ms.normalize(x).values);
}

TEST_CASE("layout file validation")
{
    auto doc = L().to_json();
    auto round = KeypointLayout::from_json(doc);
    CHECK(round.bones().size() == L().bones().size());

    auto no_version = doc;
    no_version.erase("schema_version");
    CHECK_THROWS_AS(KeypointLayout::from_json(no_version), SchemaError);

    auto gap = doc;
    gap["ranges"]["face"] = {25, 91};
    CHECK_THROWS(KeypointLayout::from_json(gap));

    auto bad_pair = doc;
    bad_pair["mirror_pairs"].push_back({2, 2});
    CHECK_THROWS(KeypointLayout::from_json(bad_pair));
}
