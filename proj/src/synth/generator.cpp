#include "wbforge/synth/generator.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "wbforge/errors.hpp"

namespace wbforge {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix3d euler(const Eigen::Vector3d& a)
{
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    if (a.z() != 0.0)
        R = R * Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()).toRotationMatrix();
    if (a.y() != 0.0)
        R = R * Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()).toRotationMatrix();
    if (a.x() != 0.0)
        R = R * Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()).toRotationMatrix();
    return R;
}

double draw(std::mt19937_64& rng, double lo, double hi)
{
    if (lo == hi)
        return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

AngleRange range(Eigen::Vector3d lo, Eigen::Vector3d hi)
{
    return AngleRange{lo, hi};
}

// Face landmarks (68-point ordering) relative to the face center: x (subject left
// positive), y depth (forward), z up.
std::vector<Eigen::Vector3d> face_template()
{
    std::vector<Eigen::Vector3d> f(68);
    for (int i = 0; i <= 16; ++i) {
        const double th = kPi * i / 16.0;
        f[i] = {-65.0 * std::cos(th), 40.0 + 45.0 * std::sin(th), 10.0 - 90.0 * std::sin(th)};
    }
    const double brow_x[5] = {-55, -44, -33, -22, -12};
    const double brow_z[5] = {40, 45, 47, 46, 43};
    for (int i = 0; i < 5; ++i) {
        f[17 + i] = {brow_x[i], 85.0, brow_z[i]};
        f[26 - i] = {-brow_x[i], 85.0, brow_z[i]};
    }
    const double bridge_z[4] = {30, 18, 6, -6};
    const double bridge_y[4] = {95, 100, 106, 112};
    for (int i = 0; i < 4; ++i)
        f[27 + i] = {0.0, bridge_y[i], bridge_z[i]};
    const double nb_x[5] = {-18, -9, 0, 9, 18};
    const double nb_z[5] = {-18, -20, -21, -20, -18};
    const double nb_y[5] = {92, 96, 98, 96, 92};
    for (int i = 0; i < 5; ++i)
        f[31 + i] = {nb_x[i], nb_y[i], nb_z[i]};
    // Right eye 36-41 (subject's right, negative x), left eye 42-47 mirrored.
    const double eye[6][2] = {{-47, 22}, {-37, 27}, {-27, 27}, {-17, 22}, {-27, 18}, {-37, 18}};
    for (int i = 0; i < 6; ++i)
        f[36 + i] = {eye[i][0], 82.0, eye[i][1]};
    const int left_eye_of[6] = {45, 44, 43, 42, 47, 46};
    for (int i = 0; i < 6; ++i)
        f[left_eye_of[i]] = {-eye[i][0], 82.0, eye[i][1]};
    const double outer[12][2] = {{-25, -40}, {-15, -34}, {-6, -32}, {0, -33}, {6, -32}, {15, -34},
                                 {25, -40},  {15, -47},  {6, -50},  {0, -50}, {-6, -50}, {-15, -47}};
    for (int i = 0; i < 12; ++i)
        f[48 + i] = {outer[i][0], 90.0 + 6.0 * (1.0 - std::abs(outer[i][0]) / 25.0), outer[i][1]};
    const double inner[8][2] = {{-20, -40}, {-8, -38}, {0, -38}, {8, -38}, {20, -40}, {8, -42}, {0, -42}, {-8, -42}};
    for (int i = 0; i < 8; ++i)
        f[60 + i] = {inner[i][0], 91.0 + 4.0 * (1.0 - std::abs(inner[i][0]) / 20.0), inner[i][1]};
    return f;
}

} // namespace

GeneratorConfig GeneratorConfig::standard()
{
    GeneratorConfig c;
    c.joint(JointGroup::neck) = range({-0.35, -0.2, -0.7}, {0.35, 0.2, 0.7});
    c.joint(JointGroup::shoulder) = range({-0.6, -1.5, -0.5}, {1.8, 0.2, 0.5});
    c.joint(JointGroup::elbow) = range({0.0, -0.2, -0.4}, {2.0, 0.2, 0.4});
    c.joint(JointGroup::wrist) = range({-0.6, -0.6, -0.4}, {0.6, 0.6, 0.4});
    c.joint(JointGroup::finger) = range({-0.15, -0.1, -0.1}, {0.15, 1.2, 0.1});
    c.joint(JointGroup::hip) = range({-0.4, -0.5, -0.3}, {1.4, 0.1, 0.3});
    c.joint(JointGroup::knee) = range({-1.6, 0.0, 0.0}, {0.0, 0.0, 0.0});
    c.joint(JointGroup::ankle) = range({-0.3, -0.2, -0.2}, {0.3, 0.2, 0.2});
    return c;
}

GeneratorConfig GeneratorConfig::rest()
{
    GeneratorConfig c;
    c.yaw_range = 0.0;
    c.tilt_range = 0.0;
    c.translation_range.setZero();
    return c;
}

SyntheticPoseGenerator::SyntheticPoseGenerator(GeneratorConfig config, const KeypointLayout& layout)
    : config_(std::move(config))
{
    if (layout.total() != 133)
        throw ValidationError("synthetic generator requires the 133-keypoint whole-body layout");

    Coords3 t = Coords3::Zero(133, 3);
    auto set = [&](int id, double x, double y, double z) { t.row(id - 1) = Eigen::RowVector3d(x, y, z); };
    auto set_pair = [&](int left_id, int right_id, double x, double y, double z) {
        set(left_id, x, y, z);
        set(right_id, -x, y, z);
    };

    pelvis_ = Eigen::Vector3d(0.0, 0.0, 950.0);
    const double face_z = 1620.0;
    set(1, 0.0, 110.0, face_z - 4.0);
    set_pair(2, 3, 33.0, 80.0, face_z + 20.0);
    set_pair(4, 5, 75.0, 0.0, face_z + 5.0);
    set_pair(6, 7, 180.0, -10.0, 1450.0);
    set_pair(8, 9, 195.0, -10.0, 1170.0);
    set_pair(10, 11, 205.0, 0.0, 920.0);
    set_pair(12, 13, 125.0, 0.0, 950.0);
    set_pair(14, 15, 120.0, 5.0, 510.0);
    set_pair(16, 17, 115.0, -10.0, 90.0);
    set_pair(18, 21, 100.0, 150.0, 10.0);
    set_pair(19, 22, 150.0, 130.0, 15.0);
    set_pair(20, 23, 115.0, -50.0, 15.0);

    const auto face = face_template();
    for (int i = 0; i < 68; ++i)
        set(24 + i, face[i].x(), face[i].y(), face_z + face[i].z());

    // Left hand hangs down with the palm facing the body; right hand mirrored.
    const double hx = 208.0;
    std::vector<Eigen::Vector3d> hand(21);
    hand[0] = {hx, 2.0, 905.0};
    hand[1] = {hx + 2.0, 22.0, 885.0};
    hand[2] = {hx + 6.0, 40.0, 860.0};
    hand[3] = {hx + 8.0, 52.0, 835.0};
    hand[4] = {hx + 9.0, 60.0, 815.0};
    const double finger_y[4] = {22.0, 6.0, -9.0, -23.0};
    const double finger_base[4] = {825.0, 820.0, 823.0, 832.0};
    const double finger_len[4][3] = {{40, 24, 20}, {45, 28, 21}, {42, 26, 20}, {32, 20, 18}};
    for (int f = 0; f < 4; ++f) {
        double z = finger_base[f];
        hand[5 + 4 * f] = {hx, finger_y[f], z};
        for (int j = 0; j < 3; ++j) {
            z -= finger_len[f][j];
            hand[6 + 4 * f + j] = {hx, finger_y[f], z};
        }
    }
    for (int k = 0; k < 21; ++k)
        set_pair(92 + k, 113 + k, hand[k].x(), hand[k].y(), hand[k].z());

    template_ = t * config_.body_scale;
    pelvis_ *= config_.body_scale;

    auto P = [&](int id) -> Eigen::Vector3d { return template_.row(id - 1).transpose(); };
    auto add = [&](int parent, Eigen::Vector3d pivot, std::vector<int> ids, JointGroup g, bool right) {
        Segment s;
        s.parent = parent;
        s.pivot = pivot;
        for (int id : ids)
            s.rows.push_back(id - 1);
        s.group = g;
        s.right_side = right;
        segments_.push_back(std::move(s));
        return static_cast<int>(segments_.size()) - 1;
    };

    // Trunk is the root segment; its transform is the global placement.
    const int trunk = add(-1, pelvis_, {6, 7, 12, 13}, JointGroup::neck, false);
    std::vector<int> head_ids{1, 2, 3, 4, 5};
    for (int i = 24; i <= 91; ++i)
        head_ids.push_back(i);
    add(trunk, Eigen::Vector3d(0.0, 0.0, 1500.0) * config_.body_scale, head_ids, JointGroup::neck, false);

    for (bool right : {false, true}) {
        const int sh = right ? 7 : 6, el = right ? 9 : 8, wr = right ? 11 : 10;
        const int hip = right ? 13 : 12, knee = right ? 15 : 14, ankle = right ? 17 : 16;
        const int hand_root = right ? 113 : 92;
        const int toes[3] = {right ? 21 : 18, right ? 22 : 19, right ? 23 : 20};

        const int upper = add(trunk, P(sh), {el}, JointGroup::shoulder, right);
        const int fore = add(upper, P(el), {wr, hand_root}, JointGroup::elbow, right);
        const int palm = add(fore, P(hand_root),
                             {hand_root + 1, hand_root + 5, hand_root + 9, hand_root + 13, hand_root + 17},
                             JointGroup::wrist, right);
        for (int f = 0; f < 5; ++f) {
            const int base = hand_root + 1 + 4 * f;
            int parent = palm;
            for (int j = 0; j < 3; ++j)
                parent = add(parent, P(base + j), {base + j + 1}, JointGroup::finger, right);
        }
        const int thigh = add(trunk, P(hip), {knee}, JointGroup::hip, right);
        const int shin = add(thigh, P(knee), {ankle}, JointGroup::knee, right);
        add(shin, P(ankle), {toes[0], toes[1], toes[2]}, JointGroup::ankle, right);
    }
}

Pose3D SyntheticPoseGenerator::generate(std::uint64_t seed) const
{
    std::mt19937_64 rng(seed);

    struct Affine {
        Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
        Eigen::Vector3d b = Eigen::Vector3d::Zero();
    };

    const double yaw = draw(rng, -config_.yaw_range, config_.yaw_range);
    const double tilt_x = draw(rng, -config_.tilt_range, config_.tilt_range);
    const double tilt_y = draw(rng, -config_.tilt_range, config_.tilt_range);
    Eigen::Vector3d shift;
    for (int a = 0; a < 3; ++a)
        shift[a] = draw(rng, -config_.translation_range[a], config_.translation_range[a]);

    std::vector<Affine> world(segments_.size());
    for (size_t s = 0; s < segments_.size(); ++s) {
        const Segment& seg = segments_[s];
        Eigen::Vector3d angles;
        if (seg.parent < 0) {
            angles = Eigen::Vector3d(tilt_x, tilt_y, yaw);
        } else {
            const AngleRange& r = config_.joint(seg.group);
            // Reflecting x conjugates rotations: x angles are unchanged, y and z flip sign.
            for (int a = 0; a < 3; ++a) {
                double lo = r.lo[a], hi = r.hi[a];
                if (seg.right_side && a > 0) {
                    lo = -r.hi[a];
                    hi = -r.lo[a];
                }
                angles[a] = draw(rng, lo, hi);
            }
        }
        const Eigen::Matrix3d R = euler(angles);
        Affine local{R, seg.pivot - R * seg.pivot};
        if (seg.parent < 0) {
            local.b += shift;
            world[s] = local;
        } else {
            const Affine& p = world[static_cast<size_t>(seg.parent)];
            world[s] = Affine{p.A * local.A, p.A * local.b + p.b};
        }
    }

    Pose3D pose;
    pose.frame = Frame::world;
    pose.coords = template_;
    for (size_t s = 0; s < segments_.size(); ++s)
        for (int row : segments_[s].rows)
            pose.coords.row(row) = (world[s].A * template_.row(row).transpose() + world[s].b).transpose();
    return pose;
}

Pose3D generate_pose(const SyntheticPoseGenerator& generator, std::uint64_t seed)
{
    return generator.generate(seed);
}

} // namespace wbforge
