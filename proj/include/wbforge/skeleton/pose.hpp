#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "wbforge/skeleton/layout.hpp"

namespace wbforge {

using Coords3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Coords2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

enum class Frame { world, camera };

// Whole-body 3D pose in millimetres, one row per keypoint.
struct Pose3D {
    Coords3 coords;
    Frame frame = Frame::world;

    int size() const { return static_cast<int>(coords.rows()); }
};

// Whole-body 2D pose in pixels. Coordinates of keypoints with visible == 0
// carry no meaning and are ignored by every consumer.
struct Pose2D {
    Coords2 coords;
    std::vector<std::uint8_t> visible;
    Eigen::VectorXd confidence;

    int size() const { return static_cast<int>(coords.rows()); }
    bool is_visible(int row) const { return visible[row] != 0; }

    static Pose2D all_visible(Coords2 coords);
};

enum class Root { pelvis, nose, left_wrist, right_wrist };

// Throws ValidationError unless the pose has layout.total() finite rows.
void validate(const Pose3D& pose, const KeypointLayout& layout);
void validate(const Pose2D& pose, const KeypointLayout& layout);

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime, Eigen::RowMajor>
part_slice(const Eigen::MatrixBase<Derived>& coords, const KeypointLayout& layout, Part part)
{
    const auto& rows = layout.rows(part);
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Derived::ColsAtCompileTime, Eigen::RowMajor> out(
        static_cast<Eigen::Index>(rows.size()), coords.cols());
    for (size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = coords.row(rows[i]);
    return out;
}

Pose3D part_slice(const Pose3D& pose, const KeypointLayout& layout, Part part);
Pose2D part_slice(const Pose2D& pose, const KeypointLayout& layout, Part part);

// Midpoint of the two hip keypoints. Works for 2D and 3D coordinate matrices.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Derived::ColsAtCompileTime>
pelvis(const Eigen::MatrixBase<Derived>& coords, const KeypointLayout& layout)
{
    auto [l, r] = layout.hips();
    return 0.5 * (coords.row(l.row()) + coords.row(r.row()));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Derived::ColsAtCompileTime>
root_position(const Eigen::MatrixBase<Derived>& coords, const KeypointLayout& layout, Root root)
{
    switch (root) {
    case Root::nose: return coords.row(layout.nose().row());
    case Root::left_wrist: return coords.row(layout.left_wrist().row());
    case Root::right_wrist: return coords.row(layout.right_wrist().row());
    case Root::pelvis: break;
    }
    return pelvis(coords, layout);
}

Pose3D center_on(const Pose3D& pose, Root root, const KeypointLayout& layout);

double bone_length(const Coords3& coords, std::pair<KeypointId, KeypointId> bone);

// Sum over mirrored bone pairs of |len(left) - len(right)|. When grad is
// non-null it receives d(error)/d(coords) (same shape as coords).
double symmetric_length_error(const Coords3& coords, const KeypointLayout& layout, Coords3* grad = nullptr);

// Mirror a pose: swap each keypoint with its partner and negate x.
Coords3 mirror(const Coords3& coords, const KeypointLayout& layout);

} // namespace wbforge
