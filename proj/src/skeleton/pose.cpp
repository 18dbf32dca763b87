#include "wbforge/skeleton/pose.hpp"

#include <cmath>
#include <string>

#include "wbforge/errors.hpp"

namespace wbforge {

Pose2D Pose2D::all_visible(Coords2 coords)
{
    Pose2D p;
    const auto n = coords.rows();
    p.coords = std::move(coords);
    p.visible.assign(static_cast<size_t>(n), 1);
    p.confidence = Eigen::VectorXd::Ones(n);
    return p;
}

void validate(const Pose3D& pose, const KeypointLayout& layout)
{
    if (pose.size() != layout.total())
        throw ValidationError("pose has " + std::to_string(pose.size()) + " keypoints, layout expects " +
                              std::to_string(layout.total()));
    if (!pose.coords.allFinite())
        throw ValidationError("pose contains non-finite coordinates");
}

void validate(const Pose2D& pose, const KeypointLayout& layout)
{
    if (pose.size() != layout.total() || static_cast<int>(pose.visible.size()) != layout.total() ||
        pose.confidence.size() != layout.total())
        throw ValidationError("2D pose does not have " + std::to_string(layout.total()) + " entries");
    for (int i = 0; i < pose.size(); ++i)
        if (pose.visible[i] && !pose.coords.row(i).allFinite())
            throw ValidationError("visible 2D keypoint " + std::to_string(i + 1) + " is not finite");
}

Pose3D part_slice(const Pose3D& pose, const KeypointLayout& layout, Part part)
{
    return Pose3D{part_slice(pose.coords, layout, part), pose.frame};
}

Pose2D part_slice(const Pose2D& pose, const KeypointLayout& layout, Part part)
{
    Pose2D out;
    const auto& rows = layout.rows(part);
    out.coords = part_slice(pose.coords, layout, part);
    out.confidence.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        out.visible.push_back(pose.visible[rows[i]]);
        out.confidence[static_cast<Eigen::Index>(i)] = pose.confidence[rows[i]];
    }
    return out;
}

Pose3D center_on(const Pose3D& pose, Root root, const KeypointLayout& layout)
{
    validate(pose, layout);
    const Eigen::RowVector3d origin = root_position(pose.coords, layout, root);
    Pose3D out = pose;
    out.coords.rowwise() -= origin;
    return out;
}

double bone_length(const Coords3& coords, std::pair<KeypointId, KeypointId> bone)
{
    return (coords.row(bone.first.row()) - coords.row(bone.second.row())).norm();
}

double symmetric_length_error(const Coords3& coords, const KeypointLayout& layout, Coords3* grad)
{
    if (coords.rows() != layout.total())
        throw ValidationError("symmetric_length_error: pose size does not match layout");
    if (grad)
        grad->setZero(coords.rows(), 3);

    const auto& bones = layout.bones();
    double total = 0.0;
    for (auto [i, j] : layout.mirrored_bones()) {
        const Eigen::RowVector3d da = coords.row(bones[i].first.row()) - coords.row(bones[i].second.row());
        const Eigen::RowVector3d db = coords.row(bones[j].first.row()) - coords.row(bones[j].second.row());
        const double la = da.norm(), lb = db.norm();
        const double diff = la - lb;
        total += std::abs(diff);
        if (!grad || diff == 0.0)
            continue;
        const double s = diff > 0 ? 1.0 : -1.0;
        if (la > 0) {
            const Eigen::RowVector3d g = s * da / la;
            grad->row(bones[i].first.row()) += g;
            grad->row(bones[i].second.row()) -= g;
        }
        if (lb > 0) {
            const Eigen::RowVector3d g = -s * db / lb;
            grad->row(bones[j].first.row()) += g;
            grad->row(bones[j].second.row()) -= g;
        }
    }
    return total;
}

Coords3 mirror(const Coords3& coords, const KeypointLayout& layout)
{
    Coords3 out(coords.rows(), 3);
    for (int i = 0; i < coords.rows(); ++i) {
        out.row(i) = coords.row(layout.mirror_row(i));
        out(i, 0) = -out(i, 0);
    }
    return out;
}

} // namespace wbforge
