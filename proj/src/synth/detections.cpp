#include "wbforge/synth/detections.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "wbforge/errors.hpp"

namespace wbforge {

double OcclusionConfig::hand_drop_for(int view) const
{
    if (hand_drop_per_view.empty())
        return hand_drop;
    return hand_drop_per_view.at(static_cast<size_t>(view));
}

double OcclusionConfig::face_side_drop_for(int view) const
{
    if (face_side_drop_per_view.empty())
        return face_side_drop;
    return face_side_drop_per_view.at(static_cast<size_t>(view));
}

OcclusionConfig OcclusionConfig::none()
{
    OcclusionConfig c;
    c.noise_px = 0.0;
    c.hand_drop = 0.0;
    c.face_side_drop = 0.0;
    c.keypoint_drop = 0.0;
    c.backface = false;
    return c;
}

Pose2D project_pose(const Pose3D& pose, const CameraModel& camera)
{
    const int n = pose.size();
    Pose2D out;
    out.coords = Coords2::Zero(n, 2);
    out.visible.assign(static_cast<size_t>(n), 0);
    out.confidence = Eigen::VectorXd::Zero(n);
    const Eigen::Matrix<double, 3, 4> P = camera.projection_matrix();
    for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d X = pose.coords.row(k).transpose();
        const Eigen::Vector3d h = P * X.homogeneous();
        if (!(h.z() > 0.0))
            continue;
        out.coords.row(k) = (h.head<2>() / h.z()).transpose();
        out.visible[k] = 1;
        out.confidence[k] = 1.0;
    }
    return out;
}

std::vector<Pose2D> simulate_detections(const Pose3D& pose, const Rig& rig, const OcclusionConfig& config,
                                        std::uint64_t seed, const KeypointLayout& layout)
{
    validate(pose, layout);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int n = pose.size();
    const auto& left_hand = layout.rows(Part::left_hand);
    const auto& right_hand = layout.rows(Part::right_hand);

    // Head forward direction: from the ear midpoint (body keypoints 4 and 5) to the nose.
    const Eigen::Vector3d nose = pose.coords.row(layout.nose().row()).transpose();
    const Eigen::Vector3d ears =
        0.5 * (pose.coords.row(KeypointId{4}.row()) + pose.coords.row(KeypointId{5}.row())).transpose();
    const Eigen::Vector3d forward = (nose - ears).normalized();
    const double backface_cos = std::cos(config.backface_deg * std::numbers::pi / 180.0);

    std::vector<Pose2D> views;
    views.reserve(static_cast<size_t>(rig.size()));
    for (int v = 0; v < rig.size(); ++v) {
        const CameraModel& cam = rig.camera(v);
        Pose2D det;
        det.coords = Coords2::Zero(n, 2);
        det.visible.assign(static_cast<size_t>(n), 1);
        det.confidence = Eigen::VectorXd::Zero(n);

        for (int k = 0; k < n; ++k) {
            const Eigen::Vector3d pc = cam.to_camera(pose.coords.row(k).transpose());
            if (!(pc.z() > 0.0)) {
                det.visible[k] = 0;
                continue;
            }
            const Eigen::Vector3d h = cam.K * pc;
            Eigen::Vector2d uv = h.head<2>() / h.z();
            if (config.noise_px > 0.0)
                uv += config.noise_px * Eigen::Vector2d(gauss(rng), gauss(rng));
            det.coords.row(k) = uv.transpose();
            if (!cam.in_image(uv))
                det.visible[k] = 0;
        }

        auto hide = [&](const std::vector<int>& rows) {
            for (int r : rows)
                det.visible[r] = 0;
        };
        if (config.hand_drop_for(v) > 0.0) {
            if (unit(rng) < config.hand_drop_for(v))
                hide(left_hand);
            if (unit(rng) < config.hand_drop_for(v))
                hide(right_hand);
        }
        if (config.face_side_drop_for(v) > 0.0 && unit(rng) < config.face_side_drop_for(v))
            hide(unit(rng) < 0.5 ? layout.left_face_rows() : layout.right_face_rows());
        if (config.backface) {
            const Eigen::Vector3d to_camera = (cam.center() - nose).normalized();
            if (forward.dot(to_camera) < backface_cos)
                hide(layout.rows(Part::face));
        }
        if (config.keypoint_drop > 0.0)
            for (int k = 0; k < n; ++k)
                if (unit(rng) < config.keypoint_drop)
                    det.visible[k] = 0;

        for (int k = 0; k < n; ++k)
            det.confidence[k] = det.visible[k] ? 0.6 + 0.4 * unit(rng) : 0.05 + 0.4 * unit(rng);
        views.push_back(std::move(det));
    }
    return views;
}

} // namespace wbforge
