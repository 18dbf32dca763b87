#pragma once

#include <cstdint>
#include <vector>

#include "wbforge/geometry/camera.hpp"
#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

// Detector failure model. Per-view probabilities default to the scalar value
// when the per-view vector is empty.
struct OcclusionConfig {
    double noise_px = 1.0;         // isotropic Gaussian pixel noise on every keypoint
    double hand_drop = 0.08;       // each hand disappears as a whole
    double face_side_drop = 0.05;  // one half of the face disappears
    double keypoint_drop = 0.004;  // independent per-keypoint misses
    bool backface = true;          // face hidden when turned more than backface_deg away from the camera
    double backface_deg = 95.0;

    std::vector<double> hand_drop_per_view;
    std::vector<double> face_side_drop_per_view;

    double hand_drop_for(int view) const;
    double face_side_drop_for(int view) const;

    // No noise and nothing dropped: exact projections, all visible.
    static OcclusionConfig none();
};

// Project a world pose into every rig view and simulate detector output.
// Hidden keypoints keep their (noisy) coordinates but get visible = 0 and a
// confidence below 0.5; visible keypoints get a confidence in [0.6, 1].
// Keypoints behind a camera or outside its image are always hidden.
std::vector<Pose2D> simulate_detections(const Pose3D& pose, const Rig& rig, const OcclusionConfig& config,
                                        std::uint64_t seed, const KeypointLayout& layout = KeypointLayout::builtin());

// Exact projection of a world pose into one camera, all keypoints in front of
// the camera marked visible with confidence 1.
Pose2D project_pose(const Pose3D& pose, const CameraModel& camera);

} // namespace wbforge
