#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

// Euler-angle bounds (radians) for a joint, applied as Rz * Ry * Rx in the
// parent's frame about the joint pivot. Ranges are given for the subject's left
// side; right-side joints use the mirrored range.
struct AngleRange {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

enum class JointGroup { neck, shoulder, elbow, wrist, finger, hip, knee, ankle, count };

struct GeneratorConfig {
    std::array<AngleRange, static_cast<size_t>(JointGroup::count)> joints;
    double yaw_range = 3.14159265358979323846; // global heading, uniform in [-yaw, yaw]
    double tilt_range = 0.12;                  // global lean about the horizontal axes
    Eigen::Vector3d translation_range{400.0, 400.0, 0.0};
    double body_scale = 1.0;

    AngleRange& joint(JointGroup g) { return joints[static_cast<size_t>(g)]; }
    const AngleRange& joint(JointGroup g) const { return joints[static_cast<size_t>(g)]; }

    // Default articulation ranges for everyday standing/sitting poses.
    static GeneratorConfig standard();
    // No articulation, no global motion: every draw returns the template.
    static GeneratorConfig rest();
};

// Samples whole-body poses from a fixed mirror-symmetric template by rotating
// rigid segments about their pivots. Every bone listed in the layout connects
// keypoints on one segment or a keypoint to the pivot of its child segment, so
// mirrored bone lengths are equal in every sample.
class SyntheticPoseGenerator {
public:
    explicit SyntheticPoseGenerator(GeneratorConfig config = GeneratorConfig::standard(),
                                    const KeypointLayout& layout = KeypointLayout::builtin());

    const GeneratorConfig& config() const { return config_; }
    // Rest pose in world coordinates (mm), z up, subject facing +y.
    const Coords3& template_pose() const { return template_; }

    Pose3D generate(std::uint64_t seed) const;

private:
    struct Segment {
        int parent = -1;
        Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
        std::vector<int> rows;
        JointGroup group = JointGroup::neck;
        bool right_side = false;
    };

    GeneratorConfig config_;
    Coords3 template_;
    std::vector<Segment> segments_;
    Eigen::Vector3d pelvis_;
};

Pose3D generate_pose(const SyntheticPoseGenerator& generator, std::uint64_t seed);

} // namespace wbforge
