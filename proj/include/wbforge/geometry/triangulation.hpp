#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "wbforge/geometry/camera.hpp"
#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

struct Observation {
    int camera = 0; // index into the rig
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
};

struct TriangulatedPoint {
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    double rms_residual_px = 0.0;
};

// Linear (DLT) triangulation over all observations. Rows are built in normalized
// camera coordinates, scaled to unit norm, and the world frame is conditioned on
// the observing cameras' centroid and spread before the SVD null-space solve.
//
// Throws InsufficientViewsError for fewer than two observations and
// DegenerateGeometryError when every observing pair is opposing or has no baseline.
TriangulatedPoint triangulate(std::span<const Observation> observations, const Rig& rig);

// Opposing-only keypoints are visible in two or more views, but only in views
// that face each other; they are neither triangulated nor seen_once.
enum class KeypointStatus { triangulated, seen_once, opposing_only, unseen };
enum class PoseClass { complete, incomplete, rejected };

enum class ViewMode {
    all_views, // every usable view
    best_pair, // the non-opposing usable pair with the lowest reprojection residual
};

struct TriangulationOptions {
    double visibility_threshold = 0.5;
    ViewMode mode = ViewMode::all_views;
};

struct PoseTriangulation {
    Pose3D pose; // untriangulated keypoints are left at the origin
    std::vector<KeypointStatus> status;
    std::vector<double> residual_px;
};

bool usable(const Pose2D& view, int row, double visibility_threshold);

PoseTriangulation triangulate_pose(std::span<const Pose2D> views, const Rig& rig,
                                   const TriangulationOptions& options = {});

PoseClass classify_pose(std::span<const KeypointStatus> statuses);

std::string_view to_string(KeypointStatus status);
std::string_view to_string(PoseClass cls);

enum class VarianceAggregation { min, mean };

// Sum of the per-axis variances of a 2D point set.
double coordinate_variance(const Coords2& points);

// Pick the non-opposing camera pair whose part projections have the highest
// aggregated variance (min or mean of the two views). Ties go to the
// lexicographically lowest index pair. Returns indices into the rig, first < second.
std::pair<int, int> select_views(std::span<const Coords2> projections, const Rig& rig,
                                 VarianceAggregation aggregation = VarianceAggregation::min);

} // namespace wbforge
