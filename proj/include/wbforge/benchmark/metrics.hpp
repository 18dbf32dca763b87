#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

// Centering used before measuring joint errors. `wrist` centres each hand on
// its own wrist and is only defined for hand parts; `nose` only for the face.
enum class Alignment { pelvis, nose, wrist };

std::string_view to_string(Alignment a);

// Mean Euclidean distance (mm) over the part's keypoints after centering both
// poses. Throws ValidationError for shape mismatches or an alignment that does
// not apply to the part.
double mpjpe(const Coords3& pred, const Coords3& gt, Part part, Alignment alignment,
             const KeypointLayout& layout = KeypointLayout::builtin());

// Per-sample errors for a batch (OpenMP across samples).
std::vector<double> mpjpe_batch(std::span<const Coords3> pred, std::span<const Coords3> gt, Part part,
                                Alignment alignment, const KeypointLayout& layout = KeypointLayout::builtin());

// Columns of the results tables: everything pelvis-aligned, plus the face on
// the nose and the hands on their wrists.
struct MetricReport {
    int samples = 0;
    double all = 0.0, body = 0.0, face = 0.0, face_aligned = 0.0, hand = 0.0, hand_aligned = 0.0;

    static const std::vector<std::string>& columns();
    double value(const std::string& column) const;
    double& value(const std::string& column);

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
    std::string table_row() const;
};

MetricReport evaluate(std::span<const Coords3> pred, std::span<const Coords3> gt,
                      const KeypointLayout& layout = KeypointLayout::builtin());

// Bounding-box size: per-axis extent (max - min). `mean_extent` averages the
// axes into one scalar; `per_axis` keeps them separate.
enum class BoxSize { mean_extent, per_axis };

Eigen::VectorXd box_extent(const Eigen::MatrixXd& points);
// Extent of the visible keypoints. Throws DegenerateInputError when none are visible.
Eigen::Vector2d box_extent(const Pose2D& pose);

// Training-set box statistics for converting unit-scale predictions to mm:
//   X = X_unit * s3 * s2 / mean_s2
// with s2 the box size of the input 2D pose.
struct ScaleStats {
    BoxSize mode = BoxSize::mean_extent;
    Eigen::Vector3d mean_3d = Eigen::Vector3d::Zero(); // mm, per axis
    Eigen::Vector2d mean_2d = Eigen::Vector2d::Zero(); // px, per axis

    // Scalar means (mean over axes) used by mean_extent mode.
    double size_3d() const { return mean_3d.mean(); }
    double size_2d() const { return mean_2d.mean(); }

    // Per-axis factor mapping unit coordinates to mm for one input.
    Eigen::Vector3d factor(const Pose2D& input) const;

    nlohmann::json to_json() const;
    static ScaleStats from_json(const nlohmann::json& j);
};

// Fitted on training pairs only. 2D boxes use visible keypoints.
ScaleStats fit_scale_stats(std::span<const Pose2D> inputs, std::span<const Coords3> targets,
                           BoxSize mode = BoxSize::mean_extent);

Coords3 rescale(const Coords3& unit, const ScaleStats& stats, const Pose2D& input);
// Inverse of rescale, used to build training targets.
Coords3 to_unit(const Coords3& metric, const ScaleStats& stats, const Pose2D& input);

} // namespace wbforge
