#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "wbforge/completion/completion.hpp"
#include "wbforge/geometry/triangulation.hpp"
#include "wbforge/refine/multiview.hpp"
#include "wbforge/synth/dataset.hpp"

namespace wbforge {

// Where a keypoint came from. Exactly one of triangulated / completed is set;
// refined marks keypoints re-triangulated after 2D refinement.
struct KeypointProvenance {
    bool triangulated = false;
    bool completed = false;
    bool refined = false;
};

enum class ScoreAggregation {
    view_then_part, // mean over views per part, then over parts
    part_then_view, // mean over parts per view, then over views
};

struct QualityConfig {
    ScoreAggregation aggregation = ScoreAggregation::view_then_part;
    int iterations = 10;
    std::vector<Part> parts{Part::face, Part::left_hand, Part::right_hand};
};

struct QualityScore {
    std::vector<Part> parts;
    Eigen::MatrixXd deviation;       // parts x views, px; NaN where the part left the image
    std::vector<double> view_scores; // mean over scored parts, NaN for a view with none
    std::vector<double> part_scores; // mean over scored views
    double aggregate = 0.0;          // +inf when nothing could be scored
    int skipped = 0;

    nlohmann::json to_json() const;
};

// Aggregate a parts x views deviation matrix, ignoring NaN cells.
double aggregate_deviation(const Eigen::MatrixXd& deviation, ScoreAggregation aggregation);

// Four-corner multi-crop consistency: per view and part, refine the projection
// in each corner crop, map the result back with the inverse crop transform and
// take the mean 2D distance to the projection.
QualityScore multicrop_score(const Pose3D& pose, const Rig& rig, const RefinerSet& refiners,
                             const ConditioningProvider& provider, const QualityConfig& config = {},
                             const KeypointLayout& layout = KeypointLayout::builtin());

struct ScoredPose {
    int id = 0;
    std::string subject;
    double score = 0.0;
};

struct Selection {
    std::vector<int> retained;                   // sorted by subject, then score, then id
    std::map<std::string, double> threshold;     // highest retained score per subject
    std::map<std::string, int> available;        // finite scores per subject
    bool quota_exceeded = false;                 // some subject had fewer than quota
};

// Lowest-score poses per subject; ties go to the lower id. Non-finite scores are never retained.
Selection select_subset(const std::vector<ScoredPose>& scored, int quota);

// One (pose id, view) record per retained pose and rig view.
std::vector<std::pair<int, int>> sample_records(const std::vector<int>& retained, int views);

using ProviderFactory = std::function<std::unique_ptr<ConditioningProvider>(const PoseSet&)>;
// Conditioning rendered from each pose set's ground-truth world pose.
ProviderFactory synthetic_provider(const Rig& rig);

enum class RefinePolicy {
    completed_parts, // face / hands that contain at least one completed keypoint
    all_parts,
    none,
};

struct PipelineConfig {
    TriangulationOptions triangulation;
    RefinePolicy refine = RefinePolicy::completed_parts;
    int refine_iterations = 10;
    bool score = true;
    QualityConfig quality;
    int quota = 50;
};

struct PipelinePose {
    int id = 0;
    std::string subject;
    PoseClass cls = PoseClass::complete;
    Pose3D pose;
    std::vector<KeypointProvenance> provenance;
    std::optional<QualityScore> quality;
};

struct StageTiming {
    double triangulate = 0.0, complete = 0.0, refine = 0.0, score = 0.0; // seconds, summed over samples
};

struct PipelineFailure {
    int id = 0;
    std::string stage;
    std::string error;
};

// processed = complete + incomplete + rejected + failed; output poses = complete + incomplete.
struct PipelineReport {
    int processed = 0, complete = 0, incomplete = 0, rejected = 0, failed = 0;
    StageTiming timing;
    int quota = 0;
    Selection selection;
    std::vector<PipelineFailure> failures;

    nlohmann::json to_json() const;
    std::string table() const;
};

struct PipelineResult {
    std::vector<PipelinePose> poses; // input order, rejected and failed sets removed
    PipelineReport report;
};

// Triangulate every pose set, complete incomplete poses, refine parts per the
// policy, score and select. A failing sample is quarantined in the report and
// never aborts the batch.
PipelineResult run_pipeline(const std::vector<PoseSet>& sets, const Rig& rig, const CompletionNet& completion,
                            const RefinerSet& refiners, const ProviderFactory& provider, const PipelineConfig& config = {},
                            const KeypointLayout& layout = KeypointLayout::builtin());

std::string_view to_string(RefinePolicy policy);
RefinePolicy refine_policy_from_string(std::string_view name);
std::string_view to_string(ScoreAggregation aggregation);
ScoreAggregation score_aggregation_from_string(std::string_view name);

} // namespace wbforge
