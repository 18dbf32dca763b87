#include "wbforge/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"

namespace wbforge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double nanmean(const Eigen::VectorXd& v)
{
    double s = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isnan(v(i)))
            s += v(i), ++n;
    return n ? s / n : kNaN;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

nlohmann::json QualityScore::to_json() const
{
    nlohmann::json j;
    j["aggregate"] = std::isfinite(aggregate) ? nlohmann::json(aggregate) : nlohmann::json(nullptr);
    j["skipped"] = skipped;
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    j["view_scores"] = nlohmann::json::array();
    for (double v : view_scores)
        j["view_scores"].push_back(num(v));
    for (size_t p = 0; p < parts.size(); ++p) {
        auto row = nlohmann::json::array();
        for (Eigen::Index v = 0; v < deviation.cols(); ++v)
            row.push_back(num(deviation(static_cast<Eigen::Index>(p), v)));
        j["parts"][std::string(to_string(parts[p]))] = {{"score", num(part_scores[p])}, {"views", row}};
    }
    return j;
}

double aggregate_deviation(const Eigen::MatrixXd& deviation, ScoreAggregation aggregation)
{
    const bool by_part = aggregation == ScoreAggregation::view_then_part;
    const Eigen::Index outer = by_part ? deviation.rows() : deviation.cols();
    Eigen::VectorXd partial(outer);
    for (Eigen::Index i = 0; i < outer; ++i)
        partial(i) = by_part ? nanmean(deviation.row(i).transpose()) : nanmean(deviation.col(i));
    const double m = nanmean(partial);
    return std::isnan(m) ? std::numeric_limits<double>::infinity() : m;
}

QualityScore multicrop_score(const Pose3D& pose, const Rig& rig, const RefinerSet& refiners,
                             const ConditioningProvider& provider, const QualityConfig& config,
                             const KeypointLayout& layout)
{
    if (pose.size() != layout.total() || !pose.coords.allFinite())
        throw ValidationError("multicrop_score needs a finite pose with the layout's keypoints");
    static constexpr CropPlacement kCorners[4] = {CropPlacement::top_left, CropPlacement::top_right,
                                                  CropPlacement::bottom_left, CropPlacement::bottom_right};
    QualityScore q;
    q.parts = config.parts;
    const auto P = static_cast<Eigen::Index>(config.parts.size());
    q.deviation = Eigen::MatrixXd::Constant(P, rig.size(), kNaN);

    for (Eigen::Index p = 0; p < P; ++p) {
        const Part part = config.parts[static_cast<size_t>(p)];
        const RefinerModel& model = refiners.for_part(part);
        const auto& rows = layout.rows(part);
        for (int v = 0; v < rig.size(); ++v) {
            const CameraModel& cam = rig.camera(v);
            Coords2 uv(static_cast<Eigen::Index>(rows.size()), 2);
            bool inside = true;
            for (size_t k = 0; k < rows.size() && inside; ++k) {
                const Eigen::Vector3d X = pose.coords.row(rows[k]).transpose();
                inside = cam.to_camera(X).z() > 1.0;
                if (inside) {
                    const auto pr = project(X, cam);
                    inside = pr.in_image;
                    uv.row(static_cast<Eigen::Index>(k)) = pr.uv.transpose();
                }
            }
            if (!inside) {
                ++q.skipped;
                spdlog::debug("multicrop_score: {} leaves view {}, skipped", to_string(part), cam.id);
                continue;
            }
            double dev = 0.0;
            for (CropPlacement corner : kCorners) {
                const CropSpec crop = make_crop(uv, corner);
                const Conditioning cond = provider.conditioning(v, crop, rows, model.config());
                const Coords2 back = crop.to_image(refine(model, cond, crop.to_crop(uv), config.iterations).keypoints);
                dev += (back - uv).rowwise().norm().mean();
            }
            q.deviation(p, v) = dev / 4.0;
        }
    }
    for (int v = 0; v < rig.size(); ++v)
        q.view_scores.push_back(nanmean(q.deviation.col(v)));
    for (Eigen::Index p = 0; p < P; ++p)
        q.part_scores.push_back(nanmean(q.deviation.row(p).transpose()));
    q.aggregate = aggregate_deviation(q.deviation, config.aggregation);
    return q;
}

Selection select_subset(const std::vector<ScoredPose>& scored, int quota)
{
    if (quota < 0)
        throw ValidationError("selection quota must be non-negative");
    std::map<std::string, std::vector<const ScoredPose*>> by_subject;
    for (const auto& s : scored)
        if (std::isfinite(s.score))
            by_subject[s.subject].push_back(&s);

    Selection out;
    for (auto& [subject, list] : by_subject) {
        std::sort(list.begin(), list.end(), [](const ScoredPose* a, const ScoredPose* b) {
            return a->score != b->score ? a->score < b->score : a->id < b->id;
        });
        out.available[subject] = static_cast<int>(list.size());
        if (static_cast<int>(list.size()) < quota) {
            out.quota_exceeded = true;
            spdlog::warn("subject {}: quota {} exceeds the {} scored poses; keeping all", subject, quota, list.size());
        }
        const size_t keep = std::min(list.size(), static_cast<size_t>(quota));
        for (size_t i = 0; i < keep; ++i)
            out.retained.push_back(list[i]->id);
        if (keep)
            out.threshold[subject] = list[keep - 1]->score;
    }
    return out;
}

std::vector<std::pair<int, int>> sample_records(const std::vector<int>& retained, int views)
{
    std::vector<std::pair<int, int>> out;
    out.reserve(retained.size() * static_cast<size_t>(std::max(views, 0)));
    for (int id : retained)
        for (int v = 0; v < views; ++v)
            out.emplace_back(id, v);
    return out;
}

ProviderFactory synthetic_provider(const Rig& rig)
{
    return [&rig](const PoseSet& set) -> std::unique_ptr<ConditioningProvider> {
        if (set.world.size() == 0)
            throw ValidationError("pose set " + std::to_string(set.id) + " has no ground truth to render from");
        return std::make_unique<SyntheticConditioning>(set.world, rig);
    };
}

namespace {

struct SlotResult {
    enum class Kind { output, rejected, failed } kind = Kind::failed;
    PipelinePose pose;
    PipelineFailure failure;
    StageTiming timing;
};

} // namespace

PipelineResult run_pipeline(const std::vector<PoseSet>& sets, const Rig& rig, const CompletionNet& completion,
                            const RefinerSet& refiners, const ProviderFactory& provider, const PipelineConfig& config,
                            const KeypointLayout& layout)
{
    std::vector<SlotResult> slots(sets.size());
    static const Part kRefinable[3] = {Part::face, Part::left_hand, Part::right_hand};

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sets.size()); ++i) {
        const PoseSet& set = sets[static_cast<size_t>(i)];
        SlotResult& slot = slots[static_cast<size_t>(i)];
        slot.failure.id = slot.pose.id = set.id;
        slot.pose.subject = set.subject;
        std::string stage = "triangulate";
        try {
            auto t0 = std::chrono::steady_clock::now();
            const PoseTriangulation tri = triangulate_pose(set.detections, rig, config.triangulation);
            slot.pose.cls = classify_pose(tri.status);
            slot.timing.triangulate = seconds_since(t0);
            if (slot.pose.cls == PoseClass::rejected) {
                slot.kind = SlotResult::Kind::rejected;
                continue;
            }

            auto& prov = slot.pose.provenance;
            prov.resize(tri.status.size());
            for (size_t k = 0; k < prov.size(); ++k) {
                prov[k].triangulated = tri.status[k] == KeypointStatus::triangulated;
                prov[k].completed = !prov[k].triangulated;
            }

            stage = "complete";
            t0 = std::chrono::steady_clock::now();
            slot.pose.pose = slot.pose.cls == PoseClass::incomplete ? complete(completion, tri.pose, tri.status) : tri.pose;
            slot.timing.complete = seconds_since(t0);

            std::unique_ptr<ConditioningProvider> cond;
            MultiviewRefineOptions ropt;
            ropt.iterations = config.refine_iterations;
            ropt.parts.clear();
            for (Part part : kRefinable) {
                const auto& rows = layout.rows(part);
                const bool any_completed =
                    std::any_of(rows.begin(), rows.end(), [&](int r) { return prov[static_cast<size_t>(r)].completed; });
                if (config.refine == RefinePolicy::all_parts ||
                    (config.refine == RefinePolicy::completed_parts && any_completed))
                    ropt.parts.push_back(part);
            }
            if (!ropt.parts.empty() || config.score) {
                stage = "conditioning";
                cond = provider(set);
            }

            if (!ropt.parts.empty()) {
                stage = "refine";
                t0 = std::chrono::steady_clock::now();
                const auto r = refine_pose_views(slot.pose.pose, rig, refiners, *cond, ropt, layout);
                slot.pose.pose = r.pose;
                for (const auto& pr : r.parts)
                    if (!pr.skipped)
                        for (int row : layout.rows(pr.part))
                            prov[static_cast<size_t>(row)].refined = true;
                slot.timing.refine = seconds_since(t0);
            }

            if (config.score) {
                stage = "score";
                t0 = std::chrono::steady_clock::now();
                slot.pose.quality = multicrop_score(slot.pose.pose, rig, refiners, *cond, config.quality, layout);
                slot.timing.score = seconds_since(t0);
            }
            slot.kind = SlotResult::Kind::output;
        } catch (const std::exception& e) {
            slot.kind = SlotResult::Kind::failed;
            slot.failure.stage = stage;
            slot.failure.error = e.what();
        }
    }

    PipelineResult out;
    PipelineReport& rep = out.report;
    rep.quota = config.quota;
    std::vector<ScoredPose> scored;
    for (auto& slot : slots) {
        ++rep.processed;
        rep.timing.triangulate += slot.timing.triangulate;
        rep.timing.complete += slot.timing.complete;
        rep.timing.refine += slot.timing.refine;
        rep.timing.score += slot.timing.score;
        switch (slot.kind) {
        case SlotResult::Kind::rejected: ++rep.rejected; break;
        case SlotResult::Kind::failed:
            ++rep.failed;
            spdlog::warn("pose set {} quarantined at {}: {}", slot.failure.id, slot.failure.stage, slot.failure.error);
            rep.failures.push_back(std::move(slot.failure));
            break;
        case SlotResult::Kind::output:
            (slot.pose.cls == PoseClass::complete ? rep.complete : rep.incomplete)++;
            if (slot.pose.quality)
                scored.push_back({slot.pose.id, slot.pose.subject, slot.pose.quality->aggregate});
            out.poses.push_back(std::move(slot.pose));
            break;
        }
    }
    if (config.score)
        rep.selection = select_subset(scored, config.quota);
    return out;
}

nlohmann::json PipelineReport::to_json() const
{
    nlohmann::json j{{"processed", processed},
                     {"complete", complete},
                     {"incomplete", incomplete},
                     {"rejected", rejected},
                     {"failed", failed},
                     {"timing_s",
                      {{"triangulate", timing.triangulate},
                       {"complete", timing.complete},
                       {"refine", timing.refine},
                       {"score", timing.score}}},
                     {"quota", quota},
                     {"retained", selection.retained},
                     {"threshold", selection.threshold},
                     {"available", selection.available},
                     {"quota_exceeded", selection.quota_exceeded}};
    j["failures"] = nlohmann::json::array();
    for (const auto& f : failures)
        j["failures"].push_back({{"id", f.id}, {"stage", f.stage}, {"error", f.error}});
    return j;
}

std::string PipelineReport::table() const
{
    std::ostringstream os;
    auto line = [&](const std::string& k, const std::string& v) {
        os << k << std::string(k.size() < 22 ? 22 - k.size() : 1, ' ') << v << '\n';
    };
    auto fmt = [](double v) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(3);
        s << v;
        return s.str();
    };
    line("processed", std::to_string(processed));
    line("complete", std::to_string(complete));
    line("incomplete", std::to_string(incomplete));
    line("rejected", std::to_string(rejected));
    line("failed", std::to_string(failed));
    line("triangulate (s)", fmt(timing.triangulate));
    line("complete (s)", fmt(timing.complete));
    line("refine (s)", fmt(timing.refine));
    line("score (s)", fmt(timing.score));
    line("quota per subject", std::to_string(quota));
    line("retained", std::to_string(selection.retained.size()));
    for (const auto& [subject, t] : selection.threshold)
        line("  " + subject + " threshold (px)", fmt(t));
    return os.str();
}

std::string_view to_string(RefinePolicy policy)
{
    switch (policy) {
    case RefinePolicy::completed_parts: return "completed_parts";
    case RefinePolicy::all_parts: return "all_parts";
    case RefinePolicy::none: return "none";
    }
    return "?";
}

RefinePolicy refine_policy_from_string(std::string_view name)
{
    for (auto p : {RefinePolicy::completed_parts, RefinePolicy::all_parts, RefinePolicy::none})
        if (to_string(p) == name)
            return p;
    throw ValidationError("unknown refine policy '" + std::string(name) + "'");
}

std::string_view to_string(ScoreAggregation aggregation)
{
    return aggregation == ScoreAggregation::view_then_part ? "view_then_part" : "part_then_view";
}

ScoreAggregation score_aggregation_from_string(std::string_view name)
{
    for (auto a : {ScoreAggregation::view_then_part, ScoreAggregation::part_then_view})
        if (to_string(a) == name)
            return a;
    throw ValidationError("unknown score aggregation '" + std::string(name) + "'");
}

} // namespace wbforge
