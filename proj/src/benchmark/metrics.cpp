#include "wbforge/benchmark/metrics.hpp"

#include <iomanip>
#include <limits>
#include <sstream>

#include "wbforge/errors.hpp"
#include "wbforge/kernels/kernels.hpp"

namespace wbforge {

std::string_view to_string(Alignment a)
{
    switch (a) {
    case Alignment::pelvis: return "pelvis";
    case Alignment::nose: return "nose";
    case Alignment::wrist: return "wrist";
    }
    return "?";
}

namespace {

std::vector<int> hip_rows(const KeypointLayout& layout)
{
    auto [l, r] = layout.hips();
    return {l.row(), r.row()};
}

// (rows, root rows) groups whose errors are pooled keypoint-weighted.
std::vector<std::pair<std::vector<int>, std::vector<int>>> groups(Part part, Alignment a, const KeypointLayout& layout)
{
    switch (a) {
    case Alignment::pelvis: return {{layout.rows(part), hip_rows(layout)}};
    case Alignment::nose:
        if (part != Part::face)
            break;
        return {{layout.rows(part), {layout.nose().row()}}};
    case Alignment::wrist:
        if (part == Part::left_hand || part == Part::hands) {
            std::vector<std::pair<std::vector<int>, std::vector<int>>> g{
                {layout.rows(Part::left_hand), {layout.left_wrist().row()}}};
            if (part == Part::hands)
                g.push_back({layout.rows(Part::right_hand), {layout.right_wrist().row()}});
            return g;
        }
        if (part == Part::right_hand)
            return {{layout.rows(Part::right_hand), {layout.right_wrist().row()}}};
        break;
    }
    throw ValidationError(std::string(to_string(a)) + " alignment does not apply to part " + std::string(to_string(part)));
}

} // namespace

std::vector<double> mpjpe_batch(std::span<const Coords3> pred, std::span<const Coords3> gt, Part part,
                                Alignment alignment, const KeypointLayout& layout)
{
    if (pred.size() != gt.size())
        throw ValidationError("mpjpe: prediction and label counts differ");
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i].rows() != layout.total() || gt[i].rows() != layout.total())
            throw ValidationError("mpjpe: poses must have " + std::to_string(layout.total()) + " keypoints");
    const auto gs = groups(part, alignment, layout);
    std::vector<double> out(pred.size(), 0.0);
    size_t total = 0;
    for (const auto& [rows, roots] : gs)
        total += rows.size();
    for (const auto& [rows, roots] : gs) {
        const auto e = kernels::mpjpe_batch_parallel(pred, gt, rows, roots);
        const double w = static_cast<double>(rows.size()) / static_cast<double>(total);
        for (size_t i = 0; i < out.size(); ++i)
            out[i] += w * e[i];
    }
    return out;
}

double mpjpe(const Coords3& pred, const Coords3& gt, Part part, Alignment alignment, const KeypointLayout& layout)
{
    return mpjpe_batch(std::span(&pred, 1), std::span(&gt, 1), part, alignment, layout)[0];
}

const std::vector<std::string>& MetricReport::columns()
{
    static const std::vector<std::string> c{"all", "body", "face", "face_aligned", "hand", "hand_aligned"};
    return c;
}

double& MetricReport::value(const std::string& column)
{
    if (column == "all") return all;
    if (column == "body") return body;
    if (column == "face") return face;
    if (column == "face_aligned") return face_aligned;
    if (column == "hand") return hand;
    if (column == "hand_aligned") return hand_aligned;
    throw ValidationError("unknown metric column '" + column + "'");
}

double MetricReport::value(const std::string& column) const { return const_cast<MetricReport*>(this)->value(column); }

nlohmann::json MetricReport::to_json() const
{
    nlohmann::json j{{"samples", samples}};
    for (const auto& c : columns())
        j[c] = value(c);
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j)
{
    MetricReport r;
    r.samples = j.value("samples", 0);
    for (const auto& c : columns())
        r.value(c) = j.at(c).get<double>();
    return r;
}

std::string MetricReport::table_row() const
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    for (const auto& c : columns())
        os << std::setw(13) << value(c);
    return os.str();
}

MetricReport evaluate(std::span<const Coords3> pred, std::span<const Coords3> gt, const KeypointLayout& layout)
{
    MetricReport r;
    r.samples = static_cast<int>(pred.size());
    if (pred.empty())
        return r;
    auto mean = [&](Part p, Alignment a) {
        const auto e = mpjpe_batch(pred, gt, p, a, layout);
        double s = 0.0;
        for (double v : e)
            s += v;
        return s / static_cast<double>(e.size());
    };
    r.all = mean(Part::all, Alignment::pelvis);
    r.body = mean(Part::body, Alignment::pelvis);
    r.face = mean(Part::face, Alignment::pelvis);
    r.face_aligned = mean(Part::face, Alignment::nose);
    r.hand = mean(Part::hands, Alignment::pelvis);
    r.hand_aligned = mean(Part::hands, Alignment::wrist);
    return r;
}

Eigen::VectorXd box_extent(const Eigen::MatrixXd& points)
{
    if (points.rows() == 0)
        throw DegenerateInputError("bounding box of an empty point set");
    return (points.colwise().maxCoeff() - points.colwise().minCoeff()).transpose();
}

Eigen::Vector2d box_extent(const Pose2D& pose)
{
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    bool any = false;
    for (int k = 0; k < pose.size(); ++k)
        if (pose.is_visible(k)) {
            lo = lo.cwiseMin(pose.coords.row(k).transpose());
            hi = hi.cwiseMax(pose.coords.row(k).transpose());
            any = true;
        }
    if (!any)
        throw DegenerateInputError("2D pose has no visible keypoints");
    return hi - lo;
}

Eigen::Vector3d ScaleStats::factor(const Pose2D& input) const
{
    const Eigen::Vector2d s2 = box_extent(input);
    if (mode == BoxSize::mean_extent) {
        if (!(s2.mean() > 0.0))
            throw DegenerateInputError("input 2D bounding box has zero size");
        return Eigen::Vector3d::Constant(size_3d() * s2.mean() / size_2d());
    }
    if (!(s2.minCoeff() > 0.0))
        throw DegenerateInputError("input 2D bounding box has a zero-size axis");
    return mean_3d * s2.cwiseQuotient(mean_2d).mean();
}

nlohmann::json ScaleStats::to_json() const
{
    return {{"mode", mode == BoxSize::mean_extent ? "mean_extent" : "per_axis"},
            {"mean_3d", {mean_3d.x(), mean_3d.y(), mean_3d.z()}},
            {"mean_2d", {mean_2d.x(), mean_2d.y()}}};
}

ScaleStats ScaleStats::from_json(const nlohmann::json& j)
{
    ScaleStats s;
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "mean_extent" && mode != "per_axis")
        throw SchemaError("unknown box size mode '" + mode + "'");
    s.mode = mode == "mean_extent" ? BoxSize::mean_extent : BoxSize::per_axis;
    for (int a = 0; a < 3; ++a)
        s.mean_3d(a) = j.at("mean_3d").at(static_cast<size_t>(a)).get<double>();
    for (int a = 0; a < 2; ++a)
        s.mean_2d(a) = j.at("mean_2d").at(static_cast<size_t>(a)).get<double>();
    if (!(s.mean_3d.minCoeff() > 0.0) || !(s.mean_2d.minCoeff() > 0.0))
        throw SchemaError("scale statistics must be positive");
    return s;
}

ScaleStats fit_scale_stats(std::span<const Pose2D> inputs, std::span<const Coords3> targets, BoxSize mode)
{
    if (inputs.empty() || inputs.size() != targets.size())
        throw ValidationError("scale statistics need matching, non-empty 2D and 3D sets");
    ScaleStats s;
    s.mode = mode;
    for (size_t i = 0; i < inputs.size(); ++i) {
        s.mean_2d += box_extent(inputs[i]);
        s.mean_3d += box_extent(Eigen::MatrixXd(targets[i]));
    }
    s.mean_2d /= static_cast<double>(inputs.size());
    s.mean_3d /= static_cast<double>(inputs.size());
    if (!(s.mean_2d.minCoeff() > 0.0) || !(s.mean_3d.minCoeff() > 0.0))
        throw DegenerateInputError("training boxes have zero size");
    return s;
}

Coords3 rescale(const Coords3& unit, const ScaleStats& stats, const Pose2D& input)
{
    const Eigen::Vector3d f = stats.factor(input);
    return unit * f.asDiagonal();
}

Coords3 to_unit(const Coords3& metric, const ScaleStats& stats, const Pose2D& input)
{
    const Eigen::Vector3d f = stats.factor(input);
    return metric * f.cwiseInverse().asDiagonal();
}

} // namespace wbforge
