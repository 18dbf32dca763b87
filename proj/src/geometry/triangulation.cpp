#include "wbforge/geometry/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "wbforge/errors.hpp"

namespace wbforge {

namespace {

bool has_usable_pair(std::span<const Observation> obs, const Rig& rig)
{
    for (size_t i = 0; i < obs.size(); ++i) {
        for (size_t j = i + 1; j < obs.size(); ++j) {
            const int a = obs[i].camera, b = obs[j].camera;
            if (a == b || rig.opposing(a, b))
                continue;
            const double baseline = (rig.camera(a).center() - rig.camera(b).center()).norm();
            if (baseline > 1e-9 * std::max(1.0, rig.camera(a).center().norm()))
                return true;
        }
    }
    return false;
}

} // namespace

TriangulatedPoint triangulate(std::span<const Observation> observations, const Rig& rig)
{
    const auto n = static_cast<Eigen::Index>(observations.size());
    if (n < 2)
        throw InsufficientViewsError("triangulation needs at least two observations");
    for (const auto& o : observations)
        if (o.camera < 0 || o.camera >= rig.size())
            throw ValidationError("observation references unknown camera index");
    if (!has_usable_pair(observations, rig))
        throw DegenerateGeometryError("no non-opposing camera pair with a usable baseline");

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& o : observations)
        centroid += rig.camera(o.camera).center();
    centroid /= static_cast<double>(n);
    double spread = 0.0;
    for (const auto& o : observations)
        spread += (rig.camera(o.camera).center() - centroid).norm();
    spread /= static_cast<double>(n);
    if (!(spread > 0.0))
        spread = 1.0;

    // Conditioned world point: X = spread * Xc + centroid.
    Eigen::Matrix4d H = Eigen::Matrix4d::Identity();
    H.topLeftCorner<3, 3>() *= spread;
    H.topRightCorner<3, 1>() = centroid;

    Eigen::MatrixXd A(2 * n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = observations[static_cast<size_t>(i)];
        const CameraModel& cam = rig.camera(o.camera);
        const Eigen::Vector3d xn = cam.K.inverse() * Eigen::Vector3d(o.uv.x(), o.uv.y(), 1.0);
        Eigen::Matrix<double, 3, 4> P;
        P.leftCols<3>() = cam.R;
        P.col(3) = cam.t;
        const Eigen::Matrix<double, 3, 4> Pc = P * H;
        A.row(2 * i) = xn.x() / xn.z() * Pc.row(2) - Pc.row(0);
        A.row(2 * i + 1) = xn.y() / xn.z() * Pc.row(2) - Pc.row(1);
        A.row(2 * i).normalize();
        A.row(2 * i + 1).normalize();
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (!(sv(2) > 1e-12 * sv(0)))
        throw DegenerateGeometryError("triangulation system is rank deficient");
    const Eigen::Vector4d Xh = svd.matrixV().col(3);
    if (std::abs(Xh(3)) < 1e-14)
        throw DegenerateGeometryError("triangulated point lies at infinity");

    TriangulatedPoint out;
    out.point = spread * Xh.head<3>() / Xh(3) + centroid;

    double sq = 0.0;
    for (const auto& o : observations) {
        const CameraModel& cam = rig.camera(o.camera);
        const Eigen::Vector3d h = cam.K * cam.to_camera(out.point);
        sq += (h.head<2>() / h.z() - o.uv).squaredNorm();
    }
    out.rms_residual_px = std::sqrt(sq / static_cast<double>(n));
    return out;
}

bool usable(const Pose2D& view, int row, double visibility_threshold)
{
    return view.visible[row] != 0 && view.confidence[row] >= visibility_threshold;
}

PoseTriangulation triangulate_pose(std::span<const Pose2D> views, const Rig& rig, const TriangulationOptions& options)
{
    if (static_cast<int>(views.size()) != rig.size())
        throw ValidationError("triangulate_pose expects one 2D pose per rig camera");
    const int count = views.front().size();
    for (const auto& v : views)
        if (v.size() != count || static_cast<int>(v.visible.size()) != count || v.confidence.size() != count)
            throw ValidationError("triangulate_pose: views disagree on keypoint count");

    PoseTriangulation out;
    out.pose.coords = Coords3::Zero(count, 3);
    out.pose.frame = Frame::world;
    out.status.assign(static_cast<size_t>(count), KeypointStatus::unseen);
    out.residual_px.assign(static_cast<size_t>(count), 0.0);

    std::vector<Observation> obs;
    for (int k = 0; k < count; ++k) {
        obs.clear();
        for (int v = 0; v < rig.size(); ++v)
            if (usable(views[v], k, options.visibility_threshold))
                obs.push_back({v, views[v].coords.row(k).transpose()});

        if (obs.empty())
            continue;
        if (obs.size() == 1) {
            out.status[k] = KeypointStatus::seen_once;
            continue;
        }
        if (!has_usable_pair(obs, rig)) {
            out.status[k] = KeypointStatus::opposing_only;
            continue;
        }

        TriangulatedPoint tp;
        if (options.mode == ViewMode::all_views) {
            tp = triangulate(obs, rig);
        } else {
            tp.rms_residual_px = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < obs.size(); ++i)
                for (size_t j = i + 1; j < obs.size(); ++j) {
                    if (rig.opposing(obs[i].camera, obs[j].camera))
                        continue;
                    const Observation pair[2] = {obs[i], obs[j]};
                    auto candidate = triangulate(pair, rig);
                    if (candidate.rms_residual_px < tp.rms_residual_px)
                        tp = candidate;
                }
        }
        out.pose.coords.row(k) = tp.point.transpose();
        out.residual_px[k] = tp.rms_residual_px;
        out.status[k] = KeypointStatus::triangulated;
    }
    return out;
}

PoseClass classify_pose(std::span<const KeypointStatus> statuses)
{
    bool all_triangulated = true;
    for (auto s : statuses) {
        if (s == KeypointStatus::unseen)
            return PoseClass::rejected;
        if (s != KeypointStatus::triangulated)
            all_triangulated = false;
    }
    return all_triangulated ? PoseClass::complete : PoseClass::incomplete;
}

std::string_view to_string(KeypointStatus status)
{
    switch (status) {
    case KeypointStatus::triangulated: return "triangulated";
    case KeypointStatus::seen_once: return "seen_once";
    case KeypointStatus::opposing_only: return "opposing_only";
    case KeypointStatus::unseen: return "unseen";
    }
    return "?";
}

std::string_view to_string(PoseClass cls)
{
    switch (cls) {
    case PoseClass::complete: return "complete";
    case PoseClass::incomplete: return "incomplete";
    case PoseClass::rejected: return "rejected";
    }
    return "?";
}

double coordinate_variance(const Coords2& points)
{
    if (points.rows() == 0)
        return 0.0;
    const Eigen::RowVector2d mean = points.colwise().mean();
    return (points.rowwise() - mean).squaredNorm() / static_cast<double>(points.rows());
}

std::pair<int, int> select_views(std::span<const Coords2> projections, const Rig& rig,
                                 VarianceAggregation aggregation)
{
    if (static_cast<int>(projections.size()) != rig.size())
        throw ValidationError("select_views expects one projection set per rig camera");
    std::vector<double> var;
    for (const auto& p : projections)
        var.push_back(coordinate_variance(p));

    std::pair<int, int> best{-1, -1};
    double best_score = -1.0;
    for (int a = 0; a < rig.size(); ++a)
        for (int b = a + 1; b < rig.size(); ++b) {
            if (rig.opposing(a, b))
                continue;
            const double score =
                aggregation == VarianceAggregation::min ? std::min(var[a], var[b]) : 0.5 * (var[a] + var[b]);
            if (score > best_score) {
                best_score = score;
                best = {a, b};
            }
        }
    if (best.first < 0)
        throw DegenerateGeometryError("rig has no non-opposing camera pair");
    return best;
}

} // namespace wbforge
