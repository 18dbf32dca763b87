#include "wbforge/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>

#include "wbforge/errors.hpp"

namespace wbforge::kernels {

namespace {

struct Blob {
    double u, v;
    int cx, cy;
};

void check_render_args(const Coords2& uv, const std::vector<std::uint8_t>& visible, int width, int height,
                       double sigma_px)
{
    if (!(sigma_px > 0.0))
        throw ValidationError("heatmap sigma must be positive");
    if (width <= 0 || height <= 0)
        throw ValidationError("heatmap size must be positive");
    if (static_cast<Eigen::Index>(visible.size()) != uv.rows())
        throw ValidationError("visibility count does not match keypoint count");
}

std::vector<Blob> blobs(const Coords2& uv)
{
    std::vector<Blob> out(static_cast<size_t>(uv.rows()));
    for (Eigen::Index k = 0; k < uv.rows(); ++k) {
        const double u = uv(k, 0), v = uv(k, 1);
        out[k] = {u, v, static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
    }
    return out;
}

// Adds channel k's blob restricted to image row y into `row`.
inline void splat_row(const Blob& b, int y, int width, int r, double inv2s2, float* row)
{
    const int x0 = std::max(0, b.cx - r), x1 = std::min(width - 1, b.cx + r);
    const double dy2 = (y - b.v) * (y - b.v);
    for (int x = x0; x <= x1; ++x) {
        const double dx = x - b.u;
        row[x] += static_cast<float>(std::exp(-(dx * dx + dy2) * inv2s2));
    }
}

bool usable_blob(const Blob& b, std::uint8_t vis, int width, int height, int r)
{
    return vis != 0 && std::isfinite(b.u) && std::isfinite(b.v) && b.cx + r >= 0 && b.cx - r < width &&
           b.cy + r >= 0 && b.cy - r < height;
}

} // namespace

int blob_radius(double sigma_px)
{
    return static_cast<int>(std::ceil(5.7 * sigma_px));
}

void render_serial(const Coords2& uv, const std::vector<std::uint8_t>& visible, int width, int height,
                   double sigma_px, bool composite, float* out)
{
    check_render_args(uv, visible, width, height, sigma_px);
    const int channels = composite ? 1 : static_cast<int>(uv.rows());
    const size_t plane = static_cast<size_t>(width) * height;
    std::memset(out, 0, sizeof(float) * plane * channels);
    const int r = blob_radius(sigma_px);
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    const auto bs = blobs(uv);

    for (size_t k = 0; k < bs.size(); ++k) {
        if (!usable_blob(bs[k], visible[k], width, height, r))
            continue;
        float* base = out + (composite ? 0 : k * plane);
        const int y0 = std::max(0, bs[k].cy - r), y1 = std::min(height - 1, bs[k].cy + r);
        for (int y = y0; y <= y1; ++y)
            splat_row(bs[k], y, width, r, inv2s2, base + static_cast<size_t>(y) * width);
    }
}

void render_parallel(const Coords2& uv, const std::vector<std::uint8_t>& visible, int width, int height,
                     double sigma_px, bool composite, float* out)
{
    check_render_args(uv, visible, width, height, sigma_px);
    const int channels = composite ? 1 : static_cast<int>(uv.rows());
    const size_t plane = static_cast<size_t>(width) * height;
    const int r = blob_radius(sigma_px);
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    const auto bs = blobs(uv);
    const int n = static_cast<int>(bs.size());

    if (composite) {
        // Rows are independent; within a row channels are added in the same
        // ascending order as the serial loop, so sums match bit for bit.
#pragma omp parallel for schedule(static)
        for (int y = 0; y < height; ++y) {
            float* row = out + static_cast<size_t>(y) * width;
            std::fill(row, row + width, 0.0f);
            for (int k = 0; k < n; ++k) {
                if (!usable_blob(bs[k], visible[k], width, height, r) || y < bs[k].cy - r || y > bs[k].cy + r)
                    continue;
                splat_row(bs[k], y, width, r, inv2s2, row);
            }
        }
        return;
    }

#pragma omp parallel for schedule(dynamic, 4)
    for (int k = 0; k < channels; ++k) {
        float* base = out + static_cast<size_t>(k) * plane;
        std::fill(base, base + plane, 0.0f);
        if (!usable_blob(bs[k], visible[k], width, height, r))
            continue;
        const int y0 = std::max(0, bs[k].cy - r), y1 = std::min(height - 1, bs[k].cy + r);
        for (int y = y0; y <= y1; ++y)
            splat_row(bs[k], y, width, r, inv2s2, base + static_cast<size_t>(y) * width);
    }
}

std::vector<PoseTriangulation> triangulate_batch_serial(std::span<const ViewSet> sets, const Rig& rig,
                                                        const TriangulationOptions& options)
{
    std::vector<PoseTriangulation> out(sets.size());
    for (size_t i = 0; i < sets.size(); ++i)
        out[i] = triangulate_pose(sets[i], rig, options);
    return out;
}

std::vector<PoseTriangulation> triangulate_batch_parallel(std::span<const ViewSet> sets, const Rig& rig,
                                                          const TriangulationOptions& options)
{
    std::vector<PoseTriangulation> out(sets.size());
    std::vector<std::exception_ptr> errors(sets.size());
    const auto n = static_cast<std::ptrdiff_t>(sets.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[i] = triangulate_pose(sets[i], rig, options);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    // Report the first failure in input order, as the serial loop would.
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

namespace {

double mpjpe_one(const Coords3& pred, const Coords3& gt, const std::vector<int>& rows,
                 const std::vector<int>& root_rows)
{
    Eigen::RowVector3d rp = Eigen::RowVector3d::Zero(), rg = Eigen::RowVector3d::Zero();
    for (int r : root_rows) {
        rp += pred.row(r);
        rg += gt.row(r);
    }
    rp /= static_cast<double>(root_rows.size());
    rg /= static_cast<double>(root_rows.size());
    double sum = 0.0;
    for (int r : rows)
        sum += ((pred.row(r) - rp) - (gt.row(r) - rg)).norm();
    return sum / static_cast<double>(rows.size());
}

void check_mpjpe_args(std::span<const Coords3> pred, std::span<const Coords3> gt, const std::vector<int>& rows,
                      const std::vector<int>& root_rows)
{
    if (pred.size() != gt.size())
        throw ValidationError("prediction and ground-truth batches differ in size");
    if (rows.empty() || root_rows.empty())
        throw ValidationError("mpjpe needs at least one keypoint and one root keypoint");
}

} // namespace

std::vector<double> mpjpe_batch_serial(std::span<const Coords3> pred, std::span<const Coords3> gt,
                                       const std::vector<int>& rows, const std::vector<int>& root_rows)
{
    check_mpjpe_args(pred, gt, rows, root_rows);
    std::vector<double> out(pred.size());
    for (size_t i = 0; i < pred.size(); ++i)
        out[i] = mpjpe_one(pred[i], gt[i], rows, root_rows);
    return out;
}

std::vector<double> mpjpe_batch_parallel(std::span<const Coords3> pred, std::span<const Coords3> gt,
                                         const std::vector<int>& rows, const std::vector<int>& root_rows)
{
    check_mpjpe_args(pred, gt, rows, root_rows);
    std::vector<double> out(pred.size());
    const auto n = static_cast<std::ptrdiff_t>(pred.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = mpjpe_one(pred[i], gt[i], rows, root_rows);
    return out;
}

} // namespace wbforge::kernels
