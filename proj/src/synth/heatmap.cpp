#include "wbforge/synth/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "wbforge/errors.hpp"
#include "wbforge/kernels/kernels.hpp"

namespace wbforge {

std::pair<int, int> HeatmapRender::argmax(int c) const
{
    const float* p = data.data() + static_cast<size_t>(c) * height * width;
    const auto it = std::max_element(p, p + static_cast<size_t>(height) * width);
    const auto idx = static_cast<int>(it - p);
    return {idx % width, idx / width};
}

float HeatmapRender::max(int c) const
{
    const auto [x, y] = argmax(c);
    return at(c, y, x);
}

HeatmapRender HeatmapRender::pooled(int factor) const
{
    if (factor < 1)
        throw ValidationError("pooling factor must be positive");
    HeatmapRender out;
    out.channels = channels;
    out.width = width / factor;
    out.height = height / factor;
    out.data.assign(static_cast<size_t>(channels) * out.width * out.height, 0.0f);
    const float norm = 1.0f / static_cast<float>(factor * factor);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                float s = 0.0f;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += at(c, y * factor + dy, x * factor + dx);
                out.at(c, y, x) = s * norm;
            }
    return out;
}

HeatmapRender render_heatmaps(const Pose2D& pose, int width, int height, double sigma_px, bool composite)
{
    HeatmapRender r;
    r.channels = composite ? 1 : pose.size();
    r.width = width;
    r.height = height;
    r.data.resize(static_cast<size_t>(r.channels) * width * height);
    kernels::render_parallel(pose.coords, pose.visible, width, height, sigma_px, composite, r.data.data());
    return r;
}

TiledHeatmaps TiledHeatmaps::render(const Pose2D& pose, int width, int height, double sigma_px)
{
    if (!(sigma_px > 0.0))
        throw ValidationError("heatmap sigma must be positive");
    TiledHeatmaps t;
    t.width_ = width;
    t.height_ = height;
    t.tiles_.resize(static_cast<size_t>(pose.size()));
    const int r = kernels::blob_radius(sigma_px);
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int k = 0; k < pose.size(); ++k) {
        const double u = pose.coords(k, 0), v = pose.coords(k, 1);
        if (!pose.visible[k] || !std::isfinite(u) || !std::isfinite(v))
            continue;
        const int cx = static_cast<int>(std::lround(u)), cy = static_cast<int>(std::lround(v));
        const int x0 = std::max(0, cx - r), x1 = std::min(width - 1, cx + r);
        const int y0 = std::max(0, cy - r), y1 = std::min(height - 1, cy + r);
        if (x0 > x1 || y0 > y1)
            continue;
        Tile& tile = t.tiles_[k];
        tile.x0 = x0;
        tile.y0 = y0;
        tile.w = x1 - x0 + 1;
        tile.h = y1 - y0 + 1;
        tile.values.resize(static_cast<size_t>(tile.w) * tile.h);
        // Same expression and float conversion as the dense kernel.
        for (int y = y0; y <= y1; ++y) {
            const double dy2 = (y - v) * (y - v);
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - u;
                tile.values[static_cast<size_t>(y - y0) * tile.w + (x - x0)] =
                    static_cast<float>(std::exp(-(dx * dx + dy2) * inv2s2));
            }
        }
    }
    return t;
}

TiledHeatmaps TiledHeatmaps::from_dense(const HeatmapRender& dense)
{
    if (dense.data.size() != static_cast<size_t>(dense.channels) * dense.width * dense.height)
        throw ValidationError("heatmap render has inconsistent dimensions");
    TiledHeatmaps out;
    out.width_ = dense.width;
    out.height_ = dense.height;
    out.tiles_.resize(static_cast<size_t>(dense.channels));
    const size_t plane = static_cast<size_t>(dense.width) * dense.height;
    for (int c = 0; c < dense.channels; ++c) {
        const auto first = dense.data.begin() + static_cast<std::ptrdiff_t>(c * plane);
        if (std::all_of(first, first + static_cast<std::ptrdiff_t>(plane), [](float v) { return v == 0.0f; }))
            continue;
        Tile& t = out.tiles_[static_cast<size_t>(c)];
        t.w = dense.width;
        t.h = dense.height;
        t.values.assign(first, first + static_cast<std::ptrdiff_t>(plane));
    }
    return out;
}

float TiledHeatmaps::at(int c, int y, int x) const
{
    const Tile& t = tiles_[c];
    if (x < t.x0 || y < t.y0 || x >= t.x0 + t.w || y >= t.y0 + t.h)
        return 0.0f;
    return t.values[static_cast<size_t>(y - t.y0) * t.w + (x - t.x0)];
}

double TiledHeatmaps::sample(int c, double x, double y) const
{
    const Tile& t = tiles_[c];
    if (t.values.empty() || !(x > -1.0) || !(y > -1.0) || !(x < width_) || !(y < height_))
        return 0.0;
    const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
    const double fx = x - xi, fy = y - yi;
    auto px = [&](int yy, int xx) -> double {
        if (xx < 0 || yy < 0 || xx >= width_ || yy >= height_)
            return 0.0;
        return at(c, yy, xx);
    };
    return (1 - fy) * ((1 - fx) * px(yi, xi) + fx * px(yi, xi + 1)) +
           fy * ((1 - fx) * px(yi + 1, xi) + fx * px(yi + 1, xi + 1));
}

TiledHeatmaps TiledHeatmaps::pooled(int factor) const
{
    if (factor < 1)
        throw ValidationError("pooling factor must be positive");
    TiledHeatmaps out;
    out.width_ = width_ / factor;
    out.height_ = height_ / factor;
    out.tiles_.resize(tiles_.size());
    const float norm = 1.0f / static_cast<float>(factor * factor);
    for (size_t c = 0; c < tiles_.size(); ++c) {
        const Tile& t = tiles_[c];
        if (t.values.empty())
            continue;
        const int X0 = t.x0 / factor, Y0 = t.y0 / factor;
        const int X1 = std::min(out.width_ - 1, (t.x0 + t.w - 1) / factor);
        const int Y1 = std::min(out.height_ - 1, (t.y0 + t.h - 1) / factor);
        if (X0 > X1 || Y0 > Y1)
            continue;
        Tile& o = out.tiles_[c];
        o.x0 = X0;
        o.y0 = Y0;
        o.w = X1 - X0 + 1;
        o.h = Y1 - Y0 + 1;
        o.values.resize(static_cast<size_t>(o.w) * o.h);
        for (int Y = Y0; Y <= Y1; ++Y)
            for (int X = X0; X <= X1; ++X) {
                float s = 0.0f;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += at(static_cast<int>(c), Y * factor + dy, X * factor + dx);
                o.values[static_cast<size_t>(Y - Y0) * o.w + (X - X0)] = s * norm;
            }
    }
    return out;
}

HeatmapRender TiledHeatmaps::to_dense() const
{
    HeatmapRender r;
    r.channels = channels();
    r.width = width_;
    r.height = height_;
    r.data.assign(static_cast<size_t>(r.channels) * width_ * height_, 0.0f);
    for (int c = 0; c < r.channels; ++c) {
        const Tile& t = tiles_[c];
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x)
                r.at(c, t.y0 + y, t.x0 + x) = t.values[static_cast<size_t>(y) * t.w + x];
    }
    return r;
}

} // namespace wbforge
