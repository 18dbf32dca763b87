#pragma once

#include <utility>
#include <vector>

#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

// Dense render: channels x height x width floats, row-major per channel.
// Pixel (x, y) samples the image at integer coordinates.
struct HeatmapRender {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    // (x, y) of the channel maximum; the first one in row-major order on ties.
    std::pair<int, int> argmax(int c) const;
    float max(int c) const;
    // Mean over non-overlapping factor x factor blocks; trailing partial blocks are dropped.
    HeatmapRender pooled(int factor) const;
};

// One unit-peak Gaussian per keypoint (or their sum when composite), empty
// channels for hidden keypoints.
HeatmapRender render_heatmaps(const Pose2D& pose, int width, int height, double sigma_px = 3.0,
                              bool composite = false);

// The same render stored as one small window per channel. Equal to the dense
// render pixel for pixel; cheap enough to build per training sample.
class TiledHeatmaps {
public:
    static TiledHeatmaps render(const Pose2D& pose, int width, int height, double sigma_px = 3.0);
    // One full-size tile per channel; all-zero channels become empty.
    static TiledHeatmaps from_dense(const HeatmapRender& dense);

    int channels() const { return static_cast<int>(tiles_.size()); }
    int width() const { return width_; }
    int height() const { return height_; }

    float at(int c, int y, int x) const;
    // True when the keypoint was hidden or fell outside the image.
    bool empty(int c) const { return tiles_[static_cast<size_t>(c)].values.empty(); }
    // Bilinear interpolation between integer pixel positions; zero outside the image.
    double sample(int c, double x, double y) const;
    // Block-mean pooling, identical to HeatmapRender::pooled on the dense render.
    TiledHeatmaps pooled(int factor) const;
    HeatmapRender to_dense() const;

private:
    struct Tile {
        int x0 = 0, y0 = 0, w = 0, h = 0;
        std::vector<float> values;
    };
    int width_ = 0, height_ = 0;
    std::vector<Tile> tiles_;
};

} // namespace wbforge
