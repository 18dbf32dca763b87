#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "wbforge/geometry/camera.hpp"
#include "wbforge/geometry/triangulation.hpp"
#include "wbforge/refine/refiner.hpp"
#include "wbforge/skeleton/layout.hpp"
#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

// Supplies the per-keypoint conditioning channels for one part in one crop of one view.
class ConditioningProvider {
public:
    virtual ~ConditioningProvider() = default;
    virtual Conditioning conditioning(int view, const CropSpec& crop, const std::vector<int>& rows,
                                      const RefinerConfig& config) const = 0;
};

// Renders channels from the projections of a known world pose. Stands in for an
// image-driven provider on synthetic data; keypoints behind the camera or outside
// the crop get empty channels.
class SyntheticConditioning final : public ConditioningProvider {
public:
    SyntheticConditioning(Pose3D world, const Rig& rig);
    Conditioning conditioning(int view, const CropSpec& crop, const std::vector<int>& rows,
                              const RefinerConfig& config) const override;

private:
    Pose3D world_;
    const Rig* rig_;
};

struct RgbImage {
    int width = 0, height = 0;
    std::vector<float> rgb; // interleaved, row-major, values in [0, 1]

    // Binary PPM (P6, maxval 255).
    static RgbImage load_ppm(const std::filesystem::path& path);
    // Bilinear, zero outside; channel 0..2.
    double sample(int channel, double x, double y) const;
};

// Image-driven conditioning: the crop window is resampled from the view's image
// and a per-pixel linear map with a sigmoid turns colour into one channel per
// keypoint. The map is randomly initialised and ships untrained.
class RgbConditioning final : public ConditioningProvider {
public:
    RgbConditioning(std::vector<RgbImage> views, int keypoints, std::uint64_t seed);
    Conditioning conditioning(int view, const CropSpec& crop, const std::vector<int>& rows,
                              const RefinerConfig& config) const override;

    Eigen::MatrixXd& weights() { return weights_; } // keypoints x 4 (rgb + bias)

private:
    std::vector<RgbImage> views_;
    Eigen::MatrixXd weights_;
};

struct RefinerSet {
    const RefinerModel* face = nullptr;
    const RefinerModel* hand = nullptr; // used for both hands

    const RefinerModel& for_part(Part part) const;
};

struct MultiviewRefineOptions {
    int iterations = 10;
    VarianceAggregation aggregation = VarianceAggregation::min;
    std::vector<Part> parts{Part::face, Part::left_hand, Part::right_hand};
};

struct PartRefinement {
    Part part = Part::face;
    std::pair<int, int> views{-1, -1};
    double mean_shift_px = 0.0; // mean 2D displacement over the two selected views
    bool skipped = false;       // no usable view pair
};

struct MultiviewRefineResult {
    Pose3D pose;
    std::vector<PartRefinement> parts;
};

// Project each part into every view, refine it in a centred crop, choose the two
// views with the most spread-out refined projections and re-triangulate the part
// from them. Rows outside the refined parts are returned unchanged.
MultiviewRefineResult refine_pose_views(const Pose3D& pose, const Rig& rig, const RefinerSet& refiners,
                                        const ConditioningProvider& provider, const MultiviewRefineOptions& options = {},
                                        const KeypointLayout& layout = KeypointLayout::builtin());

} // namespace wbforge
