#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wbforge/nn/layers.hpp"
#include "wbforge/skeleton/pose.hpp"
#include "wbforge/synth/heatmap.hpp"

namespace wbforge {

// Noise ladder for the denoiser: sigma(t) in pixels, linear from sigma(1) to sigma(steps).
struct NoiseSchedule {
    int steps = 5;
    double sigma_first = 5.0;
    double sigma_last = 25.0;

    double sigma(int t) const; // t = 0 gives 0 (ground truth); throws outside [0, steps]
    nlohmann::json to_json() const;
    static NoiseSchedule from_json(const nlohmann::json& j);
};

// gt + isotropic Gaussian noise with sigma(t); deterministic per seed.
Coords2 corrupt(const Coords2& gt, int t, std::uint64_t seed, const NoiseSchedule& schedule = {});

// Nested noisy copies x_0 = gt, x_1 .. x_steps with x_t ~ gt + N(0, sigma(t)^2):
// each step adds independent noise with variance sigma(t)^2 - sigma(t-1)^2.
std::vector<Coords2> noise_chain(const Coords2& gt, const NoiseSchedule& schedule, std::mt19937_64& rng);

// A square image region resized to a canvas x canvas source, and a size x size
// window inside it. crop = (image - origin) * scale - offset.
struct CropSpec {
    static constexpr int kCanvas = 384;
    static constexpr int kSize = 224;
    static constexpr double kRegionFactor = 8.0; // region side / part extent
    static constexpr double kCornerMargin = 8.0;

    Eigen::Vector2d origin = Eigen::Vector2d::Zero();
    double scale = 1.0;
    Eigen::Vector2d offset = Eigen::Vector2d::Zero();

    Eigen::Vector2d to_crop(const Eigen::Vector2d& image_uv) const { return (image_uv - origin) * scale - offset; }
    Eigen::Vector2d to_image(const Eigen::Vector2d& crop_uv) const { return (crop_uv + offset) / scale + origin; }
    Coords2 to_crop(const Coords2& image_uv) const;
    Coords2 to_image(const Coords2& crop_uv) const;
    // Throws ValidationError unless the window lies inside the canvas and scale > 0.
    void validate() const;
};

enum class CropPlacement { center, top_left, top_right, bottom_left, bottom_right };

// Region centred on the bounding box of `part_uv` (image pixels), side = kRegionFactor
// times the larger extent (side at least 8 px). The window is centred, or placed so the
// box touches the named corner of the window with kCornerMargin, clamped to the canvas.
CropSpec make_crop(const Coords2& part_uv, CropPlacement placement = CropPlacement::center, double region_scale = 1.0);

enum class RefinerPart { face, hand };
std::string_view to_string(RefinerPart part);
RefinerPart refiner_part_from_string(std::string_view name);

struct RefinerConfig {
    RefinerPart part = RefinerPart::face;
    int keypoints = 68;
    int coarse_grid = 12;
    double coarse_stride = 8.0; // px, sampled from the render pooled by `pool`
    int pool = 4;
    int fine_grid = 8;
    double fine_stride = 2.0;
    int hidden1 = 128;
    int hidden2 = 64;
    double output_scale = 32.0; // px per unit of regressor output
    double heatmap_sigma = 3.0;
    NoiseSchedule schedule;

    static RefinerConfig for_part(RefinerPart part);
    int features() const { return coarse_grid * coarse_grid + fine_grid * fine_grid; }
    nlohmann::json to_json() const;
    static RefinerConfig from_json(const nlohmann::json& j);
};

// Conditioning of one crop: per-keypoint heatmap channels in crop pixels.
struct Conditioning {
    TiledHeatmaps render;
    TiledHeatmaps pooled;
    static Conditioning from(TiledHeatmaps render, int pool);
};

struct RefineResult {
    Coords2 keypoints;                // crop frame
    std::vector<double> displacement; // mean keypoint movement (px) per iteration
};

// Shared per-keypoint denoiser: each keypoint reads a coarse and a fine glimpse of
// its own channel around its current estimate and regresses an offset. One network
// is applied at every step; it is trained to map step t+1 to step t.
class RefinerModel {
public:
    RefinerModel(RefinerConfig config, std::uint64_t seed);
    // Zero output layer: every keypoint stays where it is.
    static RefinerModel identity(RefinerPart part);

    const RefinerConfig& config() const { return config_; }
    nn::Parameters& parameters() { return params_; }
    const nn::Parameters& parameters() const { return params_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    // Glimpse features, one row per keypoint.
    nn::Mat features(const Conditioning& cond, const Coords2& current) const;

    struct Tape {
        nn::Mat x, h1, h2;
    };
    nn::Mat regress(const nn::Mat& features, Tape* tape = nullptr) const; // offsets in px
    void backward(const Tape& tape, const nn::Mat& d_offset, nn::Gradients& g) const;

    // One denoising step. Keypoints whose channel is empty are left in place.
    Coords2 step(const Conditioning& cond, const Coords2& current) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static RefinerModel load(const std::filesystem::path& path);

private:
    RefinerConfig config_;
    nn::Parameters params_;
    nn::Linear l1_, l2_, l3_;
    std::uint64_t seed_ = 0;
    bool trained_ = false;
};

RefineResult refine(const RefinerModel& model, const Conditioning& cond, const Coords2& initial, int iterations = 10);

// A training crop: ground-truth part keypoints in crop pixels. The conditioning
// render is rebuilt from them on demand.
struct RefinerSample {
    Coords2 gt;
};

// Non-occluded part crops from synthetic poses seen by random rig views, with random
// window placement and region scale jitter.
std::vector<RefinerSample> make_refiner_corpus(RefinerPart part, int count, std::uint64_t seed);

Conditioning render_conditioning(const Coords2& crop_uv, const RefinerConfig& config,
                                 const std::vector<std::uint8_t>* visible = nullptr);

struct RefinerTrainConfig {
    int epochs = 8;
    int batch = 8;
    double lr = 1e-3;
    double lr_floor = 1e-5;
    int iterations = 10; // refinement iterations used for validation
    std::uint64_t seed = 0;
};

struct RefinerHistory {
    std::vector<double> train_loss;
    std::vector<double> val_error; // mean px error after `iterations` steps; training loss when val is empty
    double initial_val_error = 0.0;
    double best_val_error = 0.0;
};

// Validation starts every sample from a noisy copy at a step drawn uniformly from 1..steps.
struct RefinerValidation {
    std::vector<Coords2> initial;
};
RefinerValidation make_validation_inputs(const std::vector<RefinerSample>& samples, const NoiseSchedule& schedule,
                                         std::uint64_t seed);

// Per-sample mean keypoint error after `iterations` steps; index 0 = initial error.
std::vector<std::vector<double>> refinement_errors(const RefinerModel& model, const std::vector<RefinerSample>& samples,
                                                   const RefinerValidation& inputs, int iterations);

RefinerHistory train_refiner(RefinerModel& model, const std::vector<RefinerSample>& train,
                             const std::vector<RefinerSample>& val, const RefinerTrainConfig& cfg);

} // namespace wbforge
