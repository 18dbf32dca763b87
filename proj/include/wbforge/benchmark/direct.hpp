#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "wbforge/benchmark/lifter.hpp"
#include "wbforge/nn/layers.hpp"

namespace wbforge {

// Image-to-3D stand-in: per-keypoint heatmaps of the person, rendered into a
// square grid around the visible box, go through two convolutions and two
// fully connected layers to a unit-scale pose.
struct DirectRegressorConfig {
    int grid = 32;
    double sigma = 1.0;    // grid px
    double padding = 1.2;  // render side / larger box extent
    int conv1_channels = 64;
    int conv1_kernel = 4;  // stride = kernel
    int conv2_channels = 64;
    int hidden = 256;

    nlohmann::json to_json() const;
    static DirectRegressorConfig from_json(const nlohmann::json& j);
};

// keypoints x grid*grid, channel-major; empty channels for hidden keypoints.
nn::Mat render_person(const Pose2D& pose, const DirectRegressorConfig& config);

class DirectRegressor {
public:
    DirectRegressor(DirectRegressorConfig config, std::uint64_t seed, int keypoints = 133);

    const DirectRegressorConfig& config() const { return config_; }
    nn::Parameters& parameters() { return params_; }
    const LiftNormalization& normalization() const { return norm_; }
    void set_normalization(LiftNormalization n) { norm_ = std::move(n); }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    struct Tape {
        std::vector<nn::Mat> cols1, z1, cols2, z2;
        nn::Mat flat, f1;
    };
    // One render per sample; returns standardised unit-scale outputs, one row each.
    nn::Mat forward(std::span<const nn::Mat> renders, Tape* tape = nullptr) const;
    void backward(const Tape& tape, const nn::Mat& dy, nn::Gradients& g) const;

    std::vector<Coords3> predict(std::span<const Pose2D> inputs) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static DirectRegressor load(const std::filesystem::path& path);

private:
    DirectRegressorConfig config_;
    std::uint64_t seed_ = 0;
    int keypoints_ = 133;
    nn::Parameters params_;
    nn::Conv2d conv1_, conv2_;
    nn::Linear fc1_, fc2_;
    LiftNormalization norm_;
    bool trained_ = false;
};

struct DirectTrainConfig {
    int epochs = 10;
    int batch = 32;
    double lr = 1e-3;
    double lr_floor = 1e-5;
    double clip_norm = 10.0;
    double max_seconds = 0;
    std::uint64_t seed = 0;
};

// l1 regression on standardised unit-scale targets; validation is pelvis-aligned MPJPE.
LifterHistory train_direct_regressor(DirectRegressor& model, const std::vector<BenchmarkSample>& train,
                                     const std::vector<BenchmarkSample>& val, const DirectTrainConfig& cfg,
                                     const KeypointLayout& layout = KeypointLayout::builtin());

} // namespace wbforge
