#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "wbforge/benchmark/masking.hpp"
#include "wbforge/benchmark/metrics.hpp"
#include "wbforge/nn/layers.hpp"
#include "wbforge/synth/dataset.hpp"

namespace wbforge {

enum class LifterVariant {
    simple, // 6 linear layers, batch norm, ReLU, dropout
    large,  // 8 linear layers, no batch norm, leaky ReLU, dropout
};
std::string_view to_string(LifterVariant v);
LifterVariant lifter_variant_from_string(std::string_view name);

enum class InputNormalization {
    mean_std, // box-normalised coordinates standardised per coordinate
    box,      // box-normalised coordinates only
};

struct MLPLifterConfig {
    LifterVariant variant = LifterVariant::simple;
    int width = 1024;
    double dropout = 0.2;
    double leaky_slope = 0.01;
    InputNormalization normalization = InputNormalization::mean_std;
    BoxSize box = BoxSize::mean_extent;

    int linear_layers() const { return variant == LifterVariant::simple ? 6 : 8; }
    int residual_blocks() const { return (linear_layers() - 2) / 2; }

    static MLPLifterConfig simple(int width = 1024);
    static MLPLifterConfig large(int width = 1024);
    nlohmann::json to_json() const;
    static MLPLifterConfig from_json(const nlohmann::json& j);
};

// Fitted on the training split only.
struct LiftNormalization {
    ScaleStats scale;
    Eigen::VectorXd input_mean, input_std;   // 2 per keypoint
    Eigen::VectorXd target_mean, target_std; // 3 per keypoint, unit-scale pelvis-centred targets

    nlohmann::json to_json() const;
    static LiftNormalization from_json(const nlohmann::json& j);
};

// Box-normalised 2D: visible keypoints minus the visible-box centre, divided by
// its mean extent. Hidden keypoints are zero.
Eigen::VectorXd box_normalized_input(const Pose2D& pose);
// Pelvis-centred unit-scale target, flattened.
Eigen::VectorXd unit_target(const Coords3& camera_pose, const ScaleStats& scale, const Pose2D& input,
                            const KeypointLayout& layout = KeypointLayout::builtin());

LiftNormalization fit_lift_normalization(std::span<const BenchmarkSample> train, BoxSize box = BoxSize::mean_extent,
                                         const KeypointLayout& layout = KeypointLayout::builtin());

// [normalised x, y for every keypoint | mask indicator per keypoint]; hidden
// keypoints are zero after normalisation and flagged 1.
Eigen::VectorXd encode_lift_input(const Pose2D& pose, const LiftNormalization& norm, InputNormalization mode);

class MLPLifter {
public:
    MLPLifter(MLPLifterConfig config, std::uint64_t seed, int keypoints = 133);

    const MLPLifterConfig& config() const { return config_; }
    int keypoints() const { return keypoints_; }
    nn::Parameters& parameters() { return params_; }
    const LiftNormalization& normalization() const { return norm_; }
    void set_normalization(LiftNormalization n) { norm_ = std::move(n); }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    struct Tape {
        std::vector<nn::Mat> pre;     // linear outputs before normalisation / activation
        std::vector<nn::Mat> act;     // inputs to each linear layer
        std::vector<nn::BatchNorm::Cache> bn;
        std::vector<nn::Mat> drop;
    };
    // Rows = samples. Training mode uses batch statistics and dropout and needs rng.
    nn::Mat forward(const nn::Mat& x, bool training, nn::Rng* rng = nullptr, Tape* tape = nullptr);
    nn::Mat predict(const nn::Mat& x) const;
    void backward(const Tape& tape, const nn::Mat& dy, nn::Gradients& g) const;

    // Standardised output row -> metric pelvis-centred pose for this input.
    Coords3 decode(const Eigen::VectorXd& out, const Pose2D& input) const;
    std::vector<Coords3> lift(std::span<const Pose2D> inputs) const;
    // Raw encoded input -> unit-scale pose, for probing the network.
    Coords3 lift_encoded(const Eigen::VectorXd& encoded) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static MLPLifter load(const std::filesystem::path& path);

private:
    nn::Mat forward_impl(nn::Parameters& p, const nn::Mat& x, bool training, nn::Rng* rng, Tape* tape) const;

    MLPLifterConfig config_;
    std::uint64_t seed_ = 0;
    int keypoints_ = 133;
    nn::Parameters params_;
    std::vector<nn::Linear> linear_;
    std::vector<nn::BatchNorm> bn_;
    LiftNormalization norm_;
    bool trained_ = false;
};

struct LifterTrainConfig {
    int epochs = 30;
    int batch = 64;
    double lr = 1e-3;
    double lr_floor = 1e-5;
    double clip_norm = 10.0;
    int patience = 0;       // epochs without validation improvement; 0 disables early stopping
    double max_seconds = 0; // wall-clock budget, 0 = none
    std::uint64_t seed = 0;
    // When set, every training input is masked afresh with a draw from this protocol.
    std::optional<I2DMaskProtocol> train_masks;
};

struct LifterHistory {
    std::vector<double> train_loss;
    std::vector<double> val_mpjpe; // training loss when val is empty
    double best_val_mpjpe = 0.0;
    int best_epoch = -1;
};

// Fits the normalisation on `train` and trains; validation is pelvis-aligned MPJPE on `val`.
LifterHistory train_lifter(MLPLifter& model, const std::vector<BenchmarkSample>& train,
                           const std::vector<BenchmarkSample>& val, const LifterTrainConfig& cfg,
                           const KeypointLayout& layout = KeypointLayout::builtin());

// Oracle: the training mean of the unit-scale targets, rescaled per input.
class MeanPoseLifter {
public:
    explicit MeanPoseLifter(std::span<const BenchmarkSample> train,
                            const KeypointLayout& layout = KeypointLayout::builtin());
    std::vector<Coords3> lift(std::span<const Pose2D> inputs) const;

private:
    LiftNormalization norm_;
    int keypoints_ = 0;
};

std::vector<Pose2D> inputs_of(std::span<const BenchmarkSample> samples);
std::vector<Coords3> labels_of(std::span<const BenchmarkSample> samples);

} // namespace wbforge
