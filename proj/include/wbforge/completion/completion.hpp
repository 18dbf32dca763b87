#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "wbforge/geometry/camera.hpp"
#include "wbforge/geometry/triangulation.hpp"
#include "wbforge/nn/layers.hpp"
#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

struct CompletionNetConfig {
    int keypoints = 133;
    int frequencies = 8; // per coordinate; token features = 3 * 2 * frequencies
    int d_model = 64;
    int n_head = 1;
    int blocks = 4;
    int layers_per_block = 2;
    int ff_dim = 128;
    double radius_mm = 2000.0; // half extent R of the centroid-relative working volume
    bool pre_norm = true;      // pre-norm layers plus a shared norm in front of the output head
    // Rows supervised by each block's output, strictly nested, last = every keypoint.
    std::vector<std::vector<int>> curriculum;
    // Part id per keypoint, used only to initialise the positional table; may be empty.
    std::vector<int> part_of;

    int token_features() const { return 6 * frequencies; }

    // Body 1-17, then + feet (1-23), + face (1-91), + hands (all).
    static CompletionNetConfig standard(const KeypointLayout& layout = KeypointLayout::builtin());
    void validate() const;

    nlohmann::json to_json() const;
    static CompletionNetConfig from_json(const nlohmann::json& j);
};

struct CompletionLossConfig {
    double alpha = 0.1;  // weight of the 2D reprojection term (px)
    double beta = 0.01;  // weight of the symmetric bone-length term (mm)
};

// true = masked / unknown.
using MaskPattern = std::vector<std::uint8_t>;

// Frequencies pi * 2^k / R for k = 0..count-1.
Eigen::VectorXd coordinate_frequencies(int count, double radius_mm);

// Per keypoint, per axis a: [sin(w_0 c_a) .. sin(w_{F-1} c_a), cos(w_0 c_a) .. cos(w_{F-1} c_a)],
// axes x, y, z in that order: 3 * 2 * F features per row.
nn::Mat encode_coordinates(const Coords3& coords, const Eigen::VectorXd& omegas);

struct TrainingMaskDraw {
    MaskPattern mask;
    bool block_branch = false;
    int block = -1; // 0 body, 1 left hand, 2 right hand, 3 left face half, 4 right face half
};

// Half of the draws mask each keypoint independently with probability 0.15;
// the other half mask exactly one of five blocks chosen uniformly.
TrainingMaskDraw draw_training_mask(const KeypointLayout& layout, nn::Rng& rng);
MaskPattern sample_training_mask(const KeypointLayout& layout, std::uint64_t seed);

class CompletionNet {
public:
    struct Output {
        std::vector<Coords3> blocks; // one full pose per curriculum block (mm, input frame)
        Coords3 completed;           // final block at masked rows, input verbatim elsewhere
    };

    CompletionNet(CompletionNetConfig config, std::uint64_t seed);

    const CompletionNetConfig& config() const { return config_; }
    nn::Parameters& parameters() { return params_; }
    const nn::Parameters& parameters() const { return params_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    // Masked rows of `pose` are ignored; at least one row must be unmasked.
    Output forward(const Coords3& pose, const MaskPattern& mask) const;

    struct Tape {
        nn::Mat features;
        nn::Mat x0;
        std::vector<nn::EncoderLayer::Cache> layers;
        std::vector<nn::Mat> block_hidden; // head input per block
        std::vector<nn::LayerNorm::Cache> out_norm;
        Eigen::RowVector3d center;
        MaskPattern mask;
    };
    Output forward(const Coords3& pose, const MaskPattern& mask, Tape& tape) const;
    // d_blocks: dL/d(block output), one matrix per block.
    void backward(const Tape& tape, const std::vector<Coords3>& d_blocks, nn::Gradients& g) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
    static CompletionNet load(const std::filesystem::path& path);

private:
    CompletionNetConfig config_;
    Eigen::VectorXd omegas_;
    nn::Parameters params_;
    int mask_token_ = -1, pos_ = -1;
    nn::Linear input_, head_;
    nn::LayerNorm out_norm_;
    std::vector<nn::EncoderLayer> layers_;
    std::uint64_t seed_ = 0;
    bool trained_ = false;
};

// 2D evidence for the reprojection term: one (possibly partial) detection per rig view.
struct CompletionViews {
    const Rig* rig = nullptr;
    std::span<const Pose2D> views;
};

struct CompletionLoss {
    double total = 0.0;
    double l3d = 0.0; // summed over blocks
    double l2d = 0.0; // summed over blocks
    double lsym = 0.0;
    int empty_blocks = 0; // blocks without any 2D evidence (their L2D contributes 0)
};

// total = sum_b [L3D_b + alpha L2D_b] + beta Lsym(completed).
//   L3D_b: mean over every row of curriculum[b] of the l1 error (mm); unmasked rows
//          are reconstructed too.
//   L2D_b: mean over (row in curriculum[b], view) pairs with a visible 2D keypoint of
//          the l1 pixel distance between the projected prediction and the detection.
//   Lsym: symmetric_length_error of the completed pose; its gradient reaches masked rows only.
// When grads is non-null it receives dL/d(block output) for every block.
CompletionLoss completion_loss(const CompletionNet::Output& out, const Coords3& gt3d,
                               const std::optional<CompletionViews>& views, const MaskPattern& mask,
                               const CompletionLossConfig& cfg, const CompletionNetConfig& net_cfg,
                               const KeypointLayout& layout, std::vector<Coords3>* grads = nullptr);

struct CompletionSample {
    Coords3 pose;               // complete ground truth, world mm
    std::vector<Pose2D> views;  // detections per rig view; may be empty
};

struct CompletionTrainConfig {
    int epochs = 20;
    int batch = 16;
    double lr = 1e-3;
    double lr_floor = 1e-5;
    int warmup_steps = 50;       // linear ramp before the cosine decay
    double clip_norm = 1000.0;
    int patience = 5;            // epochs without validation improvement before stopping
    double max_seconds = 0.0;    // 0 = no wall-clock limit
    std::uint64_t seed = 0;
};

struct CompletionHistory {
    std::vector<double> train_loss;      // mean total loss per epoch
    std::vector<double> val_mpjpe;       // masked-keypoint MPJPE (mm) per epoch; training loss when val is empty
    double initial_val_mpjpe = 0.0;
    double best_val_mpjpe = 0.0;
    int best_epoch = -1;
    bool stopped_early = false;
};

// Adam with cosine decay over the planned steps, batch-parallel gradients,
// early stopping on validation MPJPE with the best weights restored.
// Validation masks are drawn once from the seed. Throws DivergenceError on a non-finite loss.
CompletionHistory train_completion(CompletionNet& net, const std::vector<CompletionSample>& train,
                                   const std::vector<CompletionSample>& val, const Rig* rig,
                                   const CompletionLossConfig& loss_cfg, const CompletionTrainConfig& cfg,
                                   const KeypointLayout& layout = KeypointLayout::builtin());

// Mean over masked rows of the Euclidean error, averaged over samples.
double masked_mpjpe(const CompletionNet& net, const std::vector<CompletionSample>& samples,
                    const std::vector<MaskPattern>& masks);

// Baseline: the per-keypoint mean of training poses, expressed relative to the
// centroid of the unmasked keypoints exactly as the network sees its input.
class MeanPoseCompleter {
public:
    explicit MeanPoseCompleter(const std::vector<CompletionSample>& train);
    Coords3 complete(const Coords3& pose, const MaskPattern& mask) const;
    double masked_mpjpe(const std::vector<CompletionSample>& samples, const std::vector<MaskPattern>& masks) const;

private:
    Coords3 mean_;
};

// Fill every keypoint that is not triangulated; triangulated rows are copied verbatim.
// Throws Error when the network has not been trained or loaded.
Pose3D complete(const CompletionNet& net, const Pose3D& pose, std::span<const KeypointStatus> statuses);

} // namespace wbforge
