#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbforge/synth/dataset.hpp"

namespace wbforge {

enum class MaskBranch { keypoints, face, left_hand, right_hand };
std::string_view to_string(MaskBranch b);
MaskBranch mask_branch_from_string(std::string_view name);

// Test-input masking for the image-to-3D-from-incomplete-2D task: one
// exclusive branch per pose, either independent per-keypoint drops or a whole
// face / hand.
struct I2DMaskProtocol {
    std::array<double, 4> branch_probability{0.40, 0.20, 0.20, 0.20};
    double keypoint_rate = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static I2DMaskProtocol from_json(const nlohmann::json& j);
};

struct PoseMask {
    int id = 0;
    MaskBranch branch = MaskBranch::keypoints;
    std::vector<std::uint8_t> masked; // one flag per keypoint row
};

// Draw one mask. Per-keypoint draws never mask every keypoint.
PoseMask draw_i2d_mask(int id, const I2DMaskProtocol& protocol, std::mt19937_64& rng,
                       const KeypointLayout& layout = KeypointLayout::builtin());

struct MaskRecord {
    I2DMaskProtocol protocol;
    std::vector<PoseMask> masks; // in input order
};

// Masked keypoints become invisible with zero confidence; their coordinates
// are kept but ignored by every consumer. The record is fully determined by
// the protocol seed and the sample order.
std::vector<BenchmarkSample> apply_i2d_mask(const std::vector<BenchmarkSample>& samples, const I2DMaskProtocol& protocol,
                                            MaskRecord* record = nullptr,
                                            const KeypointLayout& layout = KeypointLayout::builtin());

// Re-apply a stored record to the same samples (matched by id).
std::vector<BenchmarkSample> apply_mask_record(const std::vector<BenchmarkSample>& samples, const MaskRecord& record);

// masks.jsonl: first line {"protocol": ...}, then one {"id", "branch",
// "masked": [1-based keypoint ids]} per sample. Written atomically.
void write_mask_file(const std::filesystem::path& path, const MaskRecord& record,
                     const KeypointLayout& layout = KeypointLayout::builtin());
MaskRecord read_mask_file(const std::filesystem::path& path, const KeypointLayout& layout = KeypointLayout::builtin());

} // namespace wbforge
