#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "wbforge/geometry/camera.hpp"
#include "wbforge/skeleton/pose.hpp"
#include "wbforge/synth/detections.hpp"
#include "wbforge/synth/generator.hpp"

namespace wbforge {

inline constexpr int kDatasetSchemaVersion = 1;
inline const std::array<std::string, 5> kSubjects{"S1", "S5", "S6", "S7", "S8"};

// One {image, 2D pose, camera-space 3D pose} record.
struct BenchmarkSample {
    int id = 0;
    std::string subject;
    std::string camera;
    std::string image;     // file path, or "synthetic:<pose-set>/<camera>" for renders
    Eigen::Vector4d bbox;  // u_min, v_min, u_max, v_max over visible keypoints
    Pose2D pose2d;
    Pose3D pose3d;         // camera frame, mm
};

// Bounding box of the visible keypoints. Throws DegenerateInputError when none are visible.
Eigen::Vector4d visible_bbox(const Pose2D& pose);

nlohmann::json to_json(const BenchmarkSample& s);
// Accepts kp2d entries [u, v, vis] or [u, v, vis, confidence]; a missing
// confidence reads as 1.0. kp3d may be absent (unlabelled test inputs), in
// which case pose3d is left empty.
BenchmarkSample sample_from_json(const nlohmann::json& j, const KeypointLayout& layout);

struct Dataset {
    std::string layout_tag;
    std::vector<BenchmarkSample> samples;
};

// <dir>/meta.json + <dir>/annotations.jsonl, both written atomically.
void write_dataset(const std::filesystem::path& dir, const std::vector<BenchmarkSample>& samples,
                   const KeypointLayout& layout = KeypointLayout::builtin());
Dataset read_dataset(const std::filesystem::path& dir, const KeypointLayout& layout = KeypointLayout::builtin());

// Subject-based split. The test half split assigns even ranks of a seeded
// shuffle of the test ids to the 2D->3D task and odd ranks to I2D->3D.
struct Splits {
    std::vector<int> train;
    std::vector<int> test;
    std::vector<int> test_lift;
    std::vector<int> test_ilift;
};

Splits make_splits(const std::vector<BenchmarkSample>& samples, std::uint64_t seed,
                   const std::vector<std::string>& train_subjects = {"S1", "S5", "S6", "S7"},
                   const std::vector<std::string>& test_subjects = {"S8"});

// train.txt, test.txt, test_lift.txt, test_ilift.txt: one sample id per line.
void write_manifests(const std::filesystem::path& dir, const Splits& splits);
Splits read_manifests(const std::filesystem::path& dir);
std::vector<int> read_manifest(const std::filesystem::path& path);

// A multi-view capture of one synthetic pose: the world ground truth and the
// simulated detector output of every rig view.
struct PoseSet {
    int id = 0;
    std::string subject;
    Pose3D world;
    std::vector<Pose2D> detections;
};

struct CorpusConfig {
    int poses = 100;
    std::uint64_t seed = 0;
    GeneratorConfig generator = GeneratorConfig::standard();
    OcclusionConfig occlusion;
};

// Pose set i belongs to subject kSubjects[i % 5]. Seeds for the pose and the
// detections of set i are derived from the master seed.
std::vector<PoseSet> synthesize_pose_sets(const CorpusConfig& config, const Rig& rig);

// One benchmark sample per rig view: camera-space 3D and exact 2D projection.
// Sample ids are pose_set.id * rig.size() + view.
std::vector<BenchmarkSample> benchmark_samples(const PoseSet& set, const Rig& rig);

// detections.jsonl: {"id", "subject", "views":[{"camera", "kp2d"}]};
// ground_truth.jsonl: {"id", "kp3d"} in world coordinates.
void write_pose_sets(const std::filesystem::path& dir, const std::vector<PoseSet>& sets, const Rig& rig);
std::vector<PoseSet> read_pose_sets(const std::filesystem::path& dir, const Rig& rig,
                                    const KeypointLayout& layout = KeypointLayout::builtin());

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

// JSON helpers shared by the file formats.
nlohmann::json coords_to_json(const Coords3& c);
Coords3 coords3_from_json(const nlohmann::json& j, int expected_rows);
nlohmann::json kp2d_to_json(const Pose2D& p);
Pose2D kp2d_from_json(const nlohmann::json& j, int expected_rows);

} // namespace wbforge
