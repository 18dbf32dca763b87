#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbforge/annotation/store.hpp"
#include "wbforge/geometry/camera.hpp"
#include "wbforge/skeleton/pose.hpp"

namespace wbforge {

struct ReviewSample {
    int id = 0;
    std::string subject;
    Pose3D world;                              // the stored 3D skeleton under review
    std::map<std::string, std::string> images; // camera id -> image path; absent views get a synthetic render
};

// Projection of one world keypoint; nullopt when it is behind the camera.
using ProjectedKeypoint = std::optional<Eigen::Vector2d>;

// The samples presented to annotators, with the rig they were captured by.
class ReviewSet {
public:
    ReviewSet(Rig rig, std::vector<ReviewSample> samples, const KeypointLayout& layout = KeypointLayout::builtin());

    // Seeded draw of `count` samples without replacement (all of them when the pool is smaller), sorted by id.
    static ReviewSet draw(Rig rig, std::vector<ReviewSample> pool, int count, std::uint64_t seed,
                          const KeypointLayout& layout = KeypointLayout::builtin());

    const Rig& rig() const { return rig_; }
    const KeypointLayout& layout() const { return *layout_; }
    const std::vector<ReviewSample>& samples() const { return samples_; }
    // Throws NotFoundError.
    const ReviewSample& at(int id) const;
    bool contains(int id) const { return index_.count(id) != 0; }
    // Throws ValidationError for an unknown camera id.
    int view_index(const std::string& camera) const;

    // Computed from the stored 3D pose on every call.
    std::vector<ProjectedKeypoint> project(const ReviewSample& s, int view) const;

    // GET payload: layout metadata plus the projected skeleton for every view, or just `view`.
    nlohmann::json payload(int id, const std::optional<std::string>& view = std::nullopt) const;

    // Throws NotFoundError for an unknown sample and ValidationError for an
    // unknown view, empty annotator, keypoint outside 1..K, a repeated keypoint,
    // a keypoint behind the camera, or a coordinate outside the image.
    void validate(const CorrectionRecord& record) const;

private:
    Rig rig_;
    std::vector<ReviewSample> samples_;
    std::map<int, size_t> index_;
    const KeypointLayout* layout_;
};

// Review data directory: rig.json plus poses.jsonl with one
// {"id", "subject", "kp3d": [[x, y, z] x K], "images"?: {camera: path}} per line.
std::vector<ReviewSample> read_review_pool(const std::filesystem::path& dir,
                                           const KeypointLayout& layout = KeypointLayout::builtin());
void write_review_pool(const std::filesystem::path& dir, const Rig& rig, const std::vector<ReviewSample>& samples);

// Line drawing of the projected skeleton, served when no image exists.
std::string render_svg(const ReviewSet& set, const ReviewSample& s, int view);

} // namespace wbforge
