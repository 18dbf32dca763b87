#pragma once

#include <compare>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace wbforge {

// 1-based keypoint identifier, the form used in layout files, annotation
// files and documentation. Pose storage is 0-based; use row() to index it.
struct KeypointId {
    int value = 0;
    constexpr int row() const { return value - 1; }
    static constexpr KeypointId from_row(int row) { return KeypointId{row + 1}; }
    auto operator<=>(const KeypointId&) const = default;
};

// Inclusive 1-based interval; empty when last < first.
struct IndexRange {
    int first = 1;
    int last = 0;
    int size() const { return last >= first ? last - first + 1 : 0; }
    bool contains(KeypointId id) const { return id.value >= first && id.value <= last; }
};

enum class Part { all, body, face, left_hand, right_hand, hands };

Part part_from_string(std::string_view name);
std::string_view to_string(Part part);

class KeypointLayout {
public:
    static constexpr int kSchemaVersion = 1;

    static KeypointLayout from_json(const nlohmann::json& doc);
    static KeypointLayout load(const std::filesystem::path& path);
    // The COCO-WholeBody layout shipped in data/wholebody_layout.json, embedded at build time.
    static const KeypointLayout& builtin();

    nlohmann::json to_json() const;

    const std::string& name() const { return name_; }
    const std::string& version() const { return version_; }
    std::string tag() const { return name_ + "/" + version_; }

    int total() const { return total_; }
    IndexRange body_range() const { return body_; }
    IndexRange face_range() const { return face_; }
    IndexRange left_hand_range() const { return left_hand_; }
    IndexRange right_hand_range() const { return right_hand_; }

    KeypointId nose() const { return nose_; }
    std::pair<KeypointId, KeypointId> hips() const { return hips_; }
    KeypointId left_wrist() const { return left_wrist_; }
    KeypointId right_wrist() const { return right_wrist_; }

    const std::vector<std::pair<KeypointId, KeypointId>>& mirror_pairs() const { return mirror_pairs_; }
    const std::vector<std::pair<KeypointId, KeypointId>>& bones() const { return bones_; }

    // 0-based rows of the part, in ascending order.
    const std::vector<int>& rows(Part part) const;
    // Mirror partner of a row; midline keypoints map to themselves.
    int mirror_row(int row) const { return mirror_[row]; }
    // Pairs of indices into bones() whose endpoints are mirror images of each other.
    const std::vector<std::pair<int, int>>& mirrored_bones() const { return mirrored_bones_; }

    // Face rows of the subject's left / right half. Midline rows belong to both.
    const std::vector<int>& left_face_rows() const { return left_face_; }
    const std::vector<int>& right_face_rows() const { return right_face_; }

private:
    void build_derived();

    std::string name_;
    std::string version_;
    int total_ = 0;
    IndexRange body_, face_, left_hand_, right_hand_;
    KeypointId nose_, left_wrist_, right_wrist_;
    std::pair<KeypointId, KeypointId> hips_;
    std::vector<std::pair<KeypointId, KeypointId>> mirror_pairs_;
    std::vector<std::pair<KeypointId, KeypointId>> bones_;

    std::vector<int> mirror_;
    std::vector<std::pair<int, int>> mirrored_bones_;
    std::vector<std::vector<int>> part_rows_;
    std::vector<int> left_face_, right_face_;
};

} // namespace wbforge
