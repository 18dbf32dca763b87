#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace wbforge {

struct KeypointCorrection {
    int keypoint = 0; // 1-based
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    bool operator==(const KeypointCorrection&) const = default;
};

// One annotator's corrections to one view of one sample. Keypoints not listed
// were reviewed and left where they were.
struct CorrectionRecord {
    int sample = 0;
    std::string annotator;
    std::string view; // camera id
    std::vector<KeypointCorrection> corrections;
    std::string timestamp; // ISO-8601 UTC, assigned on submission when empty

    using Key = std::tuple<int, std::string, std::string>; // sample, view, annotator
    Key key() const { return {sample, view, annotator}; }

    // Same key and corrections; timestamps are ignored.
    bool same_payload(const CorrectionRecord& other) const;

    nlohmann::json to_json() const;
    // Throws SchemaError on missing or mistyped fields.
    static CorrectionRecord from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

// Append-only JSON-lines log; the latest record per key is live. Appends are
// serialised and flushed to disk before submit() returns, and the log is
// replayed on construction, so a restart loses no accepted record.
class CorrectionStore {
public:
    enum class Outcome { created, superseded, unchanged };

    explicit CorrectionStore(std::filesystem::path log);

    // The record must already be validated against the review set.
    Outcome submit(CorrectionRecord record);

    std::vector<CorrectionRecord> live() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<CorrectionRecord::Key, CorrectionRecord> live_;
};

std::string_view to_string(CorrectionStore::Outcome o);

} // namespace wbforge
