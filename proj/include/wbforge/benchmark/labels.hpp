#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wbforge/benchmark/metrics.hpp"
#include "wbforge/synth/dataset.hpp"

namespace wbforge {

// Test labels that can be scored against but not read. The file is
// labels.jsonl: a header {"sealed": 1, "count", "digest"} then {"id", "kp3d"}
// lines; the digest covers the label lines and is checked on open.
class SealedLabels {
public:
    static void seal(const std::filesystem::path& path, const std::vector<BenchmarkSample>& samples);
    static SealedLabels open(const std::filesystem::path& path, const KeypointLayout& layout = KeypointLayout::builtin());

    std::vector<int> ids() const;
    int size() const { return static_cast<int>(labels_.size()); }

    // Every sealed id needs a prediction; extra predictions are an error too.
    MetricReport evaluate(const std::map<int, Coords3>& predictions) const;

private:
    std::map<int, Coords3> labels_;
    const KeypointLayout* layout_ = nullptr;
};

// predictions.jsonl: one {"id", "kp3d": [[x, y, z] x 133]} per line.
void write_predictions(const std::filesystem::path& path, const std::map<int, Coords3>& predictions);
std::map<int, Coords3> read_predictions(const std::filesystem::path& path,
                                        const KeypointLayout& layout = KeypointLayout::builtin());

// Copies without 3D labels, the form test inputs are distributed in.
std::vector<BenchmarkSample> strip_labels(const std::vector<BenchmarkSample>& samples);

} // namespace wbforge
