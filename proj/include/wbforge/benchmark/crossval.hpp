#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbforge/benchmark/lifter.hpp"
#include "wbforge/benchmark/metrics.hpp"

namespace wbforge {

// Seeded shuffle of the ids dealt round-robin into k disjoint folds covering all ids.
std::vector<std::vector<int>> make_folds(std::vector<int> ids, int k, std::uint64_t seed);

// Per-fold reports plus their mean and sample standard deviation (n - 1).
struct CrossvalSummary {
    std::vector<MetricReport> folds;
    MetricReport mean, std;

    nlohmann::json to_json() const;
    // Rows cv1..cvk, "Cv mean", "Cv std"; one column per metric.
    std::string table() const;
};

CrossvalSummary summarize(const std::vector<MetricReport>& folds);

// Trains on k-1 folds and evaluates on the held-out one.
using FoldMethod = std::function<MetricReport(const std::vector<BenchmarkSample>& train,
                                              const std::vector<BenchmarkSample>& holdout, int fold)>;

CrossvalSummary crossval(const std::vector<BenchmarkSample>& samples, int k, std::uint64_t seed, const FoldMethod& method);

// Lifter trained per fold with a fold-derived seed. With `holdout_masks` the
// held-out inputs are masked once with that protocol (image-to-3D from incomplete 2D).
FoldMethod lifter_fold_method(MLPLifterConfig config, LifterTrainConfig train,
                              std::optional<I2DMaskProtocol> holdout_masks = std::nullopt);

} // namespace wbforge
