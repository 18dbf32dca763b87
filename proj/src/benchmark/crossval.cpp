#include "wbforge/benchmark/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"
#include "wbforge/synth/dataset.hpp"

namespace wbforge {

std::vector<std::vector<int>> make_folds(std::vector<int> ids, int k, std::uint64_t seed)
{
    if (k < 2)
        throw ValidationError("cross-validation needs at least 2 folds");
    if (static_cast<size_t>(k) > ids.size())
        throw ValidationError("cross-validation: " + std::to_string(k) + " folds but only " +
                              std::to_string(ids.size()) + " samples");
    if (std::set<int>(ids.begin(), ids.end()).size() != ids.size())
        throw ValidationError("cross-validation: duplicate sample ids");
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<std::vector<int>> folds(static_cast<size_t>(k));
    for (size_t i = 0; i < ids.size(); ++i)
        folds[i % static_cast<size_t>(k)].push_back(ids[i]);
    for (auto& f : folds)
        std::sort(f.begin(), f.end());
    return folds;
}

CrossvalSummary summarize(const std::vector<MetricReport>& folds)
{
    if (folds.empty())
        throw ValidationError("no fold reports to summarise");
    CrossvalSummary s;
    s.folds = folds;
    const double n = static_cast<double>(folds.size());
    for (const auto& c : MetricReport::columns()) {
        double m = 0.0;
        for (const auto& f : folds)
            m += f.value(c) / n;
        double ss = 0.0;
        for (const auto& f : folds)
            ss += (f.value(c) - m) * (f.value(c) - m);
        s.mean.value(c) = m;
        s.std.value(c) = folds.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    for (const auto& f : folds)
        s.mean.samples += f.samples;
    s.std.samples = s.mean.samples;
    return s;
}

nlohmann::json CrossvalSummary::to_json() const
{
    nlohmann::json j{{"mean", mean.to_json()}, {"std", std.to_json()}, {"folds", nlohmann::json::array()}};
    for (const auto& f : folds)
        j["folds"].push_back(f.to_json());
    return j;
}

std::string CrossvalSummary::table() const
{
    std::ostringstream os;
    os << std::setw(10) << "";
    for (const auto& c : MetricReport::columns())
        os << std::setw(13) << c;
    os << '\n';
    for (size_t i = 0; i < folds.size(); ++i)
        os << std::setw(10) << ("cv" + std::to_string(i + 1)) << folds[i].table_row() << '\n';
    os << std::setw(10) << "Cv mean" << mean.table_row() << '\n';
    os << std::setw(10) << "Cv std" << std.table_row() << '\n';
    return os.str();
}

CrossvalSummary crossval(const std::vector<BenchmarkSample>& samples, int k, std::uint64_t seed, const FoldMethod& method)
{
    std::vector<int> ids;
    for (const auto& s : samples)
        ids.push_back(s.id);
    const auto folds = make_folds(ids, k, seed);
    std::vector<MetricReport> reports;
    for (int f = 0; f < k; ++f) {
        const std::set<int> hold(folds[static_cast<size_t>(f)].begin(), folds[static_cast<size_t>(f)].end());
        std::vector<BenchmarkSample> train, holdout;
        for (const auto& s : samples)
            (hold.count(s.id) ? holdout : train).push_back(s);
        reports.push_back(method(train, holdout, f));
        spdlog::info("fold {}: MPJPE all {:.1f}", f + 1, reports.back().all);
    }
    return summarize(reports);
}

FoldMethod lifter_fold_method(MLPLifterConfig config, LifterTrainConfig train_cfg,
                              std::optional<I2DMaskProtocol> holdout_masks)
{
    return [config, train_cfg, holdout_masks](const std::vector<BenchmarkSample>& train,
                                              const std::vector<BenchmarkSample>& holdout, int fold) {
        LifterTrainConfig c = train_cfg;
        c.seed = derive_seed(train_cfg.seed, 11, static_cast<std::uint64_t>(fold));
        MLPLifter model(config, derive_seed(train_cfg.seed, 12, static_cast<std::uint64_t>(fold)));
        train_lifter(model, train, {}, c);
        const auto inputs = holdout_masks ? apply_i2d_mask(holdout, *holdout_masks) : holdout;
        return evaluate(model.lift(inputs_of(inputs)), labels_of(holdout));
    };
}

} // namespace wbforge
