#include "wbforge/benchmark/masking.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"

namespace wbforge {

std::string_view to_string(MaskBranch b)
{
    switch (b) {
    case MaskBranch::keypoints: return "keypoints";
    case MaskBranch::face: return "face";
    case MaskBranch::left_hand: return "left_hand";
    case MaskBranch::right_hand: return "right_hand";
    }
    return "?";
}

MaskBranch mask_branch_from_string(std::string_view name)
{
    for (auto b : {MaskBranch::keypoints, MaskBranch::face, MaskBranch::left_hand, MaskBranch::right_hand})
        if (to_string(b) == name)
            return b;
    throw SchemaError("unknown mask branch '" + std::string(name) + "'");
}

void I2DMaskProtocol::validate() const
{
    double sum = 0.0;
    for (double p : branch_probability) {
        if (!(p >= 0.0))
            throw ValidationError("mask branch probabilities must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("mask branch probabilities must sum to 1");
    if (!(keypoint_rate >= 0.0 && keypoint_rate < 1.0))
        throw ValidationError("per-keypoint mask rate must lie in [0, 1)");
}

nlohmann::json I2DMaskProtocol::to_json() const
{
    return {{"branch_probability", branch_probability}, {"keypoint_rate", keypoint_rate}, {"seed", seed}};
}

I2DMaskProtocol I2DMaskProtocol::from_json(const nlohmann::json& j)
{
    I2DMaskProtocol p;
    p.branch_probability = j.at("branch_probability").get<std::array<double, 4>>();
    p.keypoint_rate = j.at("keypoint_rate").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
}

PoseMask draw_i2d_mask(int id, const I2DMaskProtocol& protocol, std::mt19937_64& rng, const KeypointLayout& layout)
{
    PoseMask m;
    m.id = id;
    m.masked.assign(static_cast<size_t>(layout.total()), 0);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double acc = 0.0;
    int branch = 3;
    for (int b = 0; b < 4; ++b) {
        acc += protocol.branch_probability[static_cast<size_t>(b)];
        if (u < acc) {
            branch = b;
            break;
        }
    }
    m.branch = static_cast<MaskBranch>(branch);
    switch (m.branch) {
    case MaskBranch::keypoints: {
        std::bernoulli_distribution drop(protocol.keypoint_rate);
        do {
            for (auto& f : m.masked)
                f = drop(rng) ? 1 : 0;
        } while (std::all_of(m.masked.begin(), m.masked.end(), [](std::uint8_t f) { return f != 0; }));
        break;
    }
    case MaskBranch::face:
    case MaskBranch::left_hand:
    case MaskBranch::right_hand: {
        const Part part = m.branch == MaskBranch::face ? Part::face
                          : m.branch == MaskBranch::left_hand ? Part::left_hand
                                                                : Part::right_hand;
        for (int r : layout.rows(part))
            m.masked[static_cast<size_t>(r)] = 1;
        break;
    }
    }
    return m;
}

namespace {

BenchmarkSample masked_copy(const BenchmarkSample& s, const PoseMask& m)
{
    if (m.masked.size() != static_cast<size_t>(s.pose2d.size()))
        throw ValidationError("mask and pose disagree on keypoint count");
    BenchmarkSample out = s;
    for (size_t k = 0; k < m.masked.size(); ++k)
        if (m.masked[k]) {
            out.pose2d.visible[k] = 0;
            out.pose2d.confidence(static_cast<Eigen::Index>(k)) = 0.0;
        }
    return out;
}

} // namespace

std::vector<BenchmarkSample> apply_i2d_mask(const std::vector<BenchmarkSample>& samples, const I2DMaskProtocol& protocol,
                                            MaskRecord* record, const KeypointLayout& layout)
{
    protocol.validate();
    std::mt19937_64 rng(protocol.seed);
    MaskRecord rec;
    rec.protocol = protocol;
    std::vector<BenchmarkSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        rec.masks.push_back(draw_i2d_mask(s.id, protocol, rng, layout));
        out.push_back(masked_copy(s, rec.masks.back()));
    }
    if (record)
        *record = std::move(rec);
    return out;
}

std::vector<BenchmarkSample> apply_mask_record(const std::vector<BenchmarkSample>& samples, const MaskRecord& record)
{
    std::map<int, const PoseMask*> by_id;
    for (const auto& m : record.masks)
        by_id[m.id] = &m;
    std::vector<BenchmarkSample> out;
    for (const auto& s : samples) {
        const auto it = by_id.find(s.id);
        if (it == by_id.end())
            throw ValidationError("mask record has no entry for sample " + std::to_string(s.id));
        out.push_back(masked_copy(s, *it->second));
    }
    return out;
}

void write_mask_file(const std::filesystem::path& path, const MaskRecord& record, const KeypointLayout& layout)
{
    std::vector<nlohmann::json> lines{{{"protocol", record.protocol.to_json()}, {"layout", layout.name()}}};
    for (const auto& m : record.masks) {
        std::vector<int> ids;
        for (size_t k = 0; k < m.masked.size(); ++k)
            if (m.masked[k])
                ids.push_back(KeypointId::from_row(static_cast<int>(k)).value);
        lines.push_back({{"id", m.id}, {"branch", to_string(m.branch)}, {"masked", ids}});
    }
    write_jsonl_atomic(path, lines);
}

MaskRecord read_mask_file(const std::filesystem::path& path, const KeypointLayout& layout)
{
    const auto lines = read_jsonl(path);
    if (lines.empty() || !lines[0].contains("protocol"))
        throw SchemaError(path.string() + ": first line must hold the protocol");
    MaskRecord rec;
    rec.protocol = I2DMaskProtocol::from_json(lines[0].at("protocol"));
    for (size_t i = 1; i < lines.size(); ++i) {
        PoseMask m;
        m.id = lines[i].at("id").get<int>();
        m.branch = mask_branch_from_string(lines[i].at("branch").get<std::string>());
        m.masked.assign(static_cast<size_t>(layout.total()), 0);
        for (int id : lines[i].at("masked").get<std::vector<int>>()) {
            if (id < 1 || id > layout.total())
                throw SchemaError(path.string() + ": keypoint id " + std::to_string(id) + " out of range");
            m.masked[static_cast<size_t>(KeypointId{id}.row())] = 1;
        }
        rec.masks.push_back(std::move(m));
    }
    return rec;
}

} // namespace wbforge
