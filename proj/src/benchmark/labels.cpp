#include "wbforge/benchmark/labels.hpp"

#include <sstream>

#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"

namespace wbforge {

namespace {

// FNV-1a over the serialised label lines.
std::string digest(const std::vector<nlohmann::json>& lines)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : lines)
        for (unsigned char c : l.dump() + "\n") {
            h ^= c;
            h *= 1099511628211ULL;
        }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace

void SealedLabels::seal(const std::filesystem::path& path, const std::vector<BenchmarkSample>& samples)
{
    std::vector<nlohmann::json> lines;
    for (const auto& s : samples) {
        if (s.pose3d.size() == 0)
            throw ValidationError("sample " + std::to_string(s.id) + " has no 3D label to seal");
        lines.push_back({{"id", s.id}, {"kp3d", coords_to_json(s.pose3d.coords)}});
    }
    std::vector<nlohmann::json> all{{{"sealed", 1}, {"count", lines.size()}, {"digest", digest(lines)}}};
    all.insert(all.end(), lines.begin(), lines.end());
    write_jsonl_atomic(path, all);
}

SealedLabels SealedLabels::open(const std::filesystem::path& path, const KeypointLayout& layout)
{
    auto lines = read_jsonl(path);
    if (lines.empty() || lines[0].value("sealed", 0) != 1)
        throw SchemaError(path.string() + " is not a sealed label file");
    const nlohmann::json header = lines[0];
    lines.erase(lines.begin());
    if (header.at("count").get<size_t>() != lines.size() || header.at("digest").get<std::string>() != digest(lines))
        throw SchemaError(path.string() + ": label digest mismatch");
    SealedLabels out;
    out.layout_ = &layout;
    for (const auto& l : lines) {
        const int id = l.at("id").get<int>();
        if (!out.labels_.emplace(id, coords3_from_json(l.at("kp3d"), layout.total())).second)
            throw SchemaError(path.string() + ": duplicate id " + std::to_string(id));
    }
    return out;
}

std::vector<int> SealedLabels::ids() const
{
    std::vector<int> out;
    for (const auto& [id, _] : labels_)
        out.push_back(id);
    return out;
}

MetricReport SealedLabels::evaluate(const std::map<int, Coords3>& predictions) const
{
    std::vector<Coords3> pred, gt;
    for (const auto& [id, label] : labels_) {
        const auto it = predictions.find(id);
        if (it == predictions.end())
            throw ValidationError("no prediction for sealed sample " + std::to_string(id));
        pred.push_back(it->second);
        gt.push_back(label);
    }
    if (predictions.size() != labels_.size())
        throw ValidationError("predictions include ids that are not in the sealed label set");
    return wbforge::evaluate(pred, gt, *layout_);
}

void write_predictions(const std::filesystem::path& path, const std::map<int, Coords3>& predictions)
{
    std::vector<nlohmann::json> lines;
    for (const auto& [id, c] : predictions)
        lines.push_back({{"id", id}, {"kp3d", coords_to_json(c)}});
    write_jsonl_atomic(path, lines);
}

std::map<int, Coords3> read_predictions(const std::filesystem::path& path, const KeypointLayout& layout)
{
    std::map<int, Coords3> out;
    for (const auto& l : read_jsonl(path)) {
        const int id = l.at("id").get<int>();
        if (!out.emplace(id, coords3_from_json(l.at("kp3d"), layout.total())).second)
            throw SchemaError(path.string() + ": duplicate prediction for id " + std::to_string(id));
    }
    return out;
}

std::vector<BenchmarkSample> strip_labels(const std::vector<BenchmarkSample>& samples)
{
    std::vector<BenchmarkSample> out = samples;
    for (auto& s : out)
        s.pose3d = Pose3D{};
    return out;
}

} // namespace wbforge
