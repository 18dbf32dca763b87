#include "wbforge/skeleton/layout.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "wbforge/errors.hpp"
#include "builtin_layout.inc"

namespace wbforge {

namespace {

IndexRange parse_range(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key))
        throw SchemaError(std::string("layout: missing range '") + key + "'");
    const auto& r = j.at(key);
    if (r.is_array() && r.empty())
        return IndexRange{1, 0};
    if (!r.is_array() || r.size() != 2)
        throw SchemaError(std::string("layout: range '") + key + "' must be [first, last]");
    return IndexRange{r[0].get<int>(), r[1].get<int>()};
}

std::vector<std::pair<KeypointId, KeypointId>> parse_pairs(const nlohmann::json& j, const char* key)
{
    std::vector<std::pair<KeypointId, KeypointId>> out;
    for (const auto& p : j.at(key)) {
        if (!p.is_array() || p.size() != 2)
            throw SchemaError(std::string("layout: malformed entry in '") + key + "'");
        out.emplace_back(KeypointId{p[0].get<int>()}, KeypointId{p[1].get<int>()});
    }
    return out;
}

nlohmann::json range_json(IndexRange r)
{
    if (r.size() == 0)
        return nlohmann::json::array();
    return nlohmann::json::array({r.first, r.last});
}

} // namespace

Part part_from_string(std::string_view name)
{
    if (name == "all") return Part::all;
    if (name == "body") return Part::body;
    if (name == "face") return Part::face;
    if (name == "left_hand") return Part::left_hand;
    if (name == "right_hand") return Part::right_hand;
    if (name == "hands") return Part::hands;
    throw ValidationError("unknown part tag '" + std::string(name) + "'");
}

std::string_view to_string(Part part)
{
    switch (part) {
    case Part::all: return "all";
    case Part::body: return "body";
    case Part::face: return "face";
    case Part::left_hand: return "left_hand";
    case Part::right_hand: return "right_hand";
    case Part::hands: return "hands";
    }
    return "?";
}

KeypointLayout KeypointLayout::from_json(const nlohmann::json& doc)
{
    if (!doc.contains("schema_version"))
        throw SchemaError("layout: missing schema_version");
    if (doc.at("schema_version").get<int>() != kSchemaVersion)
        throw SchemaError("layout: unsupported schema_version " + doc.at("schema_version").dump());

    KeypointLayout l;
    l.name_ = doc.value("name", std::string("unnamed"));
    l.version_ = doc.value("version", std::string("0"));
    l.total_ = doc.at("total").get<int>();
    if (l.total_ <= 0)
        throw SchemaError("layout: total must be positive");

    const auto& ranges = doc.at("ranges");
    l.body_ = parse_range(ranges, "body");
    l.face_ = parse_range(ranges, "face");
    l.left_hand_ = parse_range(ranges, "left_hand");
    l.right_hand_ = parse_range(ranges, "right_hand");

    // Ranges must tile [1, total] in body, face, left hand, right hand order.
    int next = 1;
    for (IndexRange r : {l.body_, l.face_, l.left_hand_, l.right_hand_}) {
        if (r.size() == 0)
            continue;
        if (r.first != next)
            throw SchemaError("layout: part ranges must partition [1, total] without gaps or overlap");
        next = r.last + 1;
    }
    if (next != l.total_ + 1)
        throw SchemaError("layout: part ranges do not cover [1, total]");

    l.nose_ = KeypointId{doc.at("nose").get<int>()};
    const auto& hips = doc.at("hips");
    l.hips_ = {KeypointId{hips.at(0).get<int>()}, KeypointId{hips.at(1).get<int>()}};
    l.left_wrist_ = KeypointId{doc.at("left_wrist").get<int>()};
    l.right_wrist_ = KeypointId{doc.at("right_wrist").get<int>()};
    l.mirror_pairs_ = parse_pairs(doc, "mirror_pairs");
    l.bones_ = parse_pairs(doc, "bones");

    auto check = [&](KeypointId id, const char* what) {
        if (id.value < 1 || id.value > l.total_)
            throw SchemaError(std::string("layout: ") + what + " index " + std::to_string(id.value) + " out of range");
    };
    check(l.nose_, "nose");
    check(l.hips_.first, "hip");
    check(l.hips_.second, "hip");
    check(l.left_wrist_, "left_wrist");
    check(l.right_wrist_, "right_wrist");
    for (auto [a, b] : l.mirror_pairs_) {
        check(a, "mirror");
        check(b, "mirror");
    }
    for (auto [a, b] : l.bones_) {
        check(a, "bone");
        check(b, "bone");
    }

    l.build_derived();
    return l;
}

void KeypointLayout::build_derived()
{
    mirror_.resize(total_);
    for (int i = 0; i < total_; ++i)
        mirror_[i] = i;
    std::set<int> seen;
    for (auto [l, r] : mirror_pairs_) {
        if (l == r || !seen.insert(l.row()).second || !seen.insert(r.row()).second)
            throw SchemaError("layout: each keypoint may appear in at most one mirror pair");
        mirror_[l.row()] = r.row();
        mirror_[r.row()] = l.row();
    }

    std::map<std::pair<int, int>, int> bone_index;
    for (size_t i = 0; i < bones_.size(); ++i) {
        auto [a, b] = bones_[i];
        bone_index[{std::min(a.row(), b.row()), std::max(a.row(), b.row())}] = static_cast<int>(i);
    }
    mirrored_bones_.clear();
    for (size_t i = 0; i < bones_.size(); ++i) {
        auto [a, b] = bones_[i];
        int ma = mirror_[a.row()], mb = mirror_[b.row()];
        auto it = bone_index.find({std::min(ma, mb), std::max(ma, mb)});
        if (it == bone_index.end())
            continue;
        int j = it->second;
        if (j > static_cast<int>(i))
            mirrored_bones_.emplace_back(static_cast<int>(i), j);
    }

    auto range_rows = [](IndexRange r) {
        std::vector<int> rows;
        for (int id = r.first; id <= r.last; ++id)
            rows.push_back(id - 1);
        return rows;
    };
    part_rows_.assign(6, {});
    part_rows_[static_cast<int>(Part::all)] = range_rows(IndexRange{1, total_});
    part_rows_[static_cast<int>(Part::body)] = range_rows(body_);
    part_rows_[static_cast<int>(Part::face)] = range_rows(face_);
    part_rows_[static_cast<int>(Part::left_hand)] = range_rows(left_hand_);
    part_rows_[static_cast<int>(Part::right_hand)] = range_rows(right_hand_);
    auto hands = range_rows(left_hand_);
    auto rh = range_rows(right_hand_);
    hands.insert(hands.end(), rh.begin(), rh.end());
    part_rows_[static_cast<int>(Part::hands)] = hands;

    std::set<int> left_members, right_members;
    for (auto [l, r] : mirror_pairs_) {
        left_members.insert(l.row());
        right_members.insert(r.row());
    }
    left_face_.clear();
    right_face_.clear();
    for (int row : part_rows_[static_cast<int>(Part::face)]) {
        bool midline = mirror_[row] == row;
        if (midline || left_members.count(row))
            left_face_.push_back(row);
        if (midline || right_members.count(row))
            right_face_.push_back(row);
    }
}

const std::vector<int>& KeypointLayout::rows(Part part) const
{
    return part_rows_.at(static_cast<int>(part));
}

KeypointLayout KeypointLayout::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open layout file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("layout file " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

const KeypointLayout& KeypointLayout::builtin()
{
    static const KeypointLayout layout = from_json(nlohmann::json::parse(kBuiltinLayoutJson));
    return layout;
}

nlohmann::json KeypointLayout::to_json() const
{
    auto pairs = [](const auto& v) {
        auto a = nlohmann::json::array();
        for (auto [x, y] : v)
            a.push_back({x.value, y.value});
        return a;
    };
    return {
        {"schema_version", kSchemaVersion},
        {"name", name_},
        {"version", version_},
        {"total", total_},
        {"ranges",
         {{"body", range_json(body_)},
          {"face", range_json(face_)},
          {"left_hand", range_json(left_hand_)},
          {"right_hand", range_json(right_hand_)}}},
        {"nose", nose_.value},
        {"hips", {hips_.first.value, hips_.second.value}},
        {"left_wrist", left_wrist_.value},
        {"right_wrist", right_wrist_.value},
        {"mirror_pairs", pairs(mirror_pairs_)},
        {"bones", pairs(bones_)},
    };
}

} // namespace wbforge
