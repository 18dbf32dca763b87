#include "wbforge/annotation/review.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"
#include "wbforge/synth/dataset.hpp"

namespace wbforge {

ReviewSet::ReviewSet(Rig rig, std::vector<ReviewSample> samples, const KeypointLayout& layout)
    : rig_(std::move(rig)), samples_(std::move(samples)), layout_(&layout)
{
    if (rig_.size() < 2)
        throw ValidationError("review set needs a rig with at least two cameras");
    for (size_t i = 0; i < samples_.size(); ++i) {
        wbforge::validate(samples_[i].world, layout);
        if (!index_.emplace(samples_[i].id, i).second)
            throw ValidationError("duplicate review sample id " + std::to_string(samples_[i].id));
        for (const auto& [cam, _] : samples_[i].images)
            view_index(cam);
    }
}

ReviewSet ReviewSet::draw(Rig rig, std::vector<ReviewSample> pool, int count, std::uint64_t seed,
                          const KeypointLayout& layout)
{
    if (count < 0)
        throw ValidationError("review count must be non-negative");
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::mt19937_64 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > static_cast<size_t>(count))
        pool.resize(static_cast<size_t>(count));
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return ReviewSet(std::move(rig), std::move(pool), layout);
}

const ReviewSample& ReviewSet::at(int id) const
{
    const auto it = index_.find(id);
    if (it == index_.end())
        throw NotFoundError("sample " + std::to_string(id) + " is not in the review set");
    return samples_[it->second];
}

int ReviewSet::view_index(const std::string& camera) const
{
    const auto v = rig_.find(camera);
    if (!v)
        throw ValidationError("unknown view '" + camera + "'");
    return *v;
}

std::vector<ProjectedKeypoint> ReviewSet::project(const ReviewSample& s, int view) const
{
    const CameraModel& cam = rig_.camera(view);
    std::vector<ProjectedKeypoint> out(static_cast<size_t>(s.world.size()));
    for (int k = 0; k < s.world.size(); ++k) {
        try {
            out[static_cast<size_t>(k)] = wbforge::project(s.world.coords.row(k).transpose(), cam).uv;
        } catch (const BehindCameraError&) {
        }
    }
    return out;
}

nlohmann::json ReviewSet::payload(int id, const std::optional<std::string>& view) const
{
    const ReviewSample& s = at(id);
    std::vector<int> views;
    if (view)
        views.push_back(view_index(*view));
    else
        for (int v = 0; v < rig_.size(); ++v)
            views.push_back(v);

    const KeypointLayout& L = *layout_;
    auto bones = nlohmann::json::array();
    for (const auto& [a, b] : L.bones())
        bones.push_back({a.value, b.value});
    auto range = [](IndexRange r) { return nlohmann::json{r.first, r.last}; };
    nlohmann::json layout{{"name", L.tag()},
                          {"keypoints", L.total()},
                          {"parts",
                           {{"body", range(L.body_range())},
                            {"face", range(L.face_range())},
                            {"left_hand", range(L.left_hand_range())},
                            {"right_hand", range(L.right_hand_range())}}},
                          {"bones", bones}};

    auto out_views = nlohmann::json::array();
    for (int v : views) {
        const CameraModel& cam = rig_.camera(v);
        auto kp = nlohmann::json::array();
        auto inside = nlohmann::json::array();
        for (const auto& p : project(s, v)) {
            kp.push_back(p ? nlohmann::json{p->x(), p->y()} : nlohmann::json(nullptr));
            inside.push_back(p && cam.in_image(*p));
        }
        const auto img = s.images.find(cam.id);
        out_views.push_back({{"camera", cam.id},
                             {"width", cam.width},
                             {"height", cam.height},
                             {"image", "/api/samples/" + std::to_string(id) + "/image?view=" + cam.id},
                             {"source", img != s.images.end() ? img->second : "synthetic"},
                             {"kp2d", kp},
                             {"in_image", inside}});
    }
    return {{"id", s.id}, {"subject", s.subject}, {"layout", layout}, {"views", out_views}};
}

void ReviewSet::validate(const CorrectionRecord& r) const
{
    const ReviewSample& s = at(r.sample);
    const int v = view_index(r.view);
    if (r.annotator.empty())
        throw ValidationError("annotator id is empty");
    const CameraModel& cam = rig_.camera(v);
    const auto proj = project(s, v);
    std::set<int> seen;
    for (const auto& c : r.corrections) {
        if (c.keypoint < 1 || c.keypoint > layout_->total())
            throw ValidationError("keypoint index " + std::to_string(c.keypoint) + " outside 1.." +
                                  std::to_string(layout_->total()));
        if (!seen.insert(c.keypoint).second)
            throw ValidationError("keypoint " + std::to_string(c.keypoint) + " corrected twice");
        if (!proj[static_cast<size_t>(c.keypoint - 1)])
            throw ValidationError("keypoint " + std::to_string(c.keypoint) + " is behind camera " + cam.id);
        if (!c.uv.allFinite() || !cam.in_image(c.uv))
            throw ValidationError("keypoint " + std::to_string(c.keypoint) + " corrected outside the " +
                                  std::to_string(cam.width) + "x" + std::to_string(cam.height) + " image");
    }
}

std::vector<ReviewSample> read_review_pool(const std::filesystem::path& dir, const KeypointLayout& layout)
{
    std::vector<ReviewSample> out;
    for (const auto& j : read_jsonl(dir / "poses.jsonl")) {
        ReviewSample s;
        try {
            s.id = j.at("id").get<int>();
            s.subject = j.value("subject", std::string());
            if (j.contains("images"))
                s.images = j.at("images").get<std::map<std::string, std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError((dir / "poses.jsonl").string() + ": " + e.what());
        }
        s.world.coords = coords3_from_json(j.at("kp3d"), layout.total());
        s.world.frame = Frame::world;
        out.push_back(std::move(s));
    }
    return out;
}

void write_review_pool(const std::filesystem::path& dir, const Rig& rig, const std::vector<ReviewSample>& samples)
{
    std::filesystem::create_directories(dir);
    rig.save(dir / "rig.json");
    std::vector<nlohmann::json> lines;
    for (const auto& s : samples) {
        nlohmann::json j{{"id", s.id}, {"subject", s.subject}, {"kp3d", coords_to_json(s.world.coords)}};
        if (!s.images.empty())
            j["images"] = s.images;
        lines.push_back(std::move(j));
    }
    write_jsonl_atomic(dir / "poses.jsonl", lines);
}

std::string render_svg(const ReviewSet& set, const ReviewSample& s, int view)
{
    const CameraModel& cam = set.rig().camera(view);
    const auto p = set.project(s, view);
    const KeypointLayout& L = set.layout();
    auto colour = [&](int row) {
        const KeypointId id = KeypointId::from_row(row);
        if (L.face_range().contains(id))
            return "#3fa7d6";
        if (L.left_hand_range().contains(id))
            return "#59cd90";
        if (L.right_hand_range().contains(id))
            return "#ee6352";
        return "#fac05e";
    };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cam.width << "\" height=\"" << cam.height
       << "\" viewBox=\"0 0 " << cam.width << ' ' << cam.height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
    for (const auto& [a, b] : L.bones()) {
        const auto& pa = p[static_cast<size_t>(a.row())];
        const auto& pb = p[static_cast<size_t>(b.row())];
        if (pa && pb)
            os << "<line x1=\"" << pa->x() << "\" y1=\"" << pa->y() << "\" x2=\"" << pb->x() << "\" y2=\"" << pb->y()
               << "\" stroke=\"#9a9a9a\" stroke-width=\"1.5\"/>\n";
    }
    for (size_t k = 0; k < p.size(); ++k)
        if (p[k])
            os << "<circle cx=\"" << p[k]->x() << "\" cy=\"" << p[k]->y() << "\" r=\"2\" fill=\""
               << colour(static_cast<int>(k)) << "\"/>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace wbforge
