#include "wbforge/annotation/crosscheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "wbforge/errors.hpp"
#include "wbforge/geometry/triangulation.hpp"

namespace wbforge {

void Histogram::add(double v)
{
    const auto last = static_cast<long>(counts.size()) - 1;
    const long bin = std::clamp(static_cast<long>(std::floor(v / bin_width)), 0L, last);
    ++counts[static_cast<size_t>(bin)];
}

int Histogram::total() const
{
    int n = 0;
    for (int c : counts)
        n += c;
    return n;
}

nlohmann::json Histogram::to_json() const
{
    auto edges = nlohmann::json::array();
    for (size_t i = 0; i < counts.size(); ++i)
        edges.push_back(bin_width * static_cast<double>(i));
    return {{"bin_width", bin_width}, {"lower_edges", edges}, {"counts", counts}, {"total", total()}};
}

nlohmann::json CrossCheckReport::to_json() const
{
    nlohmann::json p;
    for (const auto& [name, e] : parts)
        p[name] = {{"mean_2d_px", e.mean_2d_px}, {"mean_3d_mm", e.mean_3d_mm}, {"count_2d", e.count_2d}, {"count_3d", e.count_3d}};
    return {{"parts", p},
            {"histogram_2d_px", hist_2d.to_json()},
            {"histogram_3d_mm", hist_3d.to_json()},
            {"coverage",
             {{"records", records},
              {"samples_reviewed", samples_reviewed},
              {"views_reviewed", views_reviewed},
              {"corrected_keypoints", corrected_keypoints},
              {"triangulated", triangulated},
              {"excluded_insufficient_views", excluded_insufficient_views}}},
            {"reference", reference_study_errors()}};
}

nlohmann::json reference_study_errors()
{
    return {{"2d_px", {{"all", 4.57}, {"body", 4.68}, {"face", 4.42}, {"hand", 4.74}}},
            {"3d_mm", {{"all", 16.98}, {"body", 18.63}, {"face", 15.08}, {"hand", 19.16}}},
            {"keypoints", 80000}};
}

CrossCheckReport compute_crosscheck(const ReviewSet& set, const std::vector<CorrectionRecord>& live,
                                    const CrossCheckConfig& config)
{
    const KeypointLayout& L = set.layout();
    const Rig& rig = set.rig();
    auto part_of = [&](int row) -> std::string {
        const KeypointId id = KeypointId::from_row(row);
        if (L.face_range().contains(id))
            return "face";
        if (L.left_hand_range().contains(id) || L.right_hand_range().contains(id))
            return "hand";
        return "body";
    };

    CrossCheckReport rep;
    rep.hist_2d = Histogram(config.bin_2d_px, config.bins_2d);
    rep.hist_3d = Histogram(config.bin_3d_mm, config.bins_3d);
    for (const char* p : {"all", "body", "face", "hand"})
        rep.parts[p] = {};
    rep.records = static_cast<int>(live.size());

    // sample -> view -> records
    std::map<int, std::map<int, std::vector<const CorrectionRecord*>>> by_sample;
    for (const auto& r : live) {
        set.validate(r);
        by_sample[r.sample][set.view_index(r.view)].push_back(&r);
    }

    auto add = [&](const std::string& part, double e2, double e3, bool is3d) {
        for (const std::string& key : {std::string("all"), part}) {
            PartErrors& pe = rep.parts[key];
            if (is3d) {
                pe.mean_3d_mm += e3;
                ++pe.count_3d;
            } else {
                pe.mean_2d_px += e2;
                ++pe.count_2d;
            }
        }
    };

    for (const auto& [id, views] : by_sample) {
        const ReviewSample& s = set.at(id);
        ++rep.samples_reviewed;
        rep.views_reviewed += static_cast<int>(views.size());

        // Per view: original projections and per-keypoint corrected means.
        std::map<int, std::vector<ProjectedKeypoint>> proj;
        std::map<int, std::vector<Eigen::Vector2d>> corrected;
        std::set<int> moved;
        for (const auto& [v, recs] : views) {
            proj[v] = set.project(s, v);
            auto& pos = corrected[v];
            pos.assign(proj[v].size(), Eigen::Vector2d::Zero());
            std::set<int> moved_here;
            for (const CorrectionRecord* r : recs) {
                std::map<int, Eigen::Vector2d> mine;
                for (const auto& c : r->corrections)
                    mine[c.keypoint - 1] = c.uv;
                for (size_t k = 0; k < pos.size(); ++k) {
                    if (!proj[v][k])
                        continue;
                    const auto it = mine.find(static_cast<int>(k));
                    pos[k] += it != mine.end() ? it->second : *proj[v][k];
                }
                for (const auto& [k, _] : mine)
                    moved_here.insert(k);
            }
            for (auto& p : pos)
                p /= static_cast<double>(recs.size());
            for (int k : moved_here) {
                const double e = (pos[static_cast<size_t>(k)] - *proj[v][static_cast<size_t>(k)]).norm();
                add(part_of(k), e, 0.0, false);
                rep.hist_2d.add(e);
                moved.insert(k);
            }
        }

        for (int k : moved) {
            ++rep.corrected_keypoints;
            std::vector<Observation> obs;
            for (const auto& [v, _] : views)
                if (proj[v][static_cast<size_t>(k)])
                    obs.push_back({v, corrected[v][static_cast<size_t>(k)]});
            try {
                const TriangulatedPoint tp = triangulate(obs, rig);
                const double e = (tp.point - s.world.coords.row(k).transpose()).norm();
                add(part_of(k), 0.0, e, true);
                rep.hist_3d.add(e);
                ++rep.triangulated;
            } catch (const InsufficientViewsError&) {
                ++rep.excluded_insufficient_views;
            } catch (const DegenerateGeometryError&) {
                ++rep.excluded_insufficient_views;
            }
        }
    }

    for (auto& [_, pe] : rep.parts) {
        if (pe.count_2d)
            pe.mean_2d_px /= pe.count_2d;
        if (pe.count_3d)
            pe.mean_3d_mm /= pe.count_3d;
    }
    return rep;
}

} // namespace wbforge
