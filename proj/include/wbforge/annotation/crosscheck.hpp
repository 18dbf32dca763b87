#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "wbforge/annotation/review.hpp"
#include "wbforge/annotation/store.hpp"

namespace wbforge {

// Fixed-width bins from 0; the last bin collects everything beyond.
struct Histogram {
    double bin_width = 1.0;
    std::vector<int> counts;

    Histogram() = default;
    Histogram(double width, int bins) : bin_width(width), counts(static_cast<size_t>(bins) + 1, 0) {}
    void add(double v);
    int total() const;
    nlohmann::json to_json() const;
};

struct PartErrors {
    double mean_2d_px = 0.0;
    double mean_3d_mm = 0.0;
    int count_2d = 0; // corrected (keypoint, view) entries
    int count_3d = 0; // corrected keypoints that could be re-triangulated
};

struct CrossCheckConfig {
    double bin_2d_px = 1.0;
    int bins_2d = 20;
    double bin_3d_mm = 5.0;
    int bins_3d = 20;
};

struct CrossCheckReport {
    std::map<std::string, PartErrors> parts; // all, body, face, hand
    Histogram hist_2d, hist_3d;
    int records = 0;
    int samples_reviewed = 0;
    int views_reviewed = 0;
    int corrected_keypoints = 0; // keypoints moved in at least one view
    int triangulated = 0;
    int excluded_insufficient_views = 0;

    nlohmann::json to_json() const;
};

// Errors over corrected keypoints only. Within a reviewed view, each
// annotator's position for a keypoint is their correction or, if they left it,
// the original projection; the view's corrected position is the mean over
// annotators. A corrected keypoint is re-triangulated from every reviewed view
// that sees it in front of the camera and needs a non-opposing pair.
CrossCheckReport compute_crosscheck(const ReviewSet& set, const std::vector<CorrectionRecord>& live,
                                    const CrossCheckConfig& config = {});

// Figures from the original manual cross-check study, carried in reports for comparison.
nlohmann::json reference_study_errors();

} // namespace wbforge
