#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include "wbforge/skeleton/layout.hpp"

namespace wbforge {

enum class NormalizerKind { mean_std, pelvis_frobenius };

// Input/target normalization for the lifting baselines. Poses are handled as
// flattened row vectors [x1, y1, (z1,) x2, ...] of `dims` coordinates per keypoint.
//
// mean_std:          per-coordinate (x - mean) / std, statistics fitted on training rows.
// pelvis_frobenius:  subtract the hip midpoint, then divide by the Frobenius norm of
//                    the centered coordinate matrix. The removed center and scale are
//                    returned with the values so that denormalize can undo them.
class Normalizer {
public:
    struct Normalized {
        Eigen::VectorXd values;
        Eigen::VectorXd center; // pelvis_frobenius only
        double scale = 1.0;     // pelvis_frobenius only
    };

    static Normalizer fit_mean_std(const Eigen::MatrixXd& rows);
    static Normalizer pelvis_frobenius(const KeypointLayout& layout, int dims);

    NormalizerKind kind() const { return kind_; }
    int dims() const { return dims_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::VectorXd& stddev() const { return std_; }

    Normalized normalize(const Eigen::VectorXd& flat) const;
    Eigen::VectorXd denormalize(const Normalized& n) const;

    // Row-wise mean_std transforms (each row one sample).
    Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& rows) const;
    Eigen::MatrixXd denormalize_rows(const Eigen::MatrixXd& rows) const;

    nlohmann::json to_json() const;
    static Normalizer from_json(const nlohmann::json& j, const KeypointLayout& layout);

private:
    NormalizerKind kind_ = NormalizerKind::mean_std;
    int dims_ = 0;
    Eigen::VectorXd mean_, std_;
    std::pair<int, int> hip_rows_{0, 0};
};

} // namespace wbforge
