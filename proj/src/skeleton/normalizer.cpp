#include "wbforge/skeleton/normalizer.hpp"

#include <cmath>

#include "wbforge/errors.hpp"

namespace wbforge {

Normalizer Normalizer::fit_mean_std(const Eigen::MatrixXd& rows)
{
    if (rows.rows() < 2)
        throw DegenerateInputError("mean_std normalizer needs at least two samples");
    Normalizer n;
    n.kind_ = NormalizerKind::mean_std;
    n.mean_ = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centered = rows.rowwise() - n.mean_.transpose();
    n.std_ = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows())).sqrt().transpose();
    for (Eigen::Index i = 0; i < n.std_.size(); ++i)
        if (!(n.std_[i] > 0.0))
            throw DegenerateInputError("mean_std normalizer: coordinate " + std::to_string(i) +
                                       " has zero standard deviation");
    return n;
}

Normalizer Normalizer::pelvis_frobenius(const KeypointLayout& layout, int dims)
{
    if (dims != 2 && dims != 3)
        throw ValidationError("pelvis_frobenius normalizer: dims must be 2 or 3");
    Normalizer n;
    n.kind_ = NormalizerKind::pelvis_frobenius;
    n.dims_ = dims;
    n.hip_rows_ = {layout.hips().first.row(), layout.hips().second.row()};
    return n;
}

Normalizer::Normalized Normalizer::normalize(const Eigen::VectorXd& flat) const
{
    Normalized out;
    if (kind_ == NormalizerKind::mean_std) {
        if (flat.size() != mean_.size())
            throw ValidationError("normalize: dimension mismatch");
        out.values = (flat - mean_).cwiseQuotient(std_);
        return out;
    }
    if (flat.size() % dims_ != 0)
        throw ValidationError("normalize: length is not a multiple of dims");
    const auto [l, r] = hip_rows_;
    out.center = 0.5 * (flat.segment(l * dims_, dims_) + flat.segment(r * dims_, dims_));
    out.values = flat;
    for (Eigen::Index k = 0; k < flat.size() / dims_; ++k)
        out.values.segment(k * dims_, dims_) -= out.center;
    out.scale = out.values.norm();
    if (!(out.scale > 0.0))
        throw DegenerateInputError("pelvis_frobenius: centered pose has zero norm");
    out.values /= out.scale;
    return out;
}

Eigen::VectorXd Normalizer::denormalize(const Normalized& n) const
{
    if (kind_ == NormalizerKind::mean_std) {
        if (n.values.size() != mean_.size())
            throw ValidationError("denormalize: dimension mismatch");
        return n.values.cwiseProduct(std_) + mean_;
    }
    Eigen::VectorXd out = n.values * n.scale;
    for (Eigen::Index k = 0; k < out.size() / dims_; ++k)
        out.segment(k * dims_, dims_) += n.center;
    return out;
}

Eigen::MatrixXd Normalizer::normalize_rows(const Eigen::MatrixXd& rows) const
{
    if (kind_ != NormalizerKind::mean_std)
        throw ValidationError("normalize_rows is only defined for mean_std");
    return (rows.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array();
}

Eigen::MatrixXd Normalizer::denormalize_rows(const Eigen::MatrixXd& rows) const
{
    if (kind_ != NormalizerKind::mean_std)
        throw ValidationError("denormalize_rows is only defined for mean_std");
    return (rows.array().rowwise() * std_.transpose().array()).matrix().rowwise() + mean_.transpose();
}

nlohmann::json Normalizer::to_json() const
{
    if (kind_ == NormalizerKind::pelvis_frobenius)
        return {{"kind", "pelvis_frobenius"}, {"dims", dims_}};
    return {{"kind", "mean_std"},
            {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
            {"std", std::vector<double>(std_.data(), std_.data() + std_.size())}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j, const KeypointLayout& layout)
{
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pelvis_frobenius")
        return pelvis_frobenius(layout, j.at("dims").get<int>());
    if (kind != "mean_std")
        throw SchemaError("unknown normalizer kind '" + kind + "'");
    Normalizer n;
    n.kind_ = NormalizerKind::mean_std;
    auto m = j.at("mean").get<std::vector<double>>();
    auto s = j.at("std").get<std::vector<double>>();
    n.mean_ = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
    n.std_ = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    return n;
}

} // namespace wbforge
