#include "wbforge/benchmark/direct.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"
#include "wbforge/nn/optim.hpp"
#include "wbforge/synth/heatmap.hpp"

namespace wbforge {

using nn::Mat;

nlohmann::json DirectRegressorConfig::to_json() const
{
    return {{"grid", grid},
            {"sigma", sigma},
            {"padding", padding},
            {"conv1_channels", conv1_channels},
            {"conv1_kernel", conv1_kernel},
            {"conv2_channels", conv2_channels},
            {"hidden", hidden}};
}

DirectRegressorConfig DirectRegressorConfig::from_json(const nlohmann::json& j)
{
    DirectRegressorConfig c;
    c.grid = j.at("grid").get<int>();
    c.sigma = j.at("sigma").get<double>();
    c.padding = j.at("padding").get<double>();
    c.conv1_channels = j.at("conv1_channels").get<int>();
    c.conv1_kernel = j.at("conv1_kernel").get<int>();
    c.conv2_channels = j.at("conv2_channels").get<int>();
    c.hidden = j.at("hidden").get<int>();
    return c;
}

Mat render_person(const Pose2D& pose, const DirectRegressorConfig& config)
{
    const Eigen::Vector2d ext = box_extent(pose);
    const double side = config.padding * ext.maxCoeff();
    if (!(side > 0.0))
        throw DegenerateInputError("person box has zero size");
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
    for (int k = 0; k < pose.size(); ++k)
        if (pose.is_visible(k))
            lo = lo.cwiseMin(pose.coords.row(k).transpose());
    const Eigen::Vector2d origin = lo + 0.5 * ext - Eigen::Vector2d::Constant(0.5 * side);
    Pose2D g = pose;
    for (int k = 0; k < pose.size(); ++k)
        g.coords.row(k) = (pose.coords.row(k) - origin.transpose()) * (config.grid / side);
    const HeatmapRender dense = TiledHeatmaps::render(g, config.grid, config.grid, config.sigma).to_dense();
    Mat out(pose.size(), config.grid * config.grid);
    for (int c = 0; c < pose.size(); ++c)
        for (int p = 0; p < config.grid * config.grid; ++p)
            out(c, p) = dense.data[static_cast<size_t>(c) * config.grid * config.grid + static_cast<size_t>(p)];
    return out;
}

DirectRegressor::DirectRegressor(DirectRegressorConfig config, std::uint64_t seed, int keypoints)
    : config_(std::move(config)), seed_(seed), keypoints_(keypoints)
{
    if (config_.grid <= 0 || config_.conv1_kernel <= 0 || config_.grid % config_.conv1_kernel != 0 || config_.hidden <= 0 ||
        config_.conv1_channels <= 0 || config_.conv2_channels <= 0 || !(config_.padding >= 1.0))
        throw ValidationError("direct regressor config: grid must be a multiple of the first kernel, sizes positive");
    nn::Rng rng(seed);
    conv1_ = nn::Conv2d::create(params_, "conv1", keypoints_, config_.conv1_channels, config_.conv1_kernel,
                                config_.conv1_kernel, 0, config_.grid, config_.grid, rng);
    conv2_ = nn::Conv2d::create(params_, "conv2", config_.conv1_channels, config_.conv2_channels, 3, 1, 1,
                                conv1_.out_h(), conv1_.out_w(), rng);
    const int flat = config_.conv2_channels * conv2_.out_h() * conv2_.out_w();
    fc1_ = nn::Linear::create(params_, "fc1", flat, config_.hidden, rng);
    fc2_ = nn::Linear::create(params_, "fc2", config_.hidden, 3 * keypoints_, rng);
}

Mat DirectRegressor::forward(std::span<const Mat> renders, Tape* tape) const
{
    const auto n = static_cast<Eigen::Index>(renders.size());
    const int hw = conv2_.out_h() * conv2_.out_w();
    Mat flat(n, config_.conv2_channels * hw);
    if (tape) {
        tape->cols1.resize(renders.size());
        tape->cols2.resize(renders.size());
        tape->z1.resize(renders.size());
        tape->z2.resize(renders.size());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Mat c1, c2;
        const Mat z1 = conv1_.forward(params_, renders[static_cast<size_t>(i)], c1);
        const Mat z2 = conv2_.forward(params_, nn::relu(z1), c2);
        const Mat a2 = nn::relu(z2);
        for (int c = 0; c < config_.conv2_channels; ++c)
            flat.row(i).segment(static_cast<Eigen::Index>(c) * hw, hw) = a2.row(c);
        if (tape) {
            const auto s = static_cast<size_t>(i);
            tape->cols1[s] = std::move(c1);
            tape->cols2[s] = std::move(c2);
            tape->z1[s] = z1;
            tape->z2[s] = z2;
        }
    }
    const Mat f1 = fc1_.forward(params_, flat);
    if (tape) {
        tape->flat = flat;
        tape->f1 = f1;
    }
    return fc2_.forward(params_, nn::relu(f1));
}

void DirectRegressor::backward(const Tape& tape, const Mat& dy, nn::Gradients& g) const
{
    const Mat da1 = fc2_.backward(params_, nn::relu(tape.f1), dy, g);
    const Mat dflat = fc1_.backward(params_, tape.flat, nn::relu_backward(tape.f1, da1), g);
    const int hw = conv2_.out_h() * conv2_.out_w();
    for (size_t i = 0; i < tape.z2.size(); ++i) {
        Mat da2(config_.conv2_channels, hw);
        for (int c = 0; c < config_.conv2_channels; ++c)
            da2.row(c) = dflat.row(static_cast<Eigen::Index>(i)).segment(static_cast<Eigen::Index>(c) * hw, hw);
        const Mat dz1in = conv2_.backward(params_, tape.cols2[i], nn::relu_backward(tape.z2[i], da2), g);
        conv1_.backward(params_, tape.cols1[i], nn::relu_backward(tape.z1[i], dz1in), g);
    }
}

std::vector<Coords3> DirectRegressor::predict(std::span<const Pose2D> inputs) const
{
    if (norm_.target_mean.size() != 3 * keypoints_)
        throw ValidationError("direct regressor has no fitted normalisation");
    std::vector<Coords3> out(inputs.size());
    constexpr size_t kChunk = 64;
    for (size_t lo = 0; lo < inputs.size(); lo += kChunk) {
        const size_t hi = std::min(inputs.size(), lo + kChunk);
        std::vector<Mat> r(hi - lo);
#pragma omp parallel for
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(hi - lo); ++i)
            r[static_cast<size_t>(i)] = render_person(inputs[lo + static_cast<size_t>(i)], config_);
        const Mat y = forward(r);
        for (size_t i = lo; i < hi; ++i) {
            const Eigen::VectorXd unit =
                y.row(static_cast<Eigen::Index>(i - lo)).transpose().cwiseProduct(norm_.target_std) + norm_.target_mean;
            out[i] = rescale(Eigen::Map<const Coords3>(unit.data(), keypoints_, 3), norm_.scale, inputs[i]);
        }
    }
    return out;
}

void DirectRegressor::save(const std::filesystem::path& path, const nlohmann::json& extra) const
{
    nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
    header["kind"] = "direct";
    header["config"] = config_.to_json();
    header["seed"] = seed_;
    header["keypoints"] = keypoints_;
    header["normalization"] = norm_.to_json();
    nn::save_checkpoint(path, header, params_);
}

DirectRegressor DirectRegressor::load(const std::filesystem::path& path)
{
    const auto header = nn::read_checkpoint_header(path);
    if (header.value("kind", std::string()) != "direct")
        throw SchemaError("checkpoint " + path.string() + " is not a direct regressor");
    DirectRegressor m(DirectRegressorConfig::from_json(header.at("config")), header.at("seed").get<std::uint64_t>(),
                      header.at("keypoints").get<int>());
    nn::load_checkpoint(path, m.params_);
    m.norm_ = LiftNormalization::from_json(header.at("normalization"));
    m.trained_ = true;
    return m;
}

LifterHistory train_direct_regressor(DirectRegressor& model, const std::vector<BenchmarkSample>& train,
                                     const std::vector<BenchmarkSample>& val, const DirectTrainConfig& cfg,
                                     const KeypointLayout& layout)
{
    if (train.empty() || cfg.epochs <= 0 || cfg.batch <= 0)
        throw ValidationError("direct regressor training: need samples and positive epochs/batch");
    const auto t_start = std::chrono::steady_clock::now();
    model.set_normalization(fit_lift_normalization(train, BoxSize::mean_extent, layout));
    const LiftNormalization& norm = model.normalization();
    const auto labels = labels_of(train);
    const auto val_inputs = inputs_of(val);
    const auto val_labels = val.empty() ? std::vector<Coords3>{} : labels_of(val);
    const int K = layout.total();

    nn::Rng rng(cfg.seed);
    nn::Adam adam(model.parameters());
    const int per_epoch = static_cast<int>((train.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch));
    const int total = per_epoch * cfg.epochs;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    LifterHistory h;
    nn::Parameters best = model.parameters();
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (int s = 0; s < per_epoch; ++s) {
            const size_t lo = static_cast<size_t>(s) * static_cast<size_t>(cfg.batch);
            const size_t hi = std::min(train.size(), lo + static_cast<size_t>(cfg.batch));
            std::vector<Mat> renders(hi - lo);
            Mat t(static_cast<Eigen::Index>(hi - lo), 3 * K);
#pragma omp parallel for
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(hi - lo); ++i) {
                const size_t idx = order[lo + static_cast<size_t>(i)];
                renders[static_cast<size_t>(i)] = render_person(train[idx].pose2d, model.config());
                t.row(i) = ((unit_target(labels[idx], norm.scale, train[idx].pose2d, layout) - norm.target_mean)
                                .cwiseQuotient(norm.target_std))
                               .transpose();
            }
            DirectRegressor::Tape tape;
            const Mat diff = model.forward(renders, &tape) - t;
            const double loss = diff.cwiseAbs().sum() / static_cast<double>(diff.size());
            if (!std::isfinite(loss))
                throw DivergenceError("direct regressor training diverged at epoch " + std::to_string(epoch));
            nn::Gradients g = model.parameters().zeros();
            const Mat d = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }) /
                          static_cast<double>(diff.size());
            model.backward(tape, d, g);
            nn::clip_grad_norm(g, cfg.clip_norm);
            adam.step(model.parameters(), g, nn::cosine_lr(cfg.lr, step++, total, cfg.lr_floor));
            loss_sum += loss * static_cast<double>(hi - lo);
        }
        h.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
        double v = h.train_loss.back();
        if (!val.empty()) {
            const auto e = mpjpe_batch(model.predict(val_inputs), val_labels, Part::all, Alignment::pelvis, layout);
            v = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
        }
        h.val_mpjpe.push_back(v);
        if (val.empty())
            spdlog::info("direct epoch {}: loss {:.4f}", epoch, h.train_loss.back());
        else
            spdlog::info("direct epoch {}: loss {:.4f}, val MPJPE {:.1f} mm", epoch, h.train_loss.back(), v);
        if (h.best_epoch < 0 || v < h.best_val_mpjpe) {
            h.best_val_mpjpe = v;
            h.best_epoch = epoch;
            best = model.parameters();
        }
        if (cfg.max_seconds > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() > cfg.max_seconds)
            break;
    }
    model.parameters() = best;
    model.mark_trained();
    return h;
}

} // namespace wbforge
