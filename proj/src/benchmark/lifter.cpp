#include "wbforge/benchmark/lifter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"
#include "wbforge/nn/optim.hpp"

namespace wbforge {

using nn::Mat;

std::string_view to_string(LifterVariant v) { return v == LifterVariant::simple ? "simple" : "large"; }

LifterVariant lifter_variant_from_string(std::string_view name)
{
    if (name == "simple")
        return LifterVariant::simple;
    if (name == "large")
        return LifterVariant::large;
    throw ValidationError("unknown lifter variant '" + std::string(name) + "'");
}

MLPLifterConfig MLPLifterConfig::simple(int width)
{
    MLPLifterConfig c;
    c.variant = LifterVariant::simple;
    c.width = width;
    return c;
}

MLPLifterConfig MLPLifterConfig::large(int width)
{
    MLPLifterConfig c;
    c.variant = LifterVariant::large;
    c.width = width;
    return c;
}

nlohmann::json MLPLifterConfig::to_json() const
{
    return {{"variant", to_string(variant)},
            {"width", width},
            {"dropout", dropout},
            {"leaky_slope", leaky_slope},
            {"normalization", normalization == InputNormalization::mean_std ? "mean_std" : "box"},
            {"box", box == BoxSize::mean_extent ? "mean_extent" : "per_axis"}};
}

MLPLifterConfig MLPLifterConfig::from_json(const nlohmann::json& j)
{
    MLPLifterConfig c;
    c.variant = lifter_variant_from_string(j.at("variant").get<std::string>());
    c.width = j.at("width").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.normalization = j.at("normalization").get<std::string>() == "box" ? InputNormalization::box
                                                                        : InputNormalization::mean_std;
    c.box = j.at("box").get<std::string>() == "per_axis" ? BoxSize::per_axis : BoxSize::mean_extent;
    return c;
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

nlohmann::json LiftNormalization::to_json() const
{
    return {{"scale", scale.to_json()},
            {"input_mean", vec_json(input_mean)},
            {"input_std", vec_json(input_std)},
            {"target_mean", vec_json(target_mean)},
            {"target_std", vec_json(target_std)}};
}

LiftNormalization LiftNormalization::from_json(const nlohmann::json& j)
{
    LiftNormalization n;
    n.scale = ScaleStats::from_json(j.at("scale"));
    n.input_mean = json_vec(j.at("input_mean"));
    n.input_std = json_vec(j.at("input_std"));
    n.target_mean = json_vec(j.at("target_mean"));
    n.target_std = json_vec(j.at("target_std"));
    return n;
}

Eigen::VectorXd box_normalized_input(const Pose2D& pose)
{
    Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (int k = 0; k < pose.size(); ++k)
        if (pose.is_visible(k)) {
            lo = lo.cwiseMin(pose.coords.row(k).transpose());
            hi = hi.cwiseMax(pose.coords.row(k).transpose());
        }
    if (!(lo.x() <= hi.x()))
        throw DegenerateInputError("2D pose has no visible keypoints");
    const double size = (hi - lo).mean();
    if (!(size > 0.0))
        throw DegenerateInputError("input 2D bounding box has zero size");
    const Eigen::Vector2d c = 0.5 * (lo + hi);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * pose.size());
    for (int k = 0; k < pose.size(); ++k)
        if (pose.is_visible(k))
            out.segment<2>(2 * k) = (pose.coords.row(k).transpose() - c) / size;
    return out;
}

Eigen::VectorXd unit_target(const Coords3& camera_pose, const ScaleStats& scale, const Pose2D& input,
                            const KeypointLayout& layout)
{
    const Coords3 centred = camera_pose.rowwise() - pelvis(camera_pose, layout);
    const Coords3 unit = to_unit(centred, scale, input);
    return Eigen::Map<const Eigen::VectorXd>(unit.data(), unit.size());
}

LiftNormalization fit_lift_normalization(std::span<const BenchmarkSample> train, BoxSize box, const KeypointLayout& layout)
{
    if (train.empty())
        throw ValidationError("lifter normalisation needs training samples");
    const auto inputs = inputs_of(train);
    const auto labels = labels_of(train);
    LiftNormalization n;
    n.scale = fit_scale_stats(inputs, labels, box);

    const Eigen::Index K = layout.total();
    Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * K), ss = s, cnt = s;
    Eigen::VectorXd ts = Eigen::VectorXd::Zero(3 * K), tss = ts;
    for (size_t i = 0; i < train.size(); ++i) {
        const Eigen::VectorXd x = box_normalized_input(inputs[i]);
        for (Eigen::Index k = 0; k < K; ++k)
            if (inputs[i].is_visible(static_cast<int>(k)))
                for (int a = 0; a < 2; ++a) {
                    s(2 * k + a) += x(2 * k + a);
                    ss(2 * k + a) += x(2 * k + a) * x(2 * k + a);
                    cnt(2 * k + a) += 1.0;
                }
        const Eigen::VectorXd t = unit_target(labels[i], n.scale, inputs[i], layout);
        ts += t;
        tss += t.cwiseAbs2();
    }
    const double N = static_cast<double>(train.size());
    n.input_mean = s.cwiseQuotient(cnt.cwiseMax(1.0));
    n.input_std = (ss.cwiseQuotient(cnt.cwiseMax(1.0)) - n.input_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    n.target_mean = ts / N;
    n.target_std = (tss / N - n.target_mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    // Constant coordinates (the pelvis midpoint) keep unit scale.
    n.input_std = n.input_std.unaryExpr([](double v) { return v > 1e-8 ? v : 1.0; });
    n.target_std = n.target_std.unaryExpr([](double v) { return v > 1e-8 ? v : 1.0; });
    return n;
}

Eigen::VectorXd encode_lift_input(const Pose2D& pose, const LiftNormalization& norm, InputNormalization mode)
{
    const Eigen::Index K = pose.size();
    if (norm.input_mean.size() != 2 * K)
        throw ValidationError("lifter input has " + std::to_string(K) + " keypoints; normalisation expects " +
                              std::to_string(norm.input_mean.size() / 2));
    const Eigen::VectorXd x = box_normalized_input(pose);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * K);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (!pose.is_visible(static_cast<int>(k))) {
            out(2 * K + k) = 1.0;
            continue;
        }
        for (int a = 0; a < 2; ++a) {
            const Eigen::Index i = 2 * k + a;
            out(i) = mode == InputNormalization::mean_std ? (x(i) - norm.input_mean(i)) / norm.input_std(i) : x(i);
        }
    }
    return out;
}

std::vector<Pose2D> inputs_of(std::span<const BenchmarkSample> samples)
{
    std::vector<Pose2D> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(s.pose2d);
    return out;
}

std::vector<Coords3> labels_of(std::span<const BenchmarkSample> samples)
{
    std::vector<Coords3> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.pose3d.size() == 0)
            throw ValidationError("sample " + std::to_string(s.id) + " carries no 3D label");
        out.push_back(s.pose3d.coords);
    }
    return out;
}

MLPLifter::MLPLifter(MLPLifterConfig config, std::uint64_t seed, int keypoints)
    : config_(std::move(config)), seed_(seed), keypoints_(keypoints)
{
    if (config_.width <= 0 || keypoints_ <= 0 || !(config_.dropout >= 0.0 && config_.dropout < 1.0))
        throw ValidationError("lifter config: width and keypoints must be positive, dropout in [0, 1)");
    nn::Rng rng(seed);
    const int L = config_.linear_layers();
    for (int i = 0; i < L; ++i) {
        const int in = i == 0 ? 3 * keypoints_ : config_.width;
        const int out = i == L - 1 ? 3 * keypoints_ : config_.width;
        linear_.push_back(nn::Linear::create(params_, "fc" + std::to_string(i), in, out, rng));
        if (config_.variant == LifterVariant::simple && i < L - 1)
            bn_.push_back(nn::BatchNorm::create(params_, "bn" + std::to_string(i), out));
    }
}

Mat MLPLifter::forward_impl(nn::Parameters& p, const Mat& x, bool training, nn::Rng* rng, Tape* tape) const
{
    const int L = config_.linear_layers();
    const bool bn = config_.variant == LifterVariant::simple;
    if (tape) {
        *tape = {};
        tape->bn.resize(static_cast<size_t>(L - 1));
    }
    // One hidden layer: linear, [batch norm], activation, dropout.
    auto hidden = [&](int i, const Mat& in) {
        Mat z = linear_[static_cast<size_t>(i)].forward(p, in);
        if (tape)
            tape->act.push_back(in);
        if (bn) {
            nn::BatchNorm::Cache c;
            z = training ? bn_[static_cast<size_t>(i)].forward_train(p, z, c) : bn_[static_cast<size_t>(i)].forward_eval(p, z, &c);
            if (tape)
                tape->bn[static_cast<size_t>(i)] = std::move(c);
        }
        Mat a = bn ? nn::relu(z) : nn::leaky_relu(z, config_.leaky_slope);
        Mat m;
        if (training && config_.dropout > 0.0) {
            m = nn::dropout_mask(static_cast<int>(a.rows()), static_cast<int>(a.cols()), config_.dropout, *rng);
            a = a.cwiseProduct(m);
        }
        if (tape) {
            tape->pre.push_back(std::move(z));
            tape->drop.push_back(std::move(m));
        }
        return a;
    };
    Mat h = hidden(0, x);
    for (int b = 0; b < config_.residual_blocks(); ++b) {
        const Mat a = hidden(2 * b + 1, h);
        h += hidden(2 * b + 2, a);
    }
    if (tape)
        tape->act.push_back(h);
    return linear_.back().forward(p, h);
}

Mat MLPLifter::forward(const Mat& x, bool training, nn::Rng* rng, Tape* tape)
{
    if (training && config_.dropout > 0.0 && !rng)
        throw ValidationError("lifter training forward needs an rng");
    return forward_impl(params_, x, training, rng, tape);
}

Mat MLPLifter::predict(const Mat& x) const
{
    // Evaluation mode leaves every parameter untouched.
    return forward_impl(const_cast<nn::Parameters&>(params_), x, false, nullptr, nullptr);
}

void MLPLifter::backward(const Tape& tape, const Mat& dy, nn::Gradients& g) const
{
    const int L = config_.linear_layers();
    const bool bn = config_.variant == LifterVariant::simple;
    auto hidden_back = [&](int i, Mat d) {
        const auto s = static_cast<size_t>(i);
        if (tape.drop[s].size())
            d = d.cwiseProduct(tape.drop[s]);
        d = bn ? nn::relu_backward(tape.pre[s], d) : nn::leaky_relu_backward(tape.pre[s], d, config_.leaky_slope);
        if (bn)
            d = bn_[s].backward(params_, tape.bn[s], d, g);
        return linear_[s].backward(params_, tape.act[s], d, g);
    };
    Mat dh = linear_.back().backward(params_, tape.act[static_cast<size_t>(L - 1)], dy, g);
    for (int b = config_.residual_blocks() - 1; b >= 0; --b) {
        const Mat da = hidden_back(2 * b + 2, dh);
        dh += hidden_back(2 * b + 1, da);
    }
    hidden_back(0, dh);
}

Coords3 MLPLifter::decode(const Eigen::VectorXd& out, const Pose2D& input) const
{
    const Eigen::VectorXd unit = out.cwiseProduct(norm_.target_std) + norm_.target_mean;
    const Coords3 u = Eigen::Map<const Coords3>(unit.data(), keypoints_, 3);
    return rescale(u, norm_.scale, input);
}

std::vector<Coords3> MLPLifter::lift(std::span<const Pose2D> inputs) const
{
    if (norm_.input_mean.size() == 0)
        throw ValidationError("lifter has no fitted normalisation");
    std::vector<Coords3> out;
    out.reserve(inputs.size());
    constexpr size_t kChunk = 256;
    for (size_t lo = 0; lo < inputs.size(); lo += kChunk) {
        const size_t hi = std::min(inputs.size(), lo + kChunk);
        Mat x(static_cast<Eigen::Index>(hi - lo), 3 * keypoints_);
        for (size_t i = lo; i < hi; ++i)
            x.row(static_cast<Eigen::Index>(i - lo)) = encode_lift_input(inputs[i], norm_, config_.normalization).transpose();
        const Mat y = predict(x);
        for (size_t i = lo; i < hi; ++i)
            out.push_back(decode(y.row(static_cast<Eigen::Index>(i - lo)).transpose(), inputs[i]));
    }
    return out;
}

Coords3 MLPLifter::lift_encoded(const Eigen::VectorXd& encoded) const
{
    if (encoded.size() != 3 * keypoints_)
        throw ValidationError("encoded lifter input has the wrong size");
    const Eigen::VectorXd y = predict(encoded.transpose()).row(0).transpose();
    Eigen::VectorXd unit = y;
    if (norm_.target_std.size() == y.size())
        unit = y.cwiseProduct(norm_.target_std) + norm_.target_mean;
    return Eigen::Map<const Coords3>(unit.data(), keypoints_, 3);
}

void MLPLifter::save(const std::filesystem::path& path, const nlohmann::json& extra) const
{
    nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
    header["kind"] = "lifter";
    header["config"] = config_.to_json();
    header["seed"] = seed_;
    header["keypoints"] = keypoints_;
    header["normalization"] = norm_.to_json();
    nn::save_checkpoint(path, header, params_);
}

MLPLifter MLPLifter::load(const std::filesystem::path& path)
{
    const auto header = nn::read_checkpoint_header(path);
    if (header.value("kind", std::string()) != "lifter")
        throw SchemaError("checkpoint " + path.string() + " is not a lifter");
    MLPLifter m(MLPLifterConfig::from_json(header.at("config")), header.at("seed").get<std::uint64_t>(),
                header.at("keypoints").get<int>());
    nn::load_checkpoint(path, m.params_);
    m.norm_ = LiftNormalization::from_json(header.at("normalization"));
    m.trained_ = true;
    return m;
}

namespace {

double mean_of(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

LifterHistory train_lifter(MLPLifter& model, const std::vector<BenchmarkSample>& train,
                           const std::vector<BenchmarkSample>& val, const LifterTrainConfig& cfg,
                           const KeypointLayout& layout)
{
    if (train.empty() || cfg.epochs <= 0 || cfg.batch <= 0)
        throw ValidationError("lifter training: need samples and positive epochs/batch");
    if (model.keypoints() != layout.total())
        throw ValidationError("lifter keypoint count does not match the layout");
    const auto t_start = std::chrono::steady_clock::now();
    model.set_normalization(fit_lift_normalization(train, model.config().box, layout));
    const LiftNormalization& norm = model.normalization();
    const auto labels = labels_of(train);
    const auto val_inputs = inputs_of(val);
    const auto val_labels = val.empty() ? std::vector<Coords3>{} : labels_of(val);

    nn::Rng rng(cfg.seed);
    std::mt19937_64 mask_rng(cfg.seed ^ 0x2545f4914f6cdd1dULL);
    nn::Adam adam(model.parameters());
    const int per_epoch = static_cast<int>((train.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch));
    const int total = per_epoch * cfg.epochs;
    const int K = model.keypoints();
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    LifterHistory h;
    nn::Parameters best = model.parameters();
    int since_best = 0, step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (int s = 0; s < per_epoch; ++s) {
            const size_t lo = static_cast<size_t>(s) * static_cast<size_t>(cfg.batch);
            const size_t hi = std::min(train.size(), lo + static_cast<size_t>(cfg.batch));
            if (hi - lo < 2 && model.config().variant == LifterVariant::simple)
                continue; // batch statistics need two rows
            Mat x(static_cast<Eigen::Index>(hi - lo), 3 * K), t(x.rows(), 3 * K);
            for (size_t i = lo; i < hi; ++i) {
                const BenchmarkSample& smp = train[order[i]];
                Pose2D in = smp.pose2d;
                if (cfg.train_masks) {
                    const PoseMask m = draw_i2d_mask(smp.id, *cfg.train_masks, mask_rng, layout);
                    for (int k = 0; k < K; ++k)
                        if (m.masked[static_cast<size_t>(k)])
                            in.visible[static_cast<size_t>(k)] = 0;
                }
                const auto r = static_cast<Eigen::Index>(i - lo);
                x.row(r) = encode_lift_input(in, norm, model.config().normalization).transpose();
                t.row(r) = ((unit_target(labels[order[i]], norm.scale, in, layout) - norm.target_mean)
                                .cwiseQuotient(norm.target_std))
                               .transpose();
            }
            MLPLifter::Tape tape;
            const Mat y = model.forward(x, true, &rng, &tape);
            const Mat diff = y - t;
            const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
            if (!std::isfinite(loss))
                throw DivergenceError("lifter training diverged at epoch " + std::to_string(epoch));
            nn::Gradients g = model.parameters().zeros();
            model.backward(tape, diff * (2.0 / static_cast<double>(diff.size())), g);
            nn::clip_grad_norm(g, cfg.clip_norm);
            adam.step(model.parameters(), g, nn::cosine_lr(cfg.lr, step++, total, cfg.lr_floor));
            loss_sum += loss * static_cast<double>(hi - lo);
        }
        h.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
        double v = h.train_loss.back();
        if (!val.empty())
            v = mean_of(mpjpe_batch(model.lift(val_inputs), val_labels, Part::all, Alignment::pelvis, layout));
        h.val_mpjpe.push_back(v);
        if (val.empty())
            spdlog::info("lifter[{}] epoch {}: loss {:.4f}", to_string(model.config().variant), epoch, h.train_loss.back());
        else
            spdlog::info("lifter[{}] epoch {}: loss {:.4f}, val MPJPE {:.1f} mm", to_string(model.config().variant), epoch,
                         h.train_loss.back(), v);
        if (h.best_epoch < 0 || v < h.best_val_mpjpe) {
            h.best_val_mpjpe = v;
            h.best_epoch = epoch;
            best = model.parameters();
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
        if (cfg.max_seconds > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() > cfg.max_seconds)
            break;
    }
    model.parameters() = best;
    model.mark_trained();
    return h;
}

MeanPoseLifter::MeanPoseLifter(std::span<const BenchmarkSample> train, const KeypointLayout& layout)
    : norm_(fit_lift_normalization(train, BoxSize::mean_extent, layout)), keypoints_(layout.total())
{
}

std::vector<Coords3> MeanPoseLifter::lift(std::span<const Pose2D> inputs) const
{
    const Coords3 mean = Eigen::Map<const Coords3>(norm_.target_mean.data(), keypoints_, 3);
    std::vector<Coords3> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs)
        out.push_back(rescale(mean, norm_.scale, in));
    return out;
}

} // namespace wbforge
