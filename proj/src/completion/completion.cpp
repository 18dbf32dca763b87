#include "wbforge/completion/completion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>

#include <omp.h>
#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"
#include "wbforge/nn/optim.hpp"

namespace wbforge {

using nn::Mat;

CompletionNetConfig CompletionNetConfig::standard(const KeypointLayout& layout)
{
    CompletionNetConfig c;
    c.keypoints = layout.total();
    const auto& body = layout.rows(Part::body);
    const auto& face = layout.rows(Part::face);
    std::vector<int> s1(body.begin(), body.begin() + std::min<size_t>(17, body.size()));
    std::vector<int> s2 = body;
    std::vector<int> s3 = body;
    s3.insert(s3.end(), face.begin(), face.end());
    std::vector<int> s4 = layout.rows(Part::all);
    c.curriculum = {s1, s2, s3, s4};
    c.part_of.assign(static_cast<size_t>(c.keypoints), 0);
    for (auto [part, id] : {std::pair{Part::face, 1}, {Part::left_hand, 2}, {Part::right_hand, 3}})
        for (int r : layout.rows(part))
            c.part_of[static_cast<size_t>(r)] = id;
    return c;
}

void CompletionNetConfig::validate() const
{
    if (keypoints <= 0 || frequencies <= 0 || d_model <= 0 || n_head <= 0 || d_model % n_head != 0 || blocks <= 0 ||
        layers_per_block <= 0 || ff_dim <= 0 || !(radius_mm > 0.0))
        throw ValidationError("completion config: sizes must be positive and d_model divisible by n_head");
    if (static_cast<int>(curriculum.size()) != blocks)
        throw ValidationError("completion config: need one curriculum set per block");
    std::vector<char> prev(static_cast<size_t>(keypoints), 0);
    size_t prev_count = 0;
    for (size_t b = 0; b < curriculum.size(); ++b) {
        std::vector<char> cur(static_cast<size_t>(keypoints), 0);
        for (int r : curriculum[b]) {
            if (r < 0 || r >= keypoints)
                throw ValidationError("completion config: curriculum row out of range");
            cur[static_cast<size_t>(r)] = 1;
        }
        const size_t count = static_cast<size_t>(std::count(cur.begin(), cur.end(), 1));
        if (count != curriculum[b].size())
            throw ValidationError("completion config: duplicate curriculum row");
        for (int r = 0; r < keypoints; ++r)
            if (prev[static_cast<size_t>(r)] && !cur[static_cast<size_t>(r)])
                throw ValidationError("completion config: curriculum sets must be nested");
        if (b > 0 && count <= prev_count)
            throw ValidationError("completion config: curriculum sets must be strictly nested");
        prev = cur;
        prev_count = count;
    }
    if (!part_of.empty() && (static_cast<int>(part_of.size()) != keypoints ||
                             *std::min_element(part_of.begin(), part_of.end()) < 0))
        throw ValidationError("completion config: part_of needs one non-negative part id per keypoint");
    if (prev_count != static_cast<size_t>(keypoints))
        throw ValidationError("completion config: last curriculum set must cover every keypoint");
}

nlohmann::json CompletionNetConfig::to_json() const
{
    return {{"keypoints", keypoints}, {"frequencies", frequencies}, {"d_model", d_model},
            {"n_head", n_head},       {"blocks", blocks},           {"layers_per_block", layers_per_block},
            {"ff_dim", ff_dim},       {"radius_mm", radius_mm},     {"pre_norm", pre_norm},
            {"curriculum", curriculum}, {"part_of", part_of}};
}

CompletionNetConfig CompletionNetConfig::from_json(const nlohmann::json& j)
{
    CompletionNetConfig c;
    c.keypoints = j.at("keypoints").get<int>();
    c.frequencies = j.at("frequencies").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_head = j.at("n_head").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.layers_per_block = j.at("layers_per_block").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.radius_mm = j.at("radius_mm").get<double>();
    c.pre_norm = j.value("pre_norm", false);
    c.curriculum = j.at("curriculum").get<std::vector<std::vector<int>>>();
    c.part_of = j.value("part_of", std::vector<int>{});
    c.validate();
    return c;
}

Eigen::VectorXd coordinate_frequencies(int count, double radius_mm)
{
    Eigen::VectorXd w(count);
    for (int k = 0; k < count; ++k)
        w(k) = 3.14159265358979323846 * std::ldexp(1.0, k) / radius_mm;
    return w;
}

Mat encode_coordinates(const Coords3& coords, const Eigen::VectorXd& omegas)
{
    const int F = static_cast<int>(omegas.size());
    Mat out(coords.rows(), 6 * F);
    for (Eigen::Index r = 0; r < coords.rows(); ++r)
        for (int a = 0; a < 3; ++a)
            for (int k = 0; k < F; ++k) {
                const double x = omegas(k) * coords(r, a);
                out(r, a * 2 * F + k) = std::sin(x);
                out(r, a * 2 * F + F + k) = std::cos(x);
            }
    return out;
}

TrainingMaskDraw draw_training_mask(const KeypointLayout& layout, nn::Rng& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TrainingMaskDraw d;
    const int n = layout.total();
    for (;;) {
        d.mask.assign(static_cast<size_t>(n), 0);
        d.block_branch = u(rng) >= 0.5;
        d.block = -1;
        if (!d.block_branch) {
            for (int r = 0; r < n; ++r)
                d.mask[static_cast<size_t>(r)] = u(rng) < 0.15;
        } else {
            d.block = std::uniform_int_distribution<int>(0, 4)(rng);
            const std::vector<int>* rows = nullptr;
            switch (d.block) {
            case 0: rows = &layout.rows(Part::body); break;
            case 1: rows = &layout.rows(Part::left_hand); break;
            case 2: rows = &layout.rows(Part::right_hand); break;
            case 3: rows = &layout.left_face_rows(); break;
            default: rows = &layout.right_face_rows(); break;
            }
            for (int r : *rows)
                d.mask[static_cast<size_t>(r)] = 1;
        }
        if (std::find(d.mask.begin(), d.mask.end(), 0) != d.mask.end())
            return d;
    }
}

MaskPattern sample_training_mask(const KeypointLayout& layout, std::uint64_t seed)
{
    nn::Rng rng(seed);
    return draw_training_mask(layout, rng).mask;
}

CompletionNet::CompletionNet(CompletionNetConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed)
{
    config_.validate();
    omegas_ = coordinate_frequencies(config_.frequencies, config_.radius_mm);
    nn::Rng rng(seed);
    const int F = config_.token_features();
    mask_token_ = params_.add("mask_token", nn::uniform(1, F, 1.0, rng));
    input_ = nn::Linear::create(params_, "input", F, config_.d_model, rng);
    pos_ = params_.add("pos", nn::uniform(config_.keypoints, config_.d_model, 0.3, rng));
    for (int b = 0; b < config_.blocks; ++b)
        for (int l = 0; l < config_.layers_per_block; ++l)
            layers_.push_back(nn::EncoderLayer::create(params_, "block" + std::to_string(b) + ".layer" + std::to_string(l),
                                                       config_.d_model, config_.n_head, config_.ff_dim, rng,
                                                       config_.pre_norm));
    // Keys start equal to queries and positions of one part share a common
    // vector, so attention initially favours keypoints of the same part.
    if (!config_.part_of.empty()) {
        const int parts = *std::max_element(config_.part_of.begin(), config_.part_of.end()) + 1;
        const Mat shared = nn::uniform(parts, config_.d_model, 1.0, rng);
        for (int r = 0; r < config_.keypoints; ++r)
            params_[pos_].row(r) += shared.row(config_.part_of[static_cast<size_t>(r)]);
        for (auto& l : layers_)
            params_[l.attn.k.w] = params_[l.attn.q.w];
    }
    if (config_.pre_norm)
        out_norm_ = nn::LayerNorm::create(params_, "out_norm", config_.d_model);
    // Small head: an untrained net predicts masked keypoints near the known centroid.
    head_ = nn::Linear::create(params_, "head", config_.d_model, 3, rng, 0.05);
}

CompletionNet::Output CompletionNet::forward(const Coords3& pose, const MaskPattern& mask) const
{
    Tape tape;
    return forward(pose, mask, tape);
}

CompletionNet::Output CompletionNet::forward(const Coords3& pose, const MaskPattern& mask, Tape& tape) const
{
    const int n = config_.keypoints;
    if (pose.rows() != n || static_cast<int>(mask.size()) != n)
        throw ValidationError("completion forward: pose/mask size does not match the network's keypoint count");

    Eigen::RowVector3d center = Eigen::RowVector3d::Zero();
    int known = 0;
    for (int r = 0; r < n; ++r)
        if (!mask[static_cast<size_t>(r)]) {
            if (!pose.row(r).allFinite())
                throw ValidationError("completion forward: unmasked keypoint is not finite");
            center += pose.row(r);
            ++known;
        }
    if (known == 0)
        throw ValidationError("completion forward: every keypoint is masked");
    center /= known;

    Coords3 centered = pose;
    for (int r = 0; r < n; ++r)
        centered.row(r) = mask[static_cast<size_t>(r)] ? Eigen::RowVector3d::Zero() : Eigen::RowVector3d(pose.row(r) - center);
    tape.features = encode_coordinates(centered, omegas_);
    for (int r = 0; r < n; ++r)
        if (mask[static_cast<size_t>(r)])
            tape.features.row(r) = params_[mask_token_];
    tape.center = center;
    tape.mask = mask;

    Mat x = input_.forward(params_, tape.features) + params_[pos_];
    tape.x0 = x;
    tape.layers.resize(layers_.size());
    tape.block_hidden.clear();
    tape.out_norm.clear();
    Output out;
    for (int b = 0; b < config_.blocks; ++b) {
        for (int l = 0; l < config_.layers_per_block; ++l) {
            const size_t i = static_cast<size_t>(b * config_.layers_per_block + l);
            x = layers_[i].forward(params_, x, tape.layers[i]);
        }
        if (config_.pre_norm) {
            tape.out_norm.emplace_back();
            tape.block_hidden.push_back(out_norm_.forward(params_, x, tape.out_norm.back()));
        } else {
            tape.block_hidden.push_back(x);
        }
        Coords3 y = head_.forward(params_, tape.block_hidden.back()) * config_.radius_mm;
        y.rowwise() += center;
        out.blocks.push_back(std::move(y));
    }
    out.completed = pose;
    for (int r = 0; r < n; ++r)
        if (mask[static_cast<size_t>(r)])
            out.completed.row(r) = out.blocks.back().row(r);
    return out;
}

void CompletionNet::backward(const Tape& tape, const std::vector<Coords3>& d_blocks, nn::Gradients& g) const
{
    Mat dx = Mat::Zero(config_.keypoints, config_.d_model);
    for (int b = config_.blocks - 1; b >= 0; --b) {
        const Mat dy = Mat(d_blocks[static_cast<size_t>(b)]) * config_.radius_mm;
        const Mat dh = head_.backward(params_, tape.block_hidden[static_cast<size_t>(b)], dy, g);
        dx += config_.pre_norm ? out_norm_.backward(params_, tape.out_norm[static_cast<size_t>(b)], dh, g) : dh;
        for (int l = config_.layers_per_block - 1; l >= 0; --l) {
            const size_t i = static_cast<size_t>(b * config_.layers_per_block + l);
            dx = layers_[i].backward(params_, tape.layers[i], dx, g);
        }
    }
    g[pos_] += dx;
    const Mat df = input_.backward(params_, tape.features, dx, g);
    for (int r = 0; r < config_.keypoints; ++r)
        if (tape.mask[static_cast<size_t>(r)])
            g[mask_token_] += df.row(r);
}

void CompletionNet::save(const std::filesystem::path& path, const nlohmann::json& extra) const
{
    nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
    header["kind"] = "completion";
    header["config"] = config_.to_json();
    header["seed"] = seed_;
    nn::save_checkpoint(path, header, params_);
}

CompletionNet CompletionNet::load(const std::filesystem::path& path)
{
    const auto header = nn::read_checkpoint_header(path);
    if (header.value("kind", std::string()) != "completion")
        throw SchemaError("checkpoint " + path.string() + " is not a completion model");
    CompletionNet net(CompletionNetConfig::from_json(header.at("config")), header.at("seed").get<std::uint64_t>());
    nn::load_checkpoint(path, net.params_);
    net.trained_ = true;
    return net;
}

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

} // namespace

CompletionLoss completion_loss(const CompletionNet::Output& out, const Coords3& gt3d,
                               const std::optional<CompletionViews>& views, const MaskPattern& mask,
                               const CompletionLossConfig& cfg, const CompletionNetConfig& net_cfg,
                               const KeypointLayout& layout, std::vector<Coords3>* grads)
{
    if (cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw ValidationError("completion loss: alpha and beta must be non-negative");
    const int n = net_cfg.keypoints;
    if (gt3d.rows() != n || static_cast<int>(mask.size()) != n || static_cast<int>(out.blocks.size()) != net_cfg.blocks)
        throw ValidationError("completion loss: shapes do not match the network configuration");
    if (views && views->rig && static_cast<int>(views->views.size()) != views->rig->size())
        throw ValidationError("completion loss: need one 2D pose per rig camera");

    CompletionLoss L;
    if (grads)
        grads->assign(out.blocks.size(), Coords3::Zero(n, 3));

    for (size_t b = 0; b < out.blocks.size(); ++b) {
        const Coords3& X = out.blocks[b];
        const std::vector<int>& rows = net_cfg.curriculum[b];
        const double inv = 1.0 / static_cast<double>(rows.size());
        double l3 = 0.0;
        for (int r : rows) {
            const Eigen::RowVector3d d = X.row(r) - gt3d.row(r);
            l3 += d.cwiseAbs().sum();
            if (grads)
                for (int a = 0; a < 3; ++a)
                    (*grads)[b](r, a) += inv * sgn(d(a));
        }
        L.l3d += l3 * inv;

        if (!views || !views->rig || cfg.alpha == 0.0)
            continue;
        struct Term {
            int row, view;
        };
        std::vector<Term> terms;
        for (int r : rows)
            for (int v = 0; v < views->rig->size(); ++v) {
                const Pose2D& p = views->views[static_cast<size_t>(v)];
                if (p.size() == n && p.is_visible(r))
                    terms.push_back({r, v});
            }
        if (terms.empty()) {
            ++L.empty_blocks;
            continue;
        }
        const double inv2 = 1.0 / static_cast<double>(terms.size());
        double l2 = 0.0;
        for (auto [r, v] : terms) {
            const CameraModel& cam = views->rig->camera(v);
            const Eigen::Vector3d h = cam.K * cam.to_camera(X.row(r).transpose());
            if (!(h.z() > 1.0))
                continue; // prediction behind the camera: no usable reprojection
            const Eigen::Vector2d uv = h.head<2>() / h.z();
            const Eigen::Vector2d d = uv - views->views[static_cast<size_t>(v)].coords.row(r).transpose();
            l2 += d.cwiseAbs().sum();
            if (grads) {
                const Eigen::Matrix3d KR = cam.K * cam.R;
                Eigen::RowVector3d gx = Eigen::RowVector3d::Zero();
                for (int a = 0; a < 2; ++a)
                    gx += sgn(d(a)) * (KR.row(a) - uv(a) * KR.row(2)) / h.z();
                (*grads)[b].row(r) += cfg.alpha * inv2 * gx;
            }
        }
        L.l2d += l2 * inv2;
    }

    if (cfg.beta > 0.0 || !grads) {
        Coords3 gsym;
        L.lsym = symmetric_length_error(out.completed, layout, grads && cfg.beta > 0.0 ? &gsym : nullptr);
        if (grads && cfg.beta > 0.0)
            for (int r = 0; r < n; ++r)
                if (mask[static_cast<size_t>(r)])
                    grads->back().row(r) += cfg.beta * gsym.row(r);
    }
    L.total = L.l3d + cfg.alpha * L.l2d + cfg.beta * L.lsym;
    if (L.empty_blocks > 0)
        spdlog::trace("completion loss: {} block(s) without 2D evidence", L.empty_blocks);
    return L;
}

double masked_mpjpe(const CompletionNet& net, const std::vector<CompletionSample>& samples,
                    const std::vector<MaskPattern>& masks)
{
    if (masks.size() != samples.size())
        throw ValidationError("masked_mpjpe: one mask per sample required");
    std::vector<double> err(samples.size(), 0.0);
    std::vector<std::exception_ptr> errors(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) try {
        const auto& m = masks[static_cast<size_t>(i)];
        const auto out = net.forward(samples[static_cast<size_t>(i)].pose, m);
        double s = 0.0;
        int c = 0;
        for (size_t r = 0; r < m.size(); ++r)
            if (m[r]) {
                s += (out.completed.row(static_cast<Eigen::Index>(r)) -
                      samples[static_cast<size_t>(i)].pose.row(static_cast<Eigen::Index>(r)))
                         .norm();
                ++c;
            }
        err[static_cast<size_t>(i)] = c ? s / c : 0.0;
    } catch (...) {
        errors[static_cast<size_t>(i)] = std::current_exception();
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return samples.empty() ? 0.0 : std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
}

MeanPoseCompleter::MeanPoseCompleter(const std::vector<CompletionSample>& train)
{
    if (train.empty())
        throw ValidationError("mean pose: empty training set");
    mean_ = Coords3::Zero(train.front().pose.rows(), 3);
    for (const auto& s : train) {
        Coords3 c = s.pose;
        c.rowwise() -= s.pose.colwise().mean();
        mean_ += c;
    }
    mean_ /= static_cast<double>(train.size());
}

Coords3 MeanPoseCompleter::complete(const Coords3& pose, const MaskPattern& mask) const
{
    // Align the mean template to the input by the centroid of the known rows.
    Eigen::RowVector3d ci = Eigen::RowVector3d::Zero(), cm = Eigen::RowVector3d::Zero();
    int known = 0;
    for (Eigen::Index r = 0; r < pose.rows(); ++r)
        if (!mask[static_cast<size_t>(r)]) {
            ci += pose.row(r);
            cm += mean_.row(r);
            ++known;
        }
    if (known == 0)
        throw ValidationError("mean pose: every keypoint is masked");
    ci /= known;
    cm /= known;
    Coords3 out = pose;
    for (Eigen::Index r = 0; r < pose.rows(); ++r)
        if (mask[static_cast<size_t>(r)])
            out.row(r) = mean_.row(r) - cm + ci;
    return out;
}

double MeanPoseCompleter::masked_mpjpe(const std::vector<CompletionSample>& samples,
                                       const std::vector<MaskPattern>& masks) const
{
    double total = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const Coords3 out = complete(samples[i].pose, masks[i]);
        double s = 0.0;
        int c = 0;
        for (size_t r = 0; r < masks[i].size(); ++r)
            if (masks[i][r]) {
                s += (out.row(static_cast<Eigen::Index>(r)) - samples[i].pose.row(static_cast<Eigen::Index>(r))).norm();
                ++c;
            }
        total += c ? s / c : 0.0;
    }
    return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

CompletionHistory train_completion(CompletionNet& net, const std::vector<CompletionSample>& train,
                                   const std::vector<CompletionSample>& val, const Rig* rig,
                                   const CompletionLossConfig& loss_cfg, const CompletionTrainConfig& cfg,
                                   const KeypointLayout& layout)
{
    if (train.empty())
        throw ValidationError("completion training: empty training set");
    if (cfg.epochs <= 0 || cfg.batch <= 0)
        throw ValidationError("completion training: epochs and batch must be positive");
    for (const auto* set : {&train, &val})
        for (const auto& s : *set)
            if (s.pose.rows() != net.config().keypoints || !s.pose.allFinite())
                throw ValidationError("completion training: every pose needs finite coordinates for all keypoints");
    const auto t0 = std::chrono::steady_clock::now();
    nn::Rng rng(cfg.seed);

    std::vector<MaskPattern> val_masks;
    {
        nn::Rng vrng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        for (size_t i = 0; i < val.size(); ++i)
            val_masks.push_back(draw_training_mask(layout, vrng).mask);
    }

    CompletionHistory h;
    h.initial_val_mpjpe = val.empty() ? 0.0 : masked_mpjpe(net, val, val_masks);
    h.best_val_mpjpe = h.initial_val_mpjpe;
    nn::Parameters best = net.parameters();

    nn::Adam adam(net.parameters());
    const int steps_per_epoch = static_cast<int>((train.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch));
    const int total_steps = steps_per_epoch * cfg.epochs;
    constexpr int kChunk = 4; // gradient summation order is fixed by chunk, not by thread
    int step = 0, since_best = 0;
    std::vector<nn::Gradients> cg(static_cast<size_t>((cfg.batch + kChunk - 1) / kChunk), net.parameters().zeros());
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            const size_t lo = static_cast<size_t>(s) * static_cast<size_t>(cfg.batch);
            const size_t hi = std::min(train.size(), lo + static_cast<size_t>(cfg.batch));
            const int m = static_cast<int>(hi - lo);
            std::vector<MaskPattern> masks;
            for (int i = 0; i < m; ++i)
                masks.push_back(draw_training_mask(layout, rng).mask);

            const int chunks = (m + kChunk - 1) / kChunk;
            std::vector<double> closs(static_cast<size_t>(chunks), 0.0);
            std::vector<std::exception_ptr> errors(static_cast<size_t>(chunks));
#pragma omp parallel for schedule(dynamic)
            for (int c = 0; c < chunks; ++c) try {
                nn::Gradients& g = cg[static_cast<size_t>(c)];
                g.set_zero();
                double lsum = 0.0;
                for (int i = c * kChunk; i < std::min(m, (c + 1) * kChunk); ++i) {
                    const auto& sample = train[order[lo + static_cast<size_t>(i)]];
                    CompletionNet::Tape tape;
                    const auto out = net.forward(sample.pose, masks[static_cast<size_t>(i)], tape);
                    std::optional<CompletionViews> views;
                    if (rig && !sample.views.empty())
                        views = CompletionViews{rig, sample.views};
                    std::vector<Coords3> d;
                    const auto L = completion_loss(out, sample.pose, views, masks[static_cast<size_t>(i)], loss_cfg,
                                                   net.config(), layout, &d);
                    lsum += L.total;
                    net.backward(tape, d, g);
                }
                closs[static_cast<size_t>(c)] = lsum;
            } catch (...) {
                errors[static_cast<size_t>(c)] = std::current_exception();
            }
            for (auto& e : errors)
                if (e)
                    std::rethrow_exception(e);
            nn::Gradients& g = cg[0];
            double loss = closs[0];
            for (int c = 1; c < chunks; ++c) {
                g += cg[static_cast<size_t>(c)];
                loss += closs[static_cast<size_t>(c)];
            }
            loss /= m;
            if (!std::isfinite(loss) || !g.all_finite())
                throw DivergenceError("completion training diverged at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step) + " (loss " + std::to_string(loss) + ")");
            g *= 1.0 / m;
            nn::clip_grad_norm(g, cfg.clip_norm);
            double lr = nn::cosine_lr(cfg.lr, step, total_steps, cfg.lr_floor);
            if (step < cfg.warmup_steps)
                lr *= static_cast<double>(step + 1) / cfg.warmup_steps;
            adam.step(net.parameters(), g, lr);
            epoch_loss += loss * m;
            ++step;
        }
        h.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
        const double v = val.empty() ? h.train_loss.back() : masked_mpjpe(net, val, val_masks);
        h.val_mpjpe.push_back(v);
        if (val.empty())
            spdlog::info("completion epoch {}: loss {:.3f}", epoch, h.train_loss.back());
        else
            spdlog::info("completion epoch {}: loss {:.3f}, val masked MPJPE {:.2f} mm", epoch, h.train_loss.back(), v);
        if (h.best_epoch < 0 || v < h.best_val_mpjpe) {
            h.best_val_mpjpe = v;
            h.best_epoch = epoch;
            best = net.parameters();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            h.stopped_early = true;
            break;
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (cfg.max_seconds > 0.0 && elapsed > cfg.max_seconds) {
            h.stopped_early = true;
            break;
        }
    }
    net.parameters() = best;
    net.mark_trained();
    return h;
}

Pose3D complete(const CompletionNet& net, const Pose3D& pose, std::span<const KeypointStatus> statuses)
{
    if (!net.trained())
        throw Error("completion: the network has not been trained or loaded");
    if (static_cast<int>(statuses.size()) != pose.size())
        throw ValidationError("completion: one status per keypoint required");
    MaskPattern mask(statuses.size(), 0);
    bool any = false;
    for (size_t r = 0; r < statuses.size(); ++r)
        if (statuses[r] != KeypointStatus::triangulated)
            mask[r] = 1, any = true;
    if (!any)
        return pose;
    Pose3D out = pose;
    out.coords = net.forward(pose.coords, mask).completed;
    return out;
}

} // namespace wbforge
