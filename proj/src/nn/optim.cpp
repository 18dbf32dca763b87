#include "wbforge/nn/optim.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"

namespace wbforge::nn {

Adam::Adam(const Parameters& p, double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps)
{
    for (int i = 0; i < p.size(); ++i) {
        m_.push_back(Mat::Zero(p[i].rows(), p[i].cols()));
        v_.push_back(Mat::Zero(p[i].rows(), p[i].cols()));
    }
}

void Adam::step(Parameters& p, const Gradients& g, double lr)
{
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (int i = 0; i < p.size(); ++i) {
        if (!p.trainable(i))
            continue;
        auto& m = m_[static_cast<size_t>(i)];
        auto& v = v_[static_cast<size_t>(i)];
        m = b1_ * m + (1.0 - b1_) * g[i];
        v = b2_ * v + (1.0 - b2_) * g[i].cwiseAbs2();
        p[i].array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
}

double cosine_lr(double base, int step, int total, double floor)
{
    if (total <= 0)
        return base;
    const double t = std::min(1.0, static_cast<double>(step) / total);
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

double clip_grad_norm(Gradients& g, double max_norm)
{
    const double n = g.norm();
    if (n > max_norm && n > 0.0)
        g *= max_norm / n;
    return n;
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const Parameters& p)
{
    const nlohmann::json doc{{"header", header}, {"params", p.to_json()}};
    const auto bytes = nlohmann::json::to_cbor(doc);
    write_text_atomic(path, std::string(bytes.begin(), bytes.end()));
}

namespace {

nlohmann::json read_cbor(const std::filesystem::path& path)
{
    const std::string raw = read_text(path);
    try {
        return nlohmann::json::from_cbor(std::vector<std::uint8_t>(raw.begin(), raw.end()));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("checkpoint " + path.string() + " is not valid CBOR: " + e.what());
    }
}

} // namespace

nlohmann::json load_checkpoint(const std::filesystem::path& path, Parameters& p)
{
    const auto doc = read_cbor(path);
    if (!doc.contains("header") || !doc.contains("params"))
        throw SchemaError("checkpoint " + path.string() + " lacks header or params");
    p.load_json(doc.at("params"));
    return doc.at("header");
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path)
{
    const auto doc = read_cbor(path);
    if (!doc.contains("header"))
        throw SchemaError("checkpoint " + path.string() + " lacks a header");
    return doc.at("header");
}

} // namespace wbforge::nn
