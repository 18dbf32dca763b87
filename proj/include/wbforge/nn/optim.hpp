#pragma once

#include <filesystem>

#include <json.hpp>

#include "wbforge/nn/tensor.hpp"

namespace wbforge::nn {

class Adam {
public:
    explicit Adam(const Parameters& p, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // Skips non-trainable parameters.
    void step(Parameters& p, const Gradients& g, double lr);
    int steps() const { return t_; }

private:
    double b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Mat> m_, v_;
};

// Learning rate decaying from base to floor along a half cosine over total steps.
double cosine_lr(double base, int step, int total, double floor = 0.0);

// Scales g so that its global norm does not exceed max_norm. Returns the norm before clipping.
double clip_grad_norm(Gradients& g, double max_norm);

// CBOR document {"header": ..., "params": [...]} holding exact doubles.
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const Parameters& p);
// Returns the header; parameter values are loaded into p, whose layout must match.
nlohmann::json load_checkpoint(const std::filesystem::path& path, Parameters& p);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

} // namespace wbforge::nn
