#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace wbforge::nn {

// Activations are row-major in spirit: one row per sample (or token).
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

class Gradients;

// Named parameter tensors. Layers keep integer handles into this store so
// that forward/backward passes are const functions of the parameters and can
// run concurrently with per-thread gradient buffers.
class Parameters {
public:
    int add(std::string name, Mat init, bool trainable = true);

    Mat& operator[](int id) { return values_[static_cast<size_t>(id)]; }
    const Mat& operator[](int id) const { return values_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(values_.size()); }
    const std::string& name(int id) const { return names_[static_cast<size_t>(id)]; }
    bool trainable(int id) const { return trainable_[static_cast<size_t>(id)]; }
    std::optional<int> find(const std::string& name) const;
    long long count() const;

    Gradients zeros() const;

    nlohmann::json to_json() const;
    // Copies values from a document written by to_json; names and shapes must match.
    void load_json(const nlohmann::json& j);

private:
    std::vector<std::string> names_;
    std::vector<Mat> values_;
    std::vector<bool> trainable_;
};

class Gradients {
public:
    Gradients() = default;
    explicit Gradients(std::vector<Mat> g) : g_(std::move(g)) {}

    Mat& operator[](int id) { return g_[static_cast<size_t>(id)]; }
    const Mat& operator[](int id) const { return g_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(g_.size()); }

    void set_zero();
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    double norm() const;
    bool all_finite() const;

private:
    std::vector<Mat> g_;
};

Mat uniform(int rows, int cols, double bound, Rng& rng);

} // namespace wbforge::nn
