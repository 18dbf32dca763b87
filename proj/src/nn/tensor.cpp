#include "wbforge/nn/tensor.hpp"

#include <cmath>

#include "wbforge/errors.hpp"

namespace wbforge::nn {

int Parameters::add(std::string name, Mat init, bool trainable)
{
    if (find(name))
        throw ValidationError("duplicate parameter name " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    trainable_.push_back(trainable);
    return size() - 1;
}

std::optional<int> Parameters::find(const std::string& name) const
{
    for (int i = 0; i < size(); ++i)
        if (names_[static_cast<size_t>(i)] == name)
            return i;
    return std::nullopt;
}

long long Parameters::count() const
{
    long long n = 0;
    for (int i = 0; i < size(); ++i)
        if (trainable(i))
            n += values_[static_cast<size_t>(i)].size();
    return n;
}

Gradients Parameters::zeros() const
{
    std::vector<Mat> g;
    g.reserve(values_.size());
    for (const auto& v : values_)
        g.push_back(Mat::Zero(v.rows(), v.cols()));
    return Gradients(std::move(g));
}

nlohmann::json Parameters::to_json() const
{
    auto arr = nlohmann::json::array();
    for (int i = 0; i < size(); ++i) {
        const Mat& m = values_[static_cast<size_t>(i)];
        std::vector<double> data(m.data(), m.data() + m.size());
        arr.push_back({{"name", names_[static_cast<size_t>(i)]}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", data}});
    }
    return arr;
}

void Parameters::load_json(const nlohmann::json& j)
{
    if (!j.is_array() || static_cast<int>(j.size()) != size())
        throw SchemaError("checkpoint parameter count does not match the model");
    for (int i = 0; i < size(); ++i) {
        const auto& e = j[static_cast<size_t>(i)];
        Mat& m = values_[static_cast<size_t>(i)];
        if (e.at("name").get<std::string>() != names_[static_cast<size_t>(i)] || e.at("rows").get<long>() != m.rows() ||
            e.at("cols").get<long>() != m.cols())
            throw SchemaError("checkpoint parameter " + e.at("name").get<std::string>() +
                              " does not match the model layout");
        const auto data = e.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != m.size())
            throw SchemaError("checkpoint parameter " + names_[static_cast<size_t>(i)] + " has the wrong size");
        std::copy(data.begin(), data.end(), m.data());
    }
}

void Gradients::set_zero()
{
    for (auto& m : g_)
        m.setZero();
}

Gradients& Gradients::operator+=(const Gradients& other)
{
    for (size_t i = 0; i < g_.size(); ++i)
        g_[i] += other.g_[i];
    return *this;
}

Gradients& Gradients::operator*=(double s)
{
    for (auto& m : g_)
        m *= s;
    return *this;
}

double Gradients::norm() const
{
    double s = 0.0;
    for (const auto& m : g_)
        s += m.squaredNorm();
    return std::sqrt(s);
}

bool Gradients::all_finite() const
{
    for (const auto& m : g_)
        if (!m.allFinite())
            return false;
    return true;
}

Mat uniform(int rows, int cols, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> d(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = d(rng);
    return m;
}

} // namespace wbforge::nn
