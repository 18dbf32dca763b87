#include <doctest.h>

#include <filesystem>
#include <functional>

#include "wbforge/nn/layers.hpp"
#include "wbforge/nn/optim.hpp"

using namespace wbforge::nn;

namespace {

// Compares analytic gradients of L = sum(f(x) .* R) with central differences
// for the input and every trainable parameter.
void check_gradients(Parameters& p, Mat x, const std::function<Mat(Parameters&, const Mat&)>& f,
                     const std::function<Mat(Parameters&, const Mat&, Gradients&)>& backward, Rng& rng,
                     double tol = 1e-6)
{
    const Mat y = f(p, x);
    const Mat R = uniform(static_cast<int>(y.rows()), static_cast<int>(y.cols()), 1.0, rng);
    Gradients g = p.zeros();
    const Mat dx = backward(p, R, g);

    auto loss = [&](Parameters& pp, const Mat& xx) { return (f(pp, xx).array() * R.array()).sum(); };
    const double h = 1e-6;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-3, std::abs(a) + std::abs(b)); };

    for (Eigen::Index i = 0; i < x.size(); i += std::max<Eigen::Index>(1, x.size() / 17)) {
        Mat a = x, b = x;
        a.data()[i] += h;
        b.data()[i] -= h;
        const double fd = (loss(p, a) - loss(p, b)) / (2 * h);
        CHECK(rel(dx.data()[i], fd) < tol);
    }
    for (int id = 0; id < p.size(); ++id) {
        if (!p.trainable(id))
            continue;
        for (Eigen::Index i = 0; i < p[id].size(); i += std::max<Eigen::Index>(1, p[id].size() / 7)) {
            const double orig = p[id].data()[i];
            p[id].data()[i] = orig + h;
            const double lp = loss(p, x);
            p[id].data()[i] = orig - h;
            const double lm = loss(p, x);
            p[id].data()[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            INFO(p.name(id) << "[" << i << "]");
            CHECK(rel(g[id].data()[i], fd) < tol);
        }
    }
}

} // namespace

TEST_CASE("linear gradients")
{
    Rng rng(1);
    Parameters p;
    auto l = Linear::create(p, "l", 5, 4, rng);
    p[l.b] = uniform(1, 4, 0.5, rng);
    Mat x = uniform(3, 5, 1.0, rng);
    check_gradients(
        p, x, [&](Parameters& pp, const Mat& xx) { return l.forward(pp, xx); },
        [&](Parameters& pp, const Mat& R, Gradients& g) { return l.backward(pp, x, R, g); }, rng);
}

TEST_CASE("layer norm gradients")
{
    Rng rng(2);
    Parameters p;
    auto ln = LayerNorm::create(p, "ln", 6);
    p[ln.gamma] = uniform(1, 6, 1.0, rng).array() + 1.5;
    p[ln.beta] = uniform(1, 6, 1.0, rng);
    Mat x = uniform(4, 6, 2.0, rng);
    check_gradients(
        p, x,
        [&](Parameters& pp, const Mat& xx) {
            LayerNorm::Cache c;
            return ln.forward(pp, xx, c);
        },
        [&](Parameters& pp, const Mat& R, Gradients& g) {
            LayerNorm::Cache c;
            ln.forward(pp, x, c);
            return ln.backward(pp, c, R, g);
        },
        rng);
}

TEST_CASE("batch norm gradients in training mode")
{
    Rng rng(3);
    Parameters p;
    auto bn = BatchNorm::create(p, "bn", 3);
    p[bn.gamma] = uniform(1, 3, 1.0, rng).array() + 1.5;
    Mat x = uniform(6, 3, 2.0, rng);
    check_gradients(
        p, x,
        [&](Parameters& pp, const Mat& xx) {
            BatchNorm::Cache c;
            Parameters copy = pp; // keep running statistics out of the check
            return bn.forward_train(copy, xx, c);
        },
        [&](Parameters& pp, const Mat& R, Gradients& g) {
            BatchNorm::Cache c;
            Parameters copy = pp;
            bn.forward_train(copy, x, c);
            return bn.backward(pp, c, R, g);
        },
        rng);
}

TEST_CASE("batch norm running statistics")
{
    Rng rng(4);
    Parameters p;
    auto bn = BatchNorm::create(p, "bn", 2);
    Mat x(4, 2);
    x << 1, 10, 2, 20, 3, 30, 4, 40;
    BatchNorm::Cache c;
    bn.forward_train(p, x, c);
    CHECK(p[bn.running_mean](0, 0) == doctest::Approx(0.1 * 2.5));
    CHECK(p[bn.running_var](0, 0) == doctest::Approx(0.9 + 0.1 * (1.25 * 4.0 / 3.0)));
    const Mat y = bn.forward_eval(p, x);
    CHECK(y.allFinite());
}

TEST_CASE("attention and encoder layer gradients")
{
    Rng rng(5);
    for (int variant = 0; variant < 3; ++variant) {
        const int heads = variant == 1 ? 2 : 1;
        Parameters p;
        auto enc = EncoderLayer::create(p, "enc", 8, heads, 12, rng, variant == 2);
        for (int id = 0; id < p.size(); ++id)
            if (p.name(id).find(".b") != std::string::npos)
                p[id] = uniform(static_cast<int>(p[id].rows()), static_cast<int>(p[id].cols()), 0.3, rng);
        Mat x = uniform(5, 8, 1.0, rng);
        check_gradients(
            p, x,
            [&](Parameters& pp, const Mat& xx) {
                EncoderLayer::Cache c;
                return enc.forward(pp, xx, c);
            },
            [&](Parameters& pp, const Mat& R, Gradients& g) {
                EncoderLayer::Cache c;
                enc.forward(pp, x, c);
                return enc.backward(pp, c, R, g);
            },
            rng, 1e-5);
    }
}

TEST_CASE("convolution gradients")
{
    Rng rng(6);
    Parameters p;
    auto conv = Conv2d::create(p, "conv", 2, 3, 3, 2, 1, 7, 6, rng);
    CHECK(conv.out_h() == 4);
    CHECK(conv.out_w() == 3);
    Mat x = uniform(2, 42, 1.0, rng);
    check_gradients(
        p, x,
        [&](Parameters& pp, const Mat& xx) {
            Mat cols;
            return conv.forward(pp, xx, cols);
        },
        [&](Parameters& pp, const Mat& R, Gradients& g) {
            Mat cols;
            conv.forward(pp, x, cols);
            return conv.backward(pp, cols, R, g);
        },
        rng);
}

TEST_CASE("activations")
{
    Mat x(1, 4);
    x << -2, -0.5, 0.5, 3;
    CHECK(relu(x)(0, 0) == 0.0);
    CHECK(relu(x)(0, 3) == 3.0);
    CHECK(leaky_relu(x)(0, 0) == doctest::Approx(-0.02));
    Mat dy = Mat::Ones(1, 4);
    CHECK(relu_backward(x, dy).sum() == 2.0);
    CHECK(leaky_relu_backward(x, dy).sum() == doctest::Approx(2.02));
    Rng rng(1);
    const Mat m = dropout_mask(100, 100, 0.5, rng);
    CHECK(m.mean() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("adam minimises a quadratic")
{
    Parameters p;
    const int id = p.add("x", Mat::Constant(1, 3, 5.0));
    Adam opt(p);
    for (int i = 0; i < 2000; ++i) {
        Gradients g = p.zeros();
        g[id] = 2.0 * (p[id].array() - 1.0).matrix();
        opt.step(p, g, cosine_lr(0.05, i, 2000, 1e-4));
    }
    CHECK((p[id].array() - 1.0).abs().maxCoeff() < 1e-3);
    CHECK(cosine_lr(1.0, 0, 10) == doctest::Approx(1.0));
    CHECK(cosine_lr(1.0, 10, 10) == doctest::Approx(0.0));
    CHECK(cosine_lr(1.0, 5, 10) == doctest::Approx(0.5));
}

TEST_CASE("checkpoints reload bit-identically")
{
    Rng rng(7);
    Parameters p;
    auto l = Linear::create(p, "l", 4, 3, rng);
    auto bn = BatchNorm::create(p, "bn", 3);
    p[bn.running_mean] = uniform(1, 3, 1.0, rng);
    const auto path = std::filesystem::temp_directory_path() / "wbforge_nn_ckpt.cbor";
    save_checkpoint(path, {{"kind", "test"}}, p);

    Rng other(99);
    Parameters q;
    Linear::create(q, "l", 4, 3, other);
    BatchNorm::create(q, "bn", 3);
    const auto header = load_checkpoint(path, q);
    CHECK(header.at("kind") == "test");
    for (int i = 0; i < p.size(); ++i)
        CHECK(p[i] == q[i]);
    const Mat x = uniform(2, 4, 1.0, rng);
    CHECK(l.forward(p, x) == l.forward(q, x));

    Parameters wrong;
    Linear::create(wrong, "l", 4, 2, other);
    BatchNorm::create(wrong, "bn", 3);
    CHECK_THROWS(load_checkpoint(path, wrong));
}
