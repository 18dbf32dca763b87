#include "wbforge/nn/layers.hpp"

#include <cmath>

#include "wbforge/errors.hpp"

namespace wbforge::nn {

Linear Linear::create(Parameters& p, const std::string& name, int in, int out, Rng& rng, double gain)
{
    Linear l;
    l.in = in;
    l.out = out;
    const double bound = gain * std::sqrt(6.0 / (in + out));
    l.w = p.add(name + ".w", uniform(out, in, bound, rng));
    l.b = p.add(name + ".b", Mat::Zero(1, out));
    return l;
}

Mat Linear::forward(const Parameters& p, const Mat& x) const
{
    Mat y = x * p[w].transpose();
    y.rowwise() += p[b].row(0);
    return y;
}

Mat Linear::backward(const Parameters& p, const Mat& x, const Mat& dy, Gradients& g) const
{
    g[w].noalias() += dy.transpose() * x;
    g[b] += dy.colwise().sum();
    return dy * p[w];
}

LayerNorm LayerNorm::create(Parameters& p, const std::string& name, int dim)
{
    LayerNorm l;
    l.dim = dim;
    l.gamma = p.add(name + ".gamma", Mat::Ones(1, dim));
    l.beta = p.add(name + ".beta", Mat::Zero(1, dim));
    return l;
}

Mat LayerNorm::forward(const Parameters& p, const Mat& x, Cache& cache) const
{
    const Vec mu = x.rowwise().mean();
    Mat centered = x.colwise() - mu;
    const Vec var = centered.array().square().rowwise().mean();
    cache.inv_std = (var.array() + eps).rsqrt();
    cache.xhat = centered.array().colwise() * cache.inv_std.array();
    Mat y = cache.xhat.array().rowwise() * p[gamma].row(0).array();
    y.rowwise() += p[beta].row(0);
    return y;
}

Mat LayerNorm::backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const
{
    g[gamma] += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    g[beta] += dy.colwise().sum();
    const Mat dxhat = dy.array().rowwise() * p[gamma].row(0).array();
    const Vec s1 = dxhat.rowwise().sum();
    const Vec s2 = (dxhat.array() * cache.xhat.array()).rowwise().sum();
    const double d = static_cast<double>(dim);
    Mat dx = (d * dxhat.array()).colwise() - s1.array();
    dx -= (cache.xhat.array().colwise() * s2.array()).matrix();
    dx = dx.array().colwise() * (cache.inv_std.array() / d);
    return dx;
}

BatchNorm BatchNorm::create(Parameters& p, const std::string& name, int dim)
{
    BatchNorm l;
    l.dim = dim;
    l.gamma = p.add(name + ".gamma", Mat::Ones(1, dim));
    l.beta = p.add(name + ".beta", Mat::Zero(1, dim));
    l.running_mean = p.add(name + ".running_mean", Mat::Zero(1, dim), false);
    l.running_var = p.add(name + ".running_var", Mat::Ones(1, dim), false);
    return l;
}

Mat BatchNorm::forward_train(Parameters& p, const Mat& x, Cache& cache) const
{
    if (x.rows() < 2)
        throw ValidationError("batch normalisation needs at least two rows in training mode");
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Mat centered = x.rowwise() - mu;
    const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
    cache.inv_std = (var.array() + eps).rsqrt();
    cache.xhat = centered.array().rowwise() * cache.inv_std.array();
    cache.training = true;
    const double n = static_cast<double>(x.rows());
    p[running_mean] = (1.0 - momentum) * p[running_mean] + momentum * mu;
    p[running_var] = (1.0 - momentum) * p[running_var] + momentum * var * (n / (n - 1.0));
    Mat y = cache.xhat.array().rowwise() * p[gamma].row(0).array();
    y.rowwise() += p[beta].row(0);
    return y;
}

Mat BatchNorm::forward_eval(const Parameters& p, const Mat& x, Cache* cache) const
{
    const Eigen::RowVectorXd inv_std = (p[running_var].row(0).array() + eps).rsqrt();
    Mat xhat = (x.rowwise() - p[running_mean].row(0)).array().rowwise() * inv_std.array();
    Mat y = xhat.array().rowwise() * p[gamma].row(0).array();
    y.rowwise() += p[beta].row(0);
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = inv_std;
        cache->training = false;
    }
    return y;
}

Mat BatchNorm::backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const
{
    g[gamma] += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    g[beta] += dy.colwise().sum();
    const Mat dxhat = dy.array().rowwise() * p[gamma].row(0).array();
    if (!cache.training)
        return dxhat.array().rowwise() * cache.inv_std.array();
    const double n = static_cast<double>(dy.rows());
    const Eigen::RowVectorXd s1 = dxhat.colwise().sum();
    const Eigen::RowVectorXd s2 = (dxhat.array() * cache.xhat.array()).colwise().sum();
    Mat dx = (n * dxhat.array()).rowwise() - s1.array();
    dx -= (cache.xhat.array().rowwise() * s2.array()).matrix();
    return dx.array().rowwise() * (cache.inv_std.array() / n);
}

Mat relu(const Mat& x)
{
    return x.cwiseMax(0.0);
}

Mat relu_backward(const Mat& x, const Mat& dy)
{
    return (x.array() > 0.0).select(dy, 0.0);
}

Mat leaky_relu(const Mat& x, double slope)
{
    return (x.array() > 0.0).select(x, slope * x);
}

Mat leaky_relu_backward(const Mat& x, const Mat& dy, double slope)
{
    return (x.array() > 0.0).select(dy, slope * dy);
}

Mat dropout_mask(int rows, int cols, double p, Rng& rng)
{
    if (p <= 0.0)
        return Mat::Ones(rows, cols);
    std::bernoulli_distribution keep(1.0 - p);
    Mat m(rows, cols);
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        m.data()[i] = keep(rng) ? scale : 0.0;
    return m;
}

SelfAttention SelfAttention::create(Parameters& p, const std::string& name, int dim, int heads, Rng& rng)
{
    if (heads < 1 || dim % heads != 0)
        throw ValidationError("attention heads must divide the model width");
    SelfAttention a;
    a.dim = dim;
    a.heads = heads;
    a.q = Linear::create(p, name + ".q", dim, dim, rng);
    a.k = Linear::create(p, name + ".k", dim, dim, rng);
    a.v = Linear::create(p, name + ".v", dim, dim, rng);
    a.o = Linear::create(p, name + ".o", dim, dim, rng);
    return a;
}

Mat SelfAttention::forward(const Parameters& p, const Mat& x, Cache& c) const
{
    c.x = x;
    c.Q = q.forward(p, x);
    c.K = k.forward(p, x);
    c.V = v.forward(p, x);
    const int dh = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    c.concat.resize(x.rows(), dim);
    c.attn.resize(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Mat s = scale * (c.Q.middleCols(h * dh, dh) * c.K.middleCols(h * dh, dh).transpose());
        const Vec mx = s.rowwise().maxCoeff();
        s = (s.colwise() - mx).array().exp();
        const Vec sum = s.rowwise().sum();
        s = s.array().colwise() / sum.array();
        c.concat.middleCols(h * dh, dh).noalias() = s * c.V.middleCols(h * dh, dh);
        c.attn[static_cast<size_t>(h)] = std::move(s);
    }
    return o.forward(p, c.concat);
}

Mat SelfAttention::backward(const Parameters& p, const Cache& c, const Mat& dy, Gradients& g) const
{
    const Mat dconcat = o.backward(p, c.concat, dy, g);
    const int dh = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat dQ(c.Q.rows(), dim), dK(c.K.rows(), dim), dV(c.V.rows(), dim);
    for (int h = 0; h < heads; ++h) {
        const Mat& A = c.attn[static_cast<size_t>(h)];
        const auto dO = dconcat.middleCols(h * dh, dh);
        const Mat dA = dO * c.V.middleCols(h * dh, dh).transpose();
        dV.middleCols(h * dh, dh).noalias() = A.transpose() * dO;
        const Vec rs = (dA.array() * A.array()).rowwise().sum();
        const Mat dS = scale * (A.array() * (dA.colwise() - rs).array()).matrix();
        dQ.middleCols(h * dh, dh).noalias() = dS * c.K.middleCols(h * dh, dh);
        dK.middleCols(h * dh, dh).noalias() = dS.transpose() * c.Q.middleCols(h * dh, dh);
    }
    Mat dx = q.backward(p, c.x, dQ, g);
    dx += k.backward(p, c.x, dK, g);
    dx += v.backward(p, c.x, dV, g);
    return dx;
}

EncoderLayer EncoderLayer::create(Parameters& p, const std::string& name, int dim, int heads, int ff_dim, Rng& rng,
                                  bool pre_norm)
{
    EncoderLayer e;
    e.pre_norm = pre_norm;
    e.attn = SelfAttention::create(p, name + ".attn", dim, heads, rng);
    e.ln1 = LayerNorm::create(p, name + ".ln1", dim);
    e.ff1 = Linear::create(p, name + ".ff1", dim, ff_dim, rng);
    e.ff2 = Linear::create(p, name + ".ff2", ff_dim, dim, rng);
    e.ln2 = LayerNorm::create(p, name + ".ln2", dim);
    return e;
}

Mat EncoderLayer::forward(const Parameters& p, const Mat& x, Cache& c) const
{
    if (pre_norm) {
        c.h = x + attn.forward(p, ln1.forward(p, x, c.ln1), c.attn);
        c.ff_in = ln2.forward(p, c.h, c.ln2);
        c.ff_pre = ff1.forward(p, c.ff_in);
        return c.h + ff2.forward(p, relu(c.ff_pre));
    }
    c.h = ln1.forward(p, x + attn.forward(p, x, c.attn), c.ln1);
    c.ff_pre = ff1.forward(p, c.h);
    return ln2.forward(p, c.h + ff2.forward(p, relu(c.ff_pre)), c.ln2);
}

Mat EncoderLayer::backward(const Parameters& p, const Cache& c, const Mat& dy, Gradients& g) const
{
    if (pre_norm) {
        const Mat dff = ff2.backward(p, relu(c.ff_pre), dy, g);
        const Mat dh = dy + ln2.backward(p, c.ln2, ff1.backward(p, c.ff_in, relu_backward(c.ff_pre, dff), g), g);
        return dh + ln1.backward(p, c.ln1, attn.backward(p, c.attn, dh, g), g);
    }
    const Mat dz2 = ln2.backward(p, c.ln2, dy, g);
    const Mat dff = ff2.backward(p, relu(c.ff_pre), dz2, g);
    Mat dh = dz2 + ff1.backward(p, c.h, relu_backward(c.ff_pre, dff), g);
    const Mat dz1 = ln1.backward(p, c.ln1, dh, g);
    return dz1 + attn.backward(p, c.attn, dz1, g);
}

Conv2d Conv2d::create(Parameters& p, const std::string& name, int in_ch, int out_ch, int kernel, int stride, int pad,
                      int in_h, int in_w, Rng& rng)
{
    Conv2d c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel = kernel;
    c.stride = stride;
    c.pad = pad;
    c.in_h = in_h;
    c.in_w = in_w;
    if (c.out_h() <= 0 || c.out_w() <= 0)
        throw ValidationError("convolution output would be empty");
    const double fan_in = static_cast<double>(in_ch * kernel * kernel);
    c.w = p.add(name + ".w", uniform(out_ch, in_ch * kernel * kernel, std::sqrt(6.0 / fan_in), rng));
    c.b = p.add(name + ".b", Mat::Zero(out_ch, 1));
    return c;
}

Mat Conv2d::forward(const Parameters& p, const Mat& x, Mat& cols) const
{
    const int oh = out_h(), ow = out_w();
    cols.setZero(in_ch * kernel * kernel, oh * ow);
    for (int c = 0; c < in_ch; ++c)
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                const int row = (c * kernel + ky) * kernel + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= in_h)
                        continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < in_w)
                            cols(row, oy * ow + ox) = x(c, iy * in_w + ix);
                    }
                }
            }
    Mat y = p[w] * cols;
    y.colwise() += p[b].col(0);
    return y;
}

Mat Conv2d::backward(const Parameters& p, const Mat& cols, const Mat& dy, Gradients& g) const
{
    g[w].noalias() += dy * cols.transpose();
    g[b] += dy.rowwise().sum();
    const Mat dcols = p[w].transpose() * dy;
    const int oh = out_h(), ow = out_w();
    Mat dx = Mat::Zero(in_ch, in_h * in_w);
    for (int c = 0; c < in_ch; ++c)
        for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx) {
                const int row = (c * kernel + ky) * kernel + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= in_h)
                        continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < in_w)
                            dx(c, iy * in_w + ix) += dcols(row, oy * ow + ox);
                    }
                }
            }
    return dx;
}

} // namespace wbforge::nn
