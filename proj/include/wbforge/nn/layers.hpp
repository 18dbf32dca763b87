#pragma once

#include <string>
#include <vector>

#include "wbforge/nn/tensor.hpp"

namespace wbforge::nn {

// y = x W^T + b, x: n x in.
struct Linear {
    int w = -1, b = -1;
    int in = 0, out = 0;

    static Linear create(Parameters& p, const std::string& name, int in, int out, Rng& rng, double gain = 1.0);
    Mat forward(const Parameters& p, const Mat& x) const;
    // Accumulates dW, db into g and returns dL/dx.
    Mat backward(const Parameters& p, const Mat& x, const Mat& dy, Gradients& g) const;
};

// Normalises each row to zero mean and unit variance, then scales and shifts.
struct LayerNorm {
    int gamma = -1, beta = -1;
    int dim = 0;
    double eps = 1e-5;

    struct Cache {
        Mat xhat;
        Vec inv_std;
    };

    static LayerNorm create(Parameters& p, const std::string& name, int dim);
    Mat forward(const Parameters& p, const Mat& x, Cache& cache) const;
    Mat backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const;
};

// Batch normalisation over the rows of a batch. Running statistics are
// non-trainable parameters updated in training mode.
struct BatchNorm {
    int gamma = -1, beta = -1, running_mean = -1, running_var = -1;
    int dim = 0;
    double eps = 1e-5;
    double momentum = 0.1;

    struct Cache {
        Mat xhat;
        Eigen::RowVectorXd inv_std;
        bool training = false;
    };

    static BatchNorm create(Parameters& p, const std::string& name, int dim);
    // Training mode normalises with batch statistics and updates the running ones.
    Mat forward_train(Parameters& p, const Mat& x, Cache& cache) const;
    Mat forward_eval(const Parameters& p, const Mat& x, Cache* cache = nullptr) const;
    Mat backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const;
};

Mat relu(const Mat& x);
Mat relu_backward(const Mat& x, const Mat& dy);
Mat leaky_relu(const Mat& x, double slope = 0.01);
Mat leaky_relu_backward(const Mat& x, const Mat& dy, double slope = 0.01);

// Inverted dropout. The returned mask already carries the 1/(1-p) scale.
Mat dropout_mask(int rows, int cols, double p, Rng& rng);

// Multi-head self-attention over the rows (tokens) of x.
struct SelfAttention {
    Linear q, k, v, o;
    int dim = 0, heads = 1;

    struct Cache {
        Mat x, Q, K, V, concat;
        std::vector<Mat> attn; // one tokens x tokens matrix per head
    };

    static SelfAttention create(Parameters& p, const std::string& name, int dim, int heads, Rng& rng);
    Mat forward(const Parameters& p, const Mat& x, Cache& cache) const;
    Mat backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const;
};

// Transformer encoder layer.
//   post-norm: h = LN1(x + Attn(x)),  y = LN2(h + W2 relu(W1 h))
//   pre-norm:  h = x + Attn(LN1(x)),  y = h + W2 relu(W1 LN2(h))
struct EncoderLayer {
    SelfAttention attn;
    LayerNorm ln1, ln2;
    Linear ff1, ff2;
    bool pre_norm = false;

    struct Cache {
        SelfAttention::Cache attn;
        LayerNorm::Cache ln1, ln2;
        Mat h, ff_in, ff_pre;
    };

    static EncoderLayer create(Parameters& p, const std::string& name, int dim, int heads, int ff_dim, Rng& rng,
                               bool pre_norm = false);
    Mat forward(const Parameters& p, const Mat& x, Cache& cache) const;
    Mat backward(const Parameters& p, const Cache& cache, const Mat& dy, Gradients& g) const;
};

// 2D convolution on one sample stored as channels x (height * width), row-major pixels.
struct Conv2d {
    int w = -1, b = -1;
    int in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 0;
    int in_h = 0, in_w = 0;

    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }

    static Conv2d create(Parameters& p, const std::string& name, int in_ch, int out_ch, int kernel, int stride,
                         int pad, int in_h, int in_w, Rng& rng);
    // x: in_ch x (in_h*in_w). cols receives the unfolded input for backward.
    Mat forward(const Parameters& p, const Mat& x, Mat& cols) const;
    Mat backward(const Parameters& p, const Mat& cols, const Mat& dy, Gradients& g) const;
};

} // namespace wbforge::nn
