#pragma once

#include "mit/conv.hpp"
#include "mit/rng.hpp"
#include "mit/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mit {

/// Parameter tensor plus its gradient accumulator; optimizers and the
/// gradient checker iterate over these.
template <typename T>
struct ParamRef {
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
void zero_params(std::vector<ParamRef<T>>& params) {
    for (auto& p : params) p.grad->zero();
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
public:
    Conv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride,
           std::int64_t pad)
        : stride_(stride), pad_(pad), w_({out_ch, in_ch, k, k}), b_({out_ch}),
          gw_({out_ch, in_ch, k, k}), gb_({out_ch}) {}

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(w_.dim(1) * w_.dim(2) * w_.dim(3)));
        for (std::size_t i = 0; i < w_.numel(); ++i) w_[i] = static_cast<T>(std * rng.normal());
        b_.zero();
    }

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y = conv2d_forward(x, w_, stride_, pad_);
        const std::int64_t P = y.dim(2) * y.dim(3);
        for (std::int64_t n = 0; n < y.dim(0); ++n)
            for (std::int64_t c = 0; c < y.dim(1); ++c) {
                T* p = y.data() + (n * y.dim(1) + c) * P;
                for (std::int64_t i = 0; i < P; ++i) p[i] += b_[c];
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::int64_t P = dy.dim(2) * dy.dim(3);
        for (std::int64_t n = 0; n < dy.dim(0); ++n)
            for (std::int64_t c = 0; c < dy.dim(1); ++c) {
                const T* p = dy.data() + (n * dy.dim(1) + c) * P;
                T s = T(0);
                for (std::int64_t i = 0; i < P; ++i) s += p[i];
                gb_[c] += s;
            }
        conv2d_backward_weights(dy, x_, stride_, pad_, gw_);
        return conv2d_backward_data(dy, w_, stride_, pad_, x_.dim(2), x_.dim(3));
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }

    Tensor<T>& weight() { return w_; }
    Tensor<T>& bias() { return b_; }

private:
    std::int64_t stride_, pad_;
    Tensor<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Transpose convolution (stride-2 upsampling); weight is (in_ch, out_ch, k, k)
// ---------------------------------------------------------------------------

template <typename T>
class TConv2d {
public:
    TConv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride,
            std::int64_t pad)
        : stride_(stride), pad_(pad), w_({in_ch, out_ch, k, k}), b_({out_ch}),
          gw_({in_ch, out_ch, k, k}), gb_({out_ch}) {}

    void init(Rng& rng, double gain = 2.0) {
        const double std = std::sqrt(gain / static_cast<double>(w_.dim(0) * w_.dim(2) * w_.dim(3)));
        for (std::size_t i = 0; i < w_.numel(); ++i) w_[i] = static_cast<T>(std * rng.normal());
        b_.zero();
    }

    std::int64_t out_size(std::int64_t in) const {
        return stride_ * (in - 1) + w_.dim(2) - 2 * pad_;
    }

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y = conv2d_backward_data(x, w_, stride_, pad_, out_size(x.dim(2)),
                                           out_size(x.dim(3)));
        const std::int64_t P = y.dim(2) * y.dim(3);
        for (std::int64_t n = 0; n < y.dim(0); ++n)
            for (std::int64_t c = 0; c < y.dim(1); ++c) {
                T* p = y.data() + (n * y.dim(1) + c) * P;
                for (std::int64_t i = 0; i < P; ++i) p[i] += b_[c];
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::int64_t P = dy.dim(2) * dy.dim(3);
        for (std::int64_t n = 0; n < dy.dim(0); ++n)
            for (std::int64_t c = 0; c < dy.dim(1); ++c) {
                const T* p = dy.data() + (n * dy.dim(1) + c) * P;
                T s = T(0);
                for (std::int64_t i = 0; i < P; ++i) s += p[i];
                gb_[c] += s;
            }
        // roles swap relative to a forward conv
        conv2d_backward_weights(x_, dy, stride_, pad_, gw_);
        return conv2d_forward(dy, w_, stride_, pad_);
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }

private:
    std::int64_t stride_, pad_;
    Tensor<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// BatchNorm over channels of (N, C, H, W); (N, C) is treated as H = W = 1
// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm {
public:
    explicit BatchNorm(std::int64_t channels, double momentum = 0.1, double eps = 1e-5)
        : momentum_(momentum), eps_(eps), gamma_({channels}), beta_({channels}),
          ggamma_({channels}), gbeta_({channels}), running_mean_({channels}),
          running_var_({channels}) {
        gamma_.fill(T(1));
        for (std::size_t i = 0; i < running_var_.numel(); ++i) running_var_[i] = T(1);
    }

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    Tensor<T> forward(const Tensor<T>& x) {
        const std::int64_t C = gamma_.dim(0);
        const std::int64_t N = x.dim(0);
        const std::int64_t spatial = x.ndim() == 4 ? x.dim(2) * x.dim(3) : 1;
        if (x.dim(1) != C) throw std::invalid_argument("batchnorm: channel mismatch");
        const std::int64_t m = N * spatial;

        Tensor<T> y(x.shape());
        xhat_ = Tensor<T>(x.shape());
        inv_std_ = Tensor<T>({C});
        count_ = m;

        for (std::int64_t c = 0; c < C; ++c) {
            T mean, var;
            if (training_) {
                T s = T(0);
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* p = x.data() + (n * C + c) * spatial;
                    for (std::int64_t i = 0; i < spatial; ++i) s += p[i];
                }
                mean = s / static_cast<T>(m);
                T v = T(0);
                for (std::int64_t n = 0; n < N; ++n) {
                    const T* p = x.data() + (n * C + c) * spatial;
                    for (std::int64_t i = 0; i < spatial; ++i) v += (p[i] - mean) * (p[i] - mean);
                }
                var = v / static_cast<T>(m);
                running_mean_[c] = static_cast<T>((1.0 - momentum_) * running_mean_[c] +
                                                  momentum_ * mean);
                running_var_[c] =
                    static_cast<T>((1.0 - momentum_) * running_var_[c] + momentum_ * var);
            } else {
                mean = running_mean_[c];
                var = running_var_[c];
            }
            const T istd = T(1) / std::sqrt(var + static_cast<T>(eps_));
            inv_std_[c] = istd;
            for (std::int64_t n = 0; n < N; ++n) {
                const T* p = x.data() + (n * C + c) * spatial;
                T* xh = xhat_.data() + (n * C + c) * spatial;
                T* out = y.data() + (n * C + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    xh[i] = (p[i] - mean) * istd;
                    out[i] = gamma_[c] * xh[i] + beta_[c];
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        if (!training_) throw std::logic_error("batchnorm: backward in eval mode");
        const std::int64_t C = gamma_.dim(0);
        const std::int64_t N = dy.dim(0);
        const std::int64_t spatial = dy.ndim() == 4 ? dy.dim(2) * dy.dim(3) : 1;
        const T m = static_cast<T>(count_);

        Tensor<T> dx(dy.shape());
        for (std::int64_t c = 0; c < C; ++c) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (std::int64_t n = 0; n < N; ++n) {
                const T* d = dy.data() + (n * C + c) * spatial;
                const T* xh = xhat_.data() + (n * C + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    sum_dy += d[i];
                    sum_dy_xhat += d[i] * xh[i];
                }
            }
            ggamma_[c] += sum_dy_xhat;
            gbeta_[c] += sum_dy;
            const T scale = gamma_[c] * inv_std_[c];
            for (std::int64_t n = 0; n < N; ++n) {
                const T* d = dy.data() + (n * C + c) * spatial;
                const T* xh = xhat_.data() + (n * C + c) * spatial;
                T* out = dx.data() + (n * C + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i)
                    out[i] = scale * (d[i] - sum_dy / m - xh[i] * sum_dy_xhat / m);
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&gamma_, &ggamma_});
        out.push_back({&beta_, &gbeta_});
    }

    Tensor<T>& running_mean() { return running_mean_; }
    Tensor<T>& running_var() { return running_var_; }

private:
    double momentum_, eps_;
    bool training_ = true;
    Tensor<T> gamma_, beta_, ggamma_, gbeta_;
    Tensor<T> running_mean_, running_var_;
    Tensor<T> xhat_, inv_std_;
    std::int64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
class Relu {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
        return dx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
class LeakyRelu {
public:
    explicit LeakyRelu(double slope = 0.2) : slope_(static_cast<T>(slope)) {}
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : slope_ * dy[i];
        return dx;
    }

private:
    T slope_;
    Tensor<T> x_;
};

template <typename T>
class Sigmoid {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = Tensor<T>(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i)
            y_[i] = T(1) / (T(1) + std::exp(-x[i]));
        return y_;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
        return dx;
    }

private:
    Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling (stride 2)
// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2d {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        if (H % 2 || W % 2) throw std::invalid_argument("maxpool: odd spatial size");
        in_shape_ = x.shape();
        Tensor<T> y({N, C, H / 2, W / 2});
        arg_.assign(y.numel(), 0);
        std::size_t o = 0;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* plane = x.data() + nc * H * W;
            for (std::int64_t oy = 0; oy < H / 2; ++oy) {
                for (std::int64_t ox = 0; ox < W / 2; ++ox, ++o) {
                    const std::int64_t base = (2 * oy) * W + 2 * ox;
                    std::int64_t best = base;
                    T bv = plane[base];
                    for (const std::int64_t off : {base + 1, base + W, base + W + 1}) {
                        if (plane[off] > bv) {
                            bv = plane[off];
                            best = off;
                        }
                    }
                    y[o] = bv;
                    arg_[o] = nc * H * W + best;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(in_shape_);
        for (std::size_t o = 0; o < dy.numel(); ++o) dx[arg_[o]] += dy[o];
        return dx;
    }

private:
    std::vector<std::int64_t> in_shape_;
    std::vector<std::size_t> arg_;
};

// ---------------------------------------------------------------------------
// Dense (x: (N, in) -> (N, out))
// ---------------------------------------------------------------------------

template <typename T>
class Dense {
public:
    Dense(std::int64_t in, std::int64_t out)
        : w_({out, in}), b_({out}), gw_({out, in}), gb_({out}) {}

    void init(Rng& rng, double gain = 2.0) {
        const double std = std::sqrt(gain / static_cast<double>(w_.dim(1)));
        for (std::size_t i = 0; i < w_.numel(); ++i) w_[i] = static_cast<T>(std * rng.normal());
        b_.zero();
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.dim(1) != w_.dim(1)) throw std::invalid_argument("dense: shape mismatch");
        x_ = x;
        const std::int64_t N = x.dim(0), out = w_.dim(0);
        Tensor<T> y({N, out});
        gemm_nt(N, out, w_.dim(1), x.data(), w_.data(), y.data(), false);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t j = 0; j < out; ++j) y.at2(n, j) += b_[j];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::int64_t N = dy.dim(0), out = w_.dim(0), in = w_.dim(1);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t j = 0; j < out; ++j) gb_[j] += dy.at2(n, j);
        gemm_tn(out, in, N, dy.data(), x_.data(), gw_.data(), true);
        Tensor<T> dx({N, in});
        gemm_nn(N, in, out, dy.data(), w_.data(), dx.data(), false);
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }

    Tensor<T>& weight() { return w_; }
    Tensor<T>& bias() { return b_; }

private:
    Tensor<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

/// Channel concatenation of two (N, C, H, W) tensors.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat: shape mismatch");
    const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    const std::int64_t P = a.dim(2) * a.dim(3);
    Tensor<T> y({N, Ca + Cb, a.dim(2), a.dim(3)});
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * P, a.data() + (n + 1) * Ca * P,
                  y.data() + n * (Ca + Cb) * P);
        std::copy(b.data() + n * Cb * P, b.data() + (n + 1) * Cb * P,
                  y.data() + (n * (Ca + Cb) + Ca) * P);
    }
    return y;
}

/// Splits the gradient of concat_channels back into the two parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& dy, std::int64_t Ca) {
    const std::int64_t N = dy.dim(0), C = dy.dim(1), Cb = C - Ca;
    const std::int64_t P = dy.dim(2) * dy.dim(3);
    Tensor<T> da({N, Ca, dy.dim(2), dy.dim(3)});
    Tensor<T> db({N, Cb, dy.dim(2), dy.dim(3)});
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(dy.data() + n * C * P, dy.data() + n * C * P + Ca * P,
                  da.data() + n * Ca * P);
        std::copy(dy.data() + n * C * P + Ca * P, dy.data() + (n + 1) * C * P,
                  db.data() + n * Cb * P);
    }
    return {std::move(da), std::move(db)};
}

}  // namespace mit
