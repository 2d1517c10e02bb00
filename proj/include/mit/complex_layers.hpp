#pragma once

#include "mit/conv.hpp"
#include "mit/layers.hpp"
#include "mit/rng.hpp"
#include "mit/tensor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace mit {

/// Complex feature map stored as two real planes of identical shape
/// (N, C, H, W); dense variants use (N, C).
template <typename T>
struct ComplexTensor {
    Tensor<T> re;
    Tensor<T> im;

    ComplexTensor() = default;
    ComplexTensor(Tensor<T> r, Tensor<T> i) : re(std::move(r)), im(std::move(i)) {
        if (!re.same_shape(im))
            throw std::invalid_argument("complex tensor: plane shape mismatch");
    }
    explicit ComplexTensor(const std::vector<std::int64_t>& shape) : re(shape), im(shape) {}

    const std::vector<std::int64_t>& shape() const { return re.shape(); }
    std::size_t numel() const { return re.numel(); }
};

// ---------------------------------------------------------------------------
// Complex convolution: W = A + iB applied as
//   real(W*h) = A*x - B*y,  imag(W*h) = B*x + A*y
// ---------------------------------------------------------------------------

template <typename T>
class ComplexConv2d {
public:
    ComplexConv2d(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride,
                  std::int64_t pad)
        : stride_(stride), pad_(pad), a_({out_ch, in_ch, k, k}), b_({out_ch, in_ch, k, k}),
          bias_re_({out_ch}), bias_im_({out_ch}), ga_({out_ch, in_ch, k, k}),
          gb_({out_ch, in_ch, k, k}), gbias_re_({out_ch}), gbias_im_({out_ch}) {}

    /// Kernel magnitudes Rayleigh(1/sqrt(fan-in)), phases uniform on [-pi, pi),
    /// biases zero.
    void init(Rng& rng) {
        const double scale =
            1.0 / std::sqrt(static_cast<double>(a_.dim(1) * a_.dim(2) * a_.dim(3)));
        for (std::size_t i = 0; i < a_.numel(); ++i) {
            const double mag = rng.rayleigh(scale);
            const double phase = rng.uniform(-std::numbers::pi, std::numbers::pi);
            a_[i] = static_cast<T>(mag * std::cos(phase));
            b_[i] = static_cast<T>(mag * std::sin(phase));
        }
        bias_re_.zero();
        bias_im_.zero();
    }

    ComplexTensor<T> forward(const ComplexTensor<T>& h) {
        if (h.re.dim(1) != a_.dim(1))
            throw std::invalid_argument("cconv: input channel mismatch");
        x_ = h;
        Tensor<T> ax = conv2d_forward(h.re, a_, stride_, pad_);
        Tensor<T> by = conv2d_forward(h.im, b_, stride_, pad_);
        Tensor<T> bx = conv2d_forward(h.re, b_, stride_, pad_);
        Tensor<T> ay = conv2d_forward(h.im, a_, stride_, pad_);

        ComplexTensor<T> y(ax.shape());
        const std::int64_t P = ax.dim(2) * ax.dim(3);
        for (std::int64_t n = 0; n < ax.dim(0); ++n) {
            for (std::int64_t c = 0; c < ax.dim(1); ++c) {
                const std::int64_t off = (n * ax.dim(1) + c) * P;
                for (std::int64_t i = 0; i < P; ++i) {
                    y.re[off + i] = ax[off + i] - by[off + i] + bias_re_[c];
                    y.im[off + i] = bx[off + i] + ay[off + i] + bias_im_[c];
                }
            }
        }
        return y;
    }

    ComplexTensor<T> backward(const ComplexTensor<T>& dy) {
        const std::int64_t P = dy.re.dim(2) * dy.re.dim(3);
        for (std::int64_t n = 0; n < dy.re.dim(0); ++n) {
            for (std::int64_t c = 0; c < dy.re.dim(1); ++c) {
                const std::int64_t off = (n * dy.re.dim(1) + c) * P;
                T sre = T(0), sim = T(0);
                for (std::int64_t i = 0; i < P; ++i) {
                    sre += dy.re[off + i];
                    sim += dy.im[off + i];
                }
                gbias_re_[c] += sre;
                gbias_im_[c] += sim;
            }
        }
        // dA = dyre (*) xre + dyim (*) xim ; dB = dyim (*) xre - dyre (*) xim
        conv2d_backward_weights(dy.re, x_.re, stride_, pad_, ga_);
        conv2d_backward_weights(dy.im, x_.im, stride_, pad_, ga_);
        conv2d_backward_weights(dy.im, x_.re, stride_, pad_, gb_);
        Tensor<T> neg_xim(x_.im.shape());
        for (std::size_t i = 0; i < neg_xim.numel(); ++i) neg_xim[i] = -x_.im[i];
        conv2d_backward_weights(dy.re, neg_xim, stride_, pad_, gb_);

        const std::int64_t H = x_.re.dim(2), W = x_.re.dim(3);
        Tensor<T> da_re = conv2d_backward_data(dy.re, a_, stride_, pad_, H, W);
        Tensor<T> db_im = conv2d_backward_data(dy.im, b_, stride_, pad_, H, W);
        Tensor<T> db_re = conv2d_backward_data(dy.re, b_, stride_, pad_, H, W);
        Tensor<T> da_im = conv2d_backward_data(dy.im, a_, stride_, pad_, H, W);

        ComplexTensor<T> dx(x_.shape());
        for (std::size_t i = 0; i < dx.numel(); ++i) {
            dx.re[i] = da_re[i] + db_im[i];
            dx.im[i] = -db_re[i] + da_im[i];
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&a_, &ga_});
        out.push_back({&b_, &gb_});
        out.push_back({&bias_re_, &gbias_re_});
        out.push_back({&bias_im_, &gbias_im_});
    }

    Tensor<T>& kernel_a() { return a_; }
    Tensor<T>& kernel_b() { return b_; }
    Tensor<T>& bias_re() { return bias_re_; }
    Tensor<T>& bias_im() { return bias_im_; }
    std::size_t param_count() const {
        return a_.numel() + b_.numel() + bias_re_.numel() + bias_im_.numel();
    }

private:
    std::int64_t stride_, pad_;
    Tensor<T> a_, b_, bias_re_, bias_im_;
    Tensor<T> ga_, gb_, gbias_re_, gbias_im_;
    ComplexTensor<T> x_;
};

// ---------------------------------------------------------------------------
// modReLU: out = (|z| + b) * z/|z| when |z| + b >= 0, else 0. Phase is
// preserved wherever the output is nonzero; the subgradient at the kink is 0.
// ---------------------------------------------------------------------------

template <typename T>
class ModRelu {
public:
    explicit ModRelu(std::int64_t channels) : b_({channels}), gb_({channels}) {}

    void init(Rng&) { b_.zero(); }

    ComplexTensor<T> forward(const ComplexTensor<T>& z) {
        x_ = z;
        const std::int64_t C = b_.dim(0);
        const std::int64_t N = z.re.dim(0);
        const std::int64_t spatial = z.re.ndim() == 4 ? z.re.dim(2) * z.re.dim(3) : 1;
        if (z.re.dim(1) != C) throw std::invalid_argument("modrelu: channel mismatch");

        ComplexTensor<T> y(z.shape());
        r_ = Tensor<T>(z.re.shape());
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const std::int64_t off = (n * C + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    const T x = z.re[off + i], yv = z.im[off + i];
                    const T r = std::hypot(x, yv);
                    r_[off + i] = r;
                    if (r > T(0) && r + b_[c] > T(0)) {
                        const T s = (r + b_[c]) / r;
                        y.re[off + i] = s * x;
                        y.im[off + i] = s * yv;
                    } else {
                        y.re[off + i] = T(0);
                        y.im[off + i] = T(0);
                    }
                }
            }
        }
        return y;
    }

    ComplexTensor<T> backward(const ComplexTensor<T>& dy) {
        const std::int64_t C = b_.dim(0);
        const std::int64_t N = dy.re.dim(0);
        const std::int64_t spatial = dy.re.ndim() == 4 ? dy.re.dim(2) * dy.re.dim(3) : 1;

        ComplexTensor<T> dx(dy.shape());
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t c = 0; c < C; ++c) {
                const std::int64_t off = (n * C + c) * spatial;
                for (std::int64_t i = 0; i < spatial; ++i) {
                    const T r = r_[off + i];
                    if (!(r > T(0)) || !(r + b_[c] > T(0))) {
                        dx.re[off + i] = T(0);
                        dx.im[off + i] = T(0);
                        continue;
                    }
                    const T x = x_.re[off + i], yv = x_.im[off + i];
                    const T gre = dy.re[off + i], gim = dy.im[off + i];
                    const T s = T(1) + b_[c] / r;
                    const T k = b_[c] / (r * r * r);
                    dx.re[off + i] = gre * (s - k * x * x) - gim * k * x * yv;
                    dx.im[off + i] = -gre * k * x * yv + gim * (s - k * yv * yv);
                    gb_[c] += gre * x / r + gim * yv / r;
                }
            }
        }
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) { out.push_back({&b_, &gb_}); }
    Tensor<T>& offsets() { return b_; }

private:
    Tensor<T> b_, gb_;
    ComplexTensor<T> x_;
    Tensor<T> r_;
};

// ---------------------------------------------------------------------------
// Modulus max-pooling (2x2, stride 2): keeps the complex element of largest
// modulus per window, ties to the first in row-major order.
// ---------------------------------------------------------------------------

template <typename T>
class CMaxPool2d {
public:
    ComplexTensor<T> forward(const ComplexTensor<T>& z) {
        const std::int64_t N = z.re.dim(0), C = z.re.dim(1), H = z.re.dim(2), W = z.re.dim(3);
        if (H % 2 || W % 2) throw std::invalid_argument("cmaxpool: odd spatial size");
        in_shape_ = z.re.shape();
        ComplexTensor<T> y({N, C, H / 2, W / 2});
        arg_.assign(y.numel(), 0);
        std::size_t o = 0;
        for (std::int64_t nc = 0; nc < N * C; ++nc) {
            const T* pre = z.re.data() + nc * H * W;
            const T* pim = z.im.data() + nc * H * W;
            for (std::int64_t oy = 0; oy < H / 2; ++oy) {
                for (std::int64_t ox = 0; ox < W / 2; ++ox, ++o) {
                    const std::int64_t base = (2 * oy) * W + 2 * ox;
                    std::int64_t best = base;
                    T bv = pre[base] * pre[base] + pim[base] * pim[base];
                    for (const std::int64_t off : {base + 1, base + W, base + W + 1}) {
                        const T v = pre[off] * pre[off] + pim[off] * pim[off];
                        if (v > bv) {
                            bv = v;
                            best = off;
                        }
                    }
                    y.re[o] = pre[best];
                    y.im[o] = pim[best];
                    arg_[o] = nc * H * W + best;
                }
            }
        }
        return y;
    }

    ComplexTensor<T> backward(const ComplexTensor<T>& dy) {
        ComplexTensor<T> dx(in_shape_);
        for (std::size_t o = 0; o < dy.numel(); ++o) {
            dx.re[arg_[o]] += dy.re[o];
            dx.im[arg_[o]] += dy.im[o];
        }
        return dx;
    }

private:
    std::vector<std::int64_t> in_shape_;
    std::vector<std::size_t> arg_;
};

// ---------------------------------------------------------------------------
// C2R / R2C channel bridges: C complex channels <-> 2C real channels with the
// real planes first.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> c2r(const ComplexTensor<T>& z) {
    return concat_channels(z.re, z.im);
}

template <typename T>
ComplexTensor<T> r2c(const Tensor<T>& x) {
    if (x.dim(1) % 2 != 0) throw std::invalid_argument("r2c: odd channel count");
    auto [re, im] = split_channels(x, x.dim(1) / 2);
    return ComplexTensor<T>(std::move(re), std::move(im));
}

/// Gradient of c2r is r2c of the gradient, and vice versa.

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsampling on both planes
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> upsample2x_real(const Tensor<T>& x) {
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({N, C, 2 * H, 2 * W});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* in = x.data() + nc * H * W;
        T* out = y.data() + nc * 4 * H * W;
        for (std::int64_t iy = 0; iy < H; ++iy)
            for (std::int64_t ix = 0; ix < W; ++ix) {
                const T v = in[iy * W + ix];
                T* o = out + (2 * iy) * 2 * W + 2 * ix;
                o[0] = v;
                o[1] = v;
                o[2 * W] = v;
                o[2 * W + 1] = v;
            }
    }
    return y;
}

template <typename T>
Tensor<T> upsample2x_real_backward(const Tensor<T>& dy) {
    const std::int64_t N = dy.dim(0), C = dy.dim(1), H = dy.dim(2) / 2, W = dy.dim(3) / 2;
    Tensor<T> dx({N, C, H, W});
    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* in = dy.data() + nc * 4 * H * W;
        T* out = dx.data() + nc * H * W;
        for (std::int64_t iy = 0; iy < H; ++iy)
            for (std::int64_t ix = 0; ix < W; ++ix) {
                const T* o = in + (2 * iy) * 2 * W + 2 * ix;
                out[iy * W + ix] = o[0] + o[1] + o[2 * W] + o[2 * W + 1];
            }
    }
    return dx;
}

template <typename T>
ComplexTensor<T> upsample2x(const ComplexTensor<T>& z) {
    return ComplexTensor<T>(upsample2x_real(z.re), upsample2x_real(z.im));
}

template <typename T>
ComplexTensor<T> upsample2x_backward(const ComplexTensor<T>& dy) {
    return ComplexTensor<T>(upsample2x_real_backward(dy.re), upsample2x_real_backward(dy.im));
}

// ---------------------------------------------------------------------------
// Complex dense layer: same arithmetic as the complex convolution with a
// 1x1 spatial extent. Input (N, in) complex, output (N, out) complex.
// ---------------------------------------------------------------------------

template <typename T>
class CDense {
public:
    CDense(std::int64_t in, std::int64_t out)
        : wre_({out, in}), wim_({out, in}), bias_re_({out}), bias_im_({out}),
          gwre_({out, in}), gwim_({out, in}), gbias_re_({out}), gbias_im_({out}) {}

    void init(Rng& rng) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(wre_.dim(1)));
        for (std::size_t i = 0; i < wre_.numel(); ++i) {
            const double mag = rng.rayleigh(scale);
            const double phase = rng.uniform(-std::numbers::pi, std::numbers::pi);
            wre_[i] = static_cast<T>(mag * std::cos(phase));
            wim_[i] = static_cast<T>(mag * std::sin(phase));
        }
        bias_re_.zero();
        bias_im_.zero();
    }

    ComplexTensor<T> forward(const ComplexTensor<T>& z) {
        if (z.re.dim(1) != wre_.dim(1)) throw std::invalid_argument("cdense: shape mismatch");
        x_ = z;
        const std::int64_t N = z.re.dim(0), out = wre_.dim(0), in = wre_.dim(1);
        Tensor<T> xr_wr({N, out}), xi_wi({N, out}), xr_wi({N, out}), xi_wr({N, out});
        gemm_nt(N, out, in, z.re.data(), wre_.data(), xr_wr.data(), false);
        gemm_nt(N, out, in, z.im.data(), wim_.data(), xi_wi.data(), false);
        gemm_nt(N, out, in, z.re.data(), wim_.data(), xr_wi.data(), false);
        gemm_nt(N, out, in, z.im.data(), wre_.data(), xi_wr.data(), false);
        ComplexTensor<T> y({N, out});
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t j = 0; j < out; ++j) {
                y.re.at2(n, j) = xr_wr.at2(n, j) - xi_wi.at2(n, j) + bias_re_[j];
                y.im.at2(n, j) = xr_wi.at2(n, j) + xi_wr.at2(n, j) + bias_im_[j];
            }
        return y;
    }

    ComplexTensor<T> backward(const ComplexTensor<T>& dy) {
        const std::int64_t N = dy.re.dim(0), out = wre_.dim(0), in = wre_.dim(1);
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t j = 0; j < out; ++j) {
                gbias_re_[j] += dy.re.at2(n, j);
                gbias_im_[j] += dy.im.at2(n, j);
            }

        Tensor<T> neg_xim(x_.im.shape());
        for (std::size_t i = 0; i < neg_xim.numel(); ++i) neg_xim[i] = -x_.im[i];
        // dWre = dyre^T xre + dyim^T xim ; dWim = dyim^T xre - dyre^T xim
        gemm_tn(out, in, N, dy.re.data(), x_.re.data(), gwre_.data(), true);
        gemm_tn(out, in, N, dy.im.data(), x_.im.data(), gwre_.data(), true);
        gemm_tn(out, in, N, dy.im.data(), x_.re.data(), gwim_.data(), true);
        gemm_tn(out, in, N, dy.re.data(), neg_xim.data(), gwim_.data(), true);

        // dxre = dyre Wre + dyim Wim ; dxim = dyim Wre - dyre Wim
        ComplexTensor<T> dx({N, in});
        gemm_nn(N, in, out, dy.re.data(), wre_.data(), dx.re.data(), false);
        gemm_nn(N, in, out, dy.im.data(), wim_.data(), dx.re.data(), true);
        gemm_nn(N, in, out, dy.im.data(), wre_.data(), dx.im.data(), false);
        Tensor<T> tmp({N, in});
        gemm_nn(N, in, out, dy.re.data(), wim_.data(), tmp.data(), false);
        for (std::size_t i = 0; i < tmp.numel(); ++i) dx.im[i] -= tmp[i];
        return dx;
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        out.push_back({&wre_, &gwre_});
        out.push_back({&wim_, &gwim_});
        out.push_back({&bias_re_, &gbias_re_});
        out.push_back({&bias_im_, &gbias_im_});
    }

    Tensor<T>& weight_re() { return wre_; }
    Tensor<T>& weight_im() { return wim_; }

private:
    Tensor<T> wre_, wim_, bias_re_, bias_im_;
    Tensor<T> gwre_, gwim_, gbias_re_, gbias_im_;
    ComplexTensor<T> x_;
};

}  // namespace mit
