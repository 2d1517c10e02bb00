#pragma once

#include "mit/tensor.hpp"

#include <stdexcept>
#include <vector>

namespace mit {

/// Output spatial size of a convolution.
inline std::int64_t conv_out_size(std::int64_t in, std::int64_t k, std::int64_t stride,
                                  std::int64_t pad) {
    const std::int64_t num = in + 2 * pad - k;
    if (num < 0 || num % stride != 0)
        throw std::invalid_argument("conv: incompatible spatial size");
    return num / stride + 1;
}

namespace detail {

template <typename T>
std::vector<T>& conv_scratch() {
    static thread_local std::vector<T> buf;
    return buf;
}

/// col is (C*kh*kw) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
            std::int64_t Wo, T* col) {
    const std::int64_t P = Ho * Wo;
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < C * kh * kw; ++r) {
        const std::int64_t c = r / (kh * kw);
        const std::int64_t ky = (r / kw) % kh;
        const std::int64_t kx = r % kw;
        T* out = col + r * P;
        const T* plane = x + c * H * W;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            const std::int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) {
                for (std::int64_t ox = 0; ox < Wo; ++ox) out[oy * Wo + ox] = T(0);
                continue;
            }
            const T* row = plane + iy * W;
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const std::int64_t ix = ox * stride + kx - pad;
                out[oy * Wo + ox] = (ix >= 0 && ix < W) ? row[ix] : T(0);
            }
        }
    }
}

/// Accumulates col back into the image (inverse scatter of im2col).
template <typename T>
void col2im(const T* col, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t Ho,
            std::int64_t Wo, T* x) {
    const std::int64_t P = Ho * Wo;
    // serial over rows: distinct rows can hit the same input pixel
    for (std::int64_t r = 0; r < C * kh * kw; ++r) {
        const std::int64_t c = r / (kh * kw);
        const std::int64_t ky = (r / kw) % kh;
        const std::int64_t kx = r % kw;
        const T* in = col + r * P;
        T* plane = x + c * H * W;
        for (std::int64_t oy = 0; oy < Ho; ++oy) {
            const std::int64_t iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= H) continue;
            T* row = plane + iy * W;
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                const std::int64_t ix = ox * stride + kx - pad;
                if (ix >= 0 && ix < W) row[ix] += in[oy * Wo + ox];
            }
        }
    }
}

}  // namespace detail

/// y = conv(x, W), no bias. x: (N, Ci, H, W); W: (Co, Ci, kh, kw).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, std::int64_t stride,
                         std::int64_t pad) {
    const std::int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Ci) throw std::invalid_argument("conv: channel mismatch");
    const std::int64_t Ho = conv_out_size(H, kh, stride, pad);
    const std::int64_t Wo = conv_out_size(W, kw, stride, pad);
    const std::int64_t K = Ci * kh * kw, P = Ho * Wo;

    Tensor<T> y({N, Co, Ho, Wo});
    auto& col = detail::conv_scratch<T>();
    col.resize(static_cast<std::size_t>(K * P));
    for (std::int64_t n = 0; n < N; ++n) {
        detail::im2col(x.data() + n * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                       col.data());
        gemm_nn(Co, P, K, w.data(), col.data(), y.data() + n * Co * P, false);
    }
    return y;
}

/// dx of the convolution above (also the forward map of a transpose conv).
template <typename T>
Tensor<T> conv2d_backward_data(const Tensor<T>& dy, const Tensor<T>& w, std::int64_t stride,
                               std::int64_t pad, std::int64_t H, std::int64_t W) {
    const std::int64_t N = dy.dim(0), Co = dy.dim(1), Ho = dy.dim(2), Wo = dy.dim(3);
    const std::int64_t Ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(0) != Co) throw std::invalid_argument("conv backward: channel mismatch");
    if (conv_out_size(H, kh, stride, pad) != Ho || conv_out_size(W, kw, stride, pad) != Wo)
        throw std::invalid_argument("conv backward: spatial mismatch");
    const std::int64_t K = Ci * kh * kw, P = Ho * Wo;

    Tensor<T> dx({N, Ci, H, W});
    auto& dcol = detail::conv_scratch<T>();
    dcol.resize(static_cast<std::size_t>(K * P));
    for (std::int64_t n = 0; n < N; ++n) {
        gemm_tn(K, P, Co, w.data(), dy.data() + n * Co * P, dcol.data(), false);
        detail::col2im(dcol.data(), Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                       dx.data() + n * Ci * H * W);
    }
    return dx;
}

/// Accumulates dW for the convolution (dw shaped like w).
template <typename T>
void conv2d_backward_weights(const Tensor<T>& dy, const Tensor<T>& x, std::int64_t stride,
                             std::int64_t pad, Tensor<T>& dw) {
    const std::int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Co = dy.dim(1), Ho = dy.dim(2), Wo = dy.dim(3);
    const std::int64_t kh = dw.dim(2), kw = dw.dim(3);
    const std::int64_t K = Ci * kh * kw, P = Ho * Wo;

    auto& col = detail::conv_scratch<T>();
    col.resize(static_cast<std::size_t>(K * P));
    for (std::int64_t n = 0; n < N; ++n) {
        detail::im2col(x.data() + n * Ci * H * W, Ci, H, W, kh, kw, stride, pad, Ho, Wo,
                       col.data());
        gemm_nt(Co, K, P, dy.data() + n * Co * P, col.data(), dw.data(), true);
    }
}

}  // namespace mit
