#pragma once

#include "mit/complex_layers.hpp"
#include "mit/layers.hpp"
#include "mit/rng.hpp"
#include "mit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mit {

/// One block of real degrees of freedom: current values plus the analytic
/// gradient claimed for them. Real and imaginary planes are independent dofs.
template <typename T>
struct DofView {
    T* value;
    const T* grad;
    std::size_t n;
};

/// Central finite differences over every dof against the precomputed analytic
/// gradient. Returns the worst relative error (with an absolute floor of 1 in
/// the denominator so near-zero gradients do not blow up the ratio).
template <typename T, typename LossFn>
double grad_check_dofs(const std::vector<DofView<T>>& dofs, LossFn loss, double eps) {
    double worst = 0.0;
    for (const auto& dof : dofs) {
        for (std::size_t i = 0; i < dof.n; ++i) {
            const T saved = dof.value[i];
            dof.value[i] = saved + static_cast<T>(eps);
            const double lp = static_cast<double>(loss());
            dof.value[i] = saved - static_cast<T>(eps);
            const double lm = static_cast<double>(loss());
            dof.value[i] = saved;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = static_cast<double>(dof.grad[i]);
            const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

namespace detail {

template <typename T>
T proj_dot(const Tensor<T>& out, const Tensor<T>& proj) {
    T s = T(0);
    for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * proj[i];
    return s;
}

template <typename T>
Tensor<T> make_proj(const std::vector<std::int64_t>& shape, Rng& rng) {
    Tensor<T> p(shape);
    for (std::size_t i = 0; i < p.numel(); ++i) p[i] = static_cast<T>(rng.normal());
    return p;
}

}  // namespace detail

/// Checks a real-tensor layer: d(sum proj*out)/d(params, input).
template <typename T, typename Layer>
double grad_check(Layer& layer, Tensor<T> input, double eps, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor<T> out = layer.forward(input);
    const Tensor<T> proj = detail::make_proj<T>(out.shape(), rng);

    std::vector<ParamRef<T>> params;
    layer.collect_params(params);
    zero_params(params);
    layer.forward(input);
    const Tensor<T> din = layer.backward(proj);

    std::vector<DofView<T>> dofs;
    for (auto& p : params) dofs.push_back({p.value->data(), p.grad->data(), p.value->numel()});
    dofs.push_back({input.data(), din.data(), input.numel()});

    auto loss = [&] { return detail::proj_dot(layer.forward(input), proj); };
    return grad_check_dofs(dofs, loss, eps);
}

/// Same for parameter-free real layers (pooling, activations).
template <typename T, typename Layer>
double grad_check_stateless(Layer& layer, Tensor<T> input, double eps, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor<T> out = layer.forward(input);
    const Tensor<T> proj = detail::make_proj<T>(out.shape(), rng);
    layer.forward(input);
    const Tensor<T> din = layer.backward(proj);
    std::vector<DofView<T>> dofs{{input.data(), din.data(), input.numel()}};
    auto loss = [&] { return detail::proj_dot(layer.forward(input), proj); };
    return grad_check_dofs(dofs, loss, eps);
}

/// Checks a complex-tensor layer; both planes are independent real dofs.
template <typename T, typename Layer>
double grad_check_complex(Layer& layer, ComplexTensor<T> input, double eps,
                          std::uint64_t seed = 99) {
    Rng rng(seed);
    ComplexTensor<T> out = layer.forward(input);
    const Tensor<T> proj_re = detail::make_proj<T>(out.re.shape(), rng);
    const Tensor<T> proj_im = detail::make_proj<T>(out.im.shape(), rng);

    std::vector<ParamRef<T>> params;
    layer.collect_params(params);
    zero_params(params);
    layer.forward(input);
    const ComplexTensor<T> din = layer.backward(ComplexTensor<T>(proj_re, proj_im));

    std::vector<DofView<T>> dofs;
    for (auto& p : params) dofs.push_back({p.value->data(), p.grad->data(), p.value->numel()});
    dofs.push_back({input.re.data(), din.re.data(), input.re.numel()});
    dofs.push_back({input.im.data(), din.im.data(), input.im.numel()});

    auto loss = [&] {
        ComplexTensor<T> o = layer.forward(input);
        return detail::proj_dot(o.re, proj_re) + detail::proj_dot(o.im, proj_im);
    };
    return grad_check_dofs(dofs, loss, eps);
}

/// Complex layer without parameters (modulus pooling).
template <typename T, typename Layer>
double grad_check_complex_stateless(Layer& layer, ComplexTensor<T> input, double eps,
                                    std::uint64_t seed = 99) {
    Rng rng(seed);
    ComplexTensor<T> out = layer.forward(input);
    const Tensor<T> proj_re = detail::make_proj<T>(out.re.shape(), rng);
    const Tensor<T> proj_im = detail::make_proj<T>(out.im.shape(), rng);
    layer.forward(input);
    const ComplexTensor<T> din = layer.backward(ComplexTensor<T>(proj_re, proj_im));
    std::vector<DofView<T>> dofs{{input.re.data(), din.re.data(), input.re.numel()},
                                 {input.im.data(), din.im.data(), input.im.numel()}};
    auto loss = [&] {
        ComplexTensor<T> o = layer.forward(input);
        return detail::proj_dot(o.re, proj_re) + detail::proj_dot(o.im, proj_im);
    };
    return grad_check_dofs(dofs, loss, eps);
}

/// Random complex tensor with moduli bounded away from zero, for kink-free
/// modReLU checks.
template <typename T>
ComplexTensor<T> random_complex(const std::vector<std::int64_t>& shape, Rng& rng,
                                double min_modulus = 0.0) {
    ComplexTensor<T> z(shape);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        double re = rng.normal(), im = rng.normal();
        const double r = std::hypot(re, im);
        if (min_modulus > 0.0 && r < min_modulus) {
            const double s = (min_modulus + 0.1) / std::max(r, 1e-12);
            re *= s;
            im *= s;
        }
        z.re[i] = static_cast<T>(re);
        z.im[i] = static_cast<T>(im);
    }
    return z;
}

}  // namespace mit
