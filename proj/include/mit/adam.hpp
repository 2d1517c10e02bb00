#pragma once

#include "mit/layers.hpp"

#include <cmath>
#include <vector>

namespace mit {

/// Adam over a fixed parameter list. One instance per training run; the
/// parameter list order defines the moment-buffer layout.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<ParamRef<T>> params, double lr = 0.001, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value->shape());
            v_.emplace_back(p.value->shape());
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            T* w = params_[k].value->data();
            const T* g = params_[k].grad->data();
            T* m = m_[k].data();
            T* v = v_[k].data();
            const std::size_t n = params_[k].value->numel();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
                v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void zero_grad() { zero_params(params_); }
    double learning_rate() const { return lr_; }

private:
    std::vector<ParamRef<T>> params_;
    std::vector<Tensor<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace mit
