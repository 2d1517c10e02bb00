#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mit {

/// Dense row-major tensor. Rank is dynamic but in practice 1 (vectors),
/// 2 (matrices), or 4 (batch, channel, height, width).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), T(0));
    }

    Tensor(std::initializer_list<std::int64_t> shape)
        : Tensor(std::vector<std::int64_t>(shape)) {}

    static std::size_t numel_of(const std::vector<std::int64_t>& s) {
        std::size_t n = 1;
        for (auto d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-D and 4-D accessors for the common cases.
    T& at2(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }

    T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::vector<std::int64_t> shape_;
    std::vector<T> data_;
};

// ---------------------------------------------------------------------------
// GEMM kernels. Row-major, contiguous. Written so that the inner loops
// auto-vectorize without -ffast-math; every output element is produced by a
// fixed serial reduction, which keeps results bit-identical for any thread
// count.
// ---------------------------------------------------------------------------

/// C[M x N] = A[M x K] * B[K x N]  (+= when accumulate)
template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (!accumulate)
            for (std::int64_t j = 0; j < N; ++j) c[j] = T(0);
        const T* a = A + i * K;
        for (std::int64_t k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + k * N;
            for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

/// C[M x N] = A[M x K] * B[N x K]^T
template <typename T>
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        for (std::int64_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            // Eight explicit lanes so the reduction vectorizes while the
            // summation order stays fixed.
            T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
            std::int64_t k = 0;
            for (; k + 8 <= K; k += 8)
                for (int l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
            T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                  ((acc[4] + acc[5]) + (acc[6] + acc[7]));
            for (; k < K; ++k) s += a[k] * b[k];
            C[i * N + j] = accumulate ? C[i * N + j] + s : s;
        }
    }
}

/// C[M x N] = A[K x M]^T * B[K x N]
template <typename T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        if (!accumulate)
            for (std::int64_t j = 0; j < N; ++j) c[j] = T(0);
        for (std::int64_t k = 0; k < K; ++k) {
            const T av = A[k * M + i];
            const T* b = B + k * N;
            for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace mit
