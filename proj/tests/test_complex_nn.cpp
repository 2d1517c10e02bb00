#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mit/adam.hpp"
#include "mit/complex_layers.hpp"
#include "mit/grad_check.hpp"

#include <complex>
#include <numbers>

using namespace mit;
using C = std::complex<double>;

namespace {

/// Brute-force complex convolution with scalar arithmetic; the independent
/// oracle every optimized path is checked against.
ComplexTensor<double> cconv_oracle(const ComplexTensor<double>& h, const Tensor<double>& A,
                                   const Tensor<double>& B, const Tensor<double>& bre,
                                   const Tensor<double>& bim, std::int64_t stride,
                                   std::int64_t pad) {
    const std::int64_t N = h.re.dim(0), Ci = h.re.dim(1), H = h.re.dim(2), W = h.re.dim(3);
    const std::int64_t Co = A.dim(0), k = A.dim(2);
    const std::int64_t Ho = (H + 2 * pad - k) / stride + 1;
    const std::int64_t Wo = (W + 2 * pad - k) / stride + 1;
    ComplexTensor<double> y({N, Co, Ho, Wo});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t oy = 0; oy < Ho; ++oy)
                for (std::int64_t ox = 0; ox < Wo; ++ox) {
                    C acc(bre[co], bim[co]);
                    for (std::int64_t ci = 0; ci < Ci; ++ci)
                        for (std::int64_t ky = 0; ky < k; ++ky)
                            for (std::int64_t kx = 0; kx < k; ++kx) {
                                const std::int64_t iy = oy * stride + ky - pad;
                                const std::int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                const C w(A.at4(co, ci, ky, kx), B.at4(co, ci, ky, kx));
                                const C v(h.re.at4(n, ci, iy, ix), h.im.at4(n, ci, iy, ix));
                                acc += w * v;
                            }
                    y.re.at4(n, co, oy, ox) = acc.real();
                    y.im.at4(n, co, oy, ox) = acc.imag();
                }
    return y;
}

ComplexTensor<double> cdense_oracle(const ComplexTensor<double>& z, const Tensor<double>& wre,
                                    const Tensor<double>& wim) {
    const std::int64_t N = z.re.dim(0), out = wre.dim(0), in = wre.dim(1);
    ComplexTensor<double> y({N, out});
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t j = 0; j < out; ++j) {
            C acc(0.0, 0.0);
            for (std::int64_t k = 0; k < in; ++k)
                acc += C(wre.at2(j, k), wim.at2(j, k)) * C(z.re.at2(n, k), z.im.at2(n, k));
            y.re.at2(n, j) = acc.real();
            y.im.at2(n, j) = acc.imag();
        }
    return y;
}

double max_abs_diff(const ComplexTensor<double>& a, const ComplexTensor<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        worst = std::max(worst, std::abs(a.re[i] - b.re[i]));
        worst = std::max(worst, std::abs(a.im[i] - b.im[i]));
    }
    return worst;
}

}  // namespace

TEST_CASE("cconv 1x1 pinned cases: multiplication by i and by 1+i") {
    // W = i, h = 1 -> i
    ComplexConv2d<double> by_i(1, 1, 1, 1, 0);
    by_i.kernel_a()[0] = 0.0;
    by_i.kernel_b()[0] = 1.0;
    ComplexTensor<double> one({1, 1, 1, 1});
    one.re[0] = 1.0;
    ComplexTensor<double> out = by_i.forward(one);
    CHECK(out.re[0] == 0.0);
    CHECK(out.im[0] == 1.0);

    // W = 1+i, h = 1-i -> 2
    ComplexConv2d<double> w11(1, 1, 1, 1, 0);
    w11.kernel_a()[0] = 1.0;
    w11.kernel_b()[0] = 1.0;
    ComplexTensor<double> h({1, 1, 1, 1});
    h.re[0] = 1.0;
    h.im[0] = -1.0;
    out = w11.forward(h);
    CHECK(out.re[0] == 2.0);
    CHECK(out.im[0] == 0.0);
}

TEST_CASE("cconv matches the scalar complex oracle on random cases") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(3);
        const std::int64_t k = 1 + 2 * rng.uniform_int(2);  // 1 or 3
        const std::int64_t hw = k + rng.uniform_int(4);
        const std::int64_t pad = rng.uniform_int(2);
        ComplexConv2d<double> conv(ci, co, k, 1, pad);
        conv.init(rng);
        for (std::size_t i = 0; i < conv.bias_re().numel(); ++i) {
            conv.bias_re()[i] = rng.normal();
            conv.bias_im()[i] = rng.normal();
        }
        ComplexTensor<double> h = random_complex<double>({2, ci, hw, hw}, rng);
        const auto fast = conv.forward(h);
        const auto slow = cconv_oracle(h, conv.kernel_a(), conv.kernel_b(), conv.bias_re(),
                                       conv.bias_im(), 1, pad);
        CHECK(max_abs_diff(fast, slow) <= 1e-6);
    }
}

TEST_CASE("cconv is linear in its input") {
    Rng rng(12);
    ComplexConv2d<double> conv(2, 3, 3, 1, 1);
    conv.init(rng);
    ComplexTensor<double> h1 = random_complex<double>({1, 2, 5, 5}, rng);
    ComplexTensor<double> h2 = random_complex<double>({1, 2, 5, 5}, rng);

    // additivity (bias enters once, so compare against sum minus one bias pass)
    ComplexTensor<double> hsum(h1.shape());
    for (std::size_t i = 0; i < hsum.numel(); ++i) {
        hsum.re[i] = h1.re[i] + h2.re[i];
        hsum.im[i] = h1.im[i] + h2.im[i];
    }
    const auto y1 = conv.forward(h1);
    const auto y2 = conv.forward(h2);
    const auto ysum = conv.forward(hsum);
    ComplexTensor<double> zero_in(h1.shape());
    const auto ybias = conv.forward(zero_in);
    double worst = 0.0;
    for (std::size_t i = 0; i < ysum.numel(); ++i) {
        worst = std::max(worst,
                         std::abs(ysum.re[i] - (y1.re[i] + y2.re[i] - ybias.re[i])));
        worst = std::max(worst,
                         std::abs(ysum.im[i] - (y1.im[i] + y2.im[i] - ybias.im[i])));
    }
    CHECK(worst <= 1e-6);

    // commutes with scalar complex multiplication
    const C c(0.7, -1.3);
    ComplexTensor<double> hc(h1.shape());
    for (std::size_t i = 0; i < hc.numel(); ++i) {
        const C v = c * C(h1.re[i], h1.im[i]);
        hc.re[i] = v.real();
        hc.im[i] = v.imag();
    }
    const auto yc = conv.forward(hc);
    worst = 0.0;
    for (std::size_t i = 0; i < yc.numel(); ++i) {
        const C expect = c * C(y1.re[i] - ybias.re[i], y1.im[i] - ybias.im[i]) +
                         C(ybias.re[i], ybias.im[i]);
        worst = std::max(worst, std::abs(C(yc.re[i], yc.im[i]) - expect));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("modReLU pinned values") {
    ModRelu<double> act(1);

    auto eval = [&](double x, double y, double b) {
        act.offsets()[0] = b;
        ComplexTensor<double> z({1, 1, 1, 1});
        z.re[0] = x;
        z.im[0] = y;
        const auto out = act.forward(z);
        return C(out.re[0], out.im[0]);
    };

    CHECK(eval(1.0, 0.0, 0.0) == C(1.0, 0.0));
    CHECK(eval(3.0, 4.0, -10.0) == C(0.0, 0.0));
    const C r = eval(3.0, 4.0, -3.0);  // (5-3)*(3+4i)/5
    CHECK(r.real() == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(r.imag() == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("modReLU contract: modulus thresholded, phase preserved") {
    Rng rng(13);
    ModRelu<double> act(4);
    for (int i = 0; i < 4; ++i) act.offsets()[i] = rng.uniform(-1.0, 0.5);
    ComplexTensor<double> z = random_complex<double>({5, 4, 50, 50}, rng);  // 10^5 elements
    const auto out = act.forward(z);

    for (std::int64_t n = 0; n < 5; ++n)
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t i = 0; i < 2500; ++i) {
                const std::size_t off = ((n * 4 + c) * 2500) + i;
                const double r = std::hypot(z.re[off], z.im[off]);
                const double expect = std::max(r + act.offsets()[c], 0.0);
                const double got = std::hypot(out.re[off], out.im[off]);
                CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, expect));
                if (got > 0.0) {
                    const double pin = std::atan2(z.im[off], z.re[off]);
                    const double pout = std::atan2(out.im[off], out.re[off]);
                    CHECK(std::abs(pin - pout) <= 1e-12);
                }
            }
}

TEST_CASE("modulus max-pooling selects the largest-modulus element") {
    CMaxPool2d<double> pool;
    ComplexTensor<double> z({1, 1, 2, 2});
    z.re[0] = 1.0;  // 1+0i
    z.im[1] = 2.0;  // 0+2i
    z.re[2] = 0.5;
    z.im[3] = -0.25;
    const auto out = pool.forward(z);
    CHECK(out.re[0] == 0.0);
    CHECK(out.im[0] == 2.0);

    // all-equal window keeps that value (first element wins the tie)
    ComplexTensor<double> eq({1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) {
        eq.re[i] = 0.6;
        eq.im[i] = -0.8;
    }
    const auto oeq = pool.forward(eq);
    CHECK(oeq.re[0] == 0.6);
    CHECK(oeq.im[0] == -0.8);

    // output phase always equals the phase of some window element
    Rng rng(14);
    ComplexTensor<double> big = random_complex<double>({2, 3, 8, 8}, rng);
    const auto obig = pool.forward(big);
    for (std::int64_t nc = 0; nc < 6; ++nc)
        for (std::int64_t oy = 0; oy < 4; ++oy)
            for (std::int64_t ox = 0; ox < 4; ++ox) {
                const std::size_t oo = (nc * 4 + oy) * 4 + ox;
                const double pout = std::atan2(obig.im[oo], obig.re[oo]);
                bool matched = false;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t io = (nc * 8 + 2 * oy + dy) * 8 + 2 * ox + dx;
                        if (std::atan2(big.im[io], big.re[io]) == pout) matched = true;
                    }
                CHECK(matched);
            }

    ComplexTensor<double> odd({1, 1, 3, 3});
    CHECK_THROWS_AS(pool.forward(odd), std::invalid_argument);
}

TEST_CASE("c2r/r2c bridge layout and round-trip") {
    ComplexTensor<double> z({1, 1, 2, 2});
    z.re.fill(3.0);
    z.im.fill(4.0);
    const Tensor<double> r = c2r(z);
    REQUIRE(r.dim(1) == 2);
    CHECK(r.at4(0, 0, 0, 0) == 3.0);
    CHECK(r.at4(0, 1, 0, 0) == 4.0);

    const ComplexTensor<double> back = r2c(r);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        CHECK(back.re[i] == z.re[i]);
        CHECK(back.im[i] == z.im[i]);
    }

    // purely imaginary input -> first half channels zero
    ComplexTensor<double> imag_only({1, 2, 2, 2});
    imag_only.im.fill(1.5);
    const Tensor<double> ri = c2r(imag_only);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4; ++i) CHECK(ri.at4(0, c, i / 2, i % 2) == 0.0);

    Tensor<double> odd({1, 3, 2, 2});
    CHECK_THROWS_AS(r2c(odd), std::invalid_argument);
}

TEST_CASE("nearest-neighbor upsampling replicates values") {
    ComplexTensor<double> v({1, 1, 1, 1});
    v.re[0] = 0.25;
    v.im[0] = -2.0;
    const auto up = upsample2x(v);
    REQUIRE(up.re.dim(2) == 2);
    for (int i = 0; i < 4; ++i) {
        CHECK(up.re[i] == 0.25);
        CHECK(up.im[i] == -2.0);
    }
    const auto up2 = upsample2x(up);
    CHECK(up2.re.dim(2) == 4);
    for (int i = 0; i < 16; ++i) CHECK(std::hypot(up2.re[i], up2.im[i]) ==
                                       std::hypot(0.25, -2.0));
}

TEST_CASE("cdense pinned cases and oracle agreement") {
    // identity weight returns the input
    CDense<double> ident(3, 3);
    ident.weight_re().zero();
    ident.weight_im().zero();
    for (int i = 0; i < 3; ++i) ident.weight_re().at2(i, i) = 1.0;
    Rng rng(15);
    ComplexTensor<double> z = random_complex<double>({2, 3}, rng);
    auto out = ident.forward(z);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        CHECK(out.re[i] == doctest::Approx(z.re[i]).epsilon(1e-12));
        CHECK(out.im[i] == doctest::Approx(z.im[i]).epsilon(1e-12));
    }

    // W = iI rotates the phase by pi/2
    CDense<double> roti(3, 3);
    roti.weight_re().zero();
    roti.weight_im().zero();
    for (int i = 0; i < 3; ++i) roti.weight_im().at2(i, i) = 1.0;
    out = roti.forward(z);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const C expect = C(0.0, 1.0) * C(z.re[i], z.im[i]);
        CHECK(out.re[i] == doctest::Approx(expect.real()).epsilon(1e-12));
        CHECK(out.im[i] == doctest::Approx(expect.imag()).epsilon(1e-12));
    }

    // random case vs the scalar oracle
    CDense<double> dense(7, 5);
    dense.init(rng);
    ComplexTensor<double> x = random_complex<double>({3, 7}, rng);
    const auto fast = dense.forward(x);
    const auto slow = cdense_oracle(x, dense.weight_re(), dense.weight_im());
    CHECK(max_abs_diff(fast, slow) <= 1e-6);

    ComplexTensor<double> wrong = random_complex<double>({3, 6}, rng);
    CHECK_THROWS_AS(dense.forward(wrong), std::invalid_argument);
}

TEST_CASE("weight init: deterministic, Rayleigh magnitudes, zero offsets") {
    Rng a(77), b(77), c(78);
    ComplexConv2d<double> c1(4, 8, 3, 1, 1), c2(4, 8, 3, 1, 1), c3(4, 8, 3, 1, 1);
    c1.init(a);
    c2.init(b);
    c3.init(c);
    bool identical = true, different = false;
    for (std::size_t i = 0; i < c1.kernel_a().numel(); ++i) {
        identical = identical && c1.kernel_a()[i] == c2.kernel_a()[i];
        different = different || c1.kernel_a()[i] != c3.kernel_a()[i];
    }
    CHECK(identical);
    CHECK(different);

    // empirical mean magnitude ~ Rayleigh mean = scale*sqrt(pi/2)
    Rng rng(79);
    ComplexConv2d<double> big(16, 43, 3, 1, 1);  // ~6k complex weights
    big.init(rng);
    double mean = 0.0;
    for (std::size_t i = 0; i < big.kernel_a().numel(); ++i)
        mean += std::hypot(big.kernel_a()[i], big.kernel_b()[i]);
    mean /= big.kernel_a().numel();
    const double scale = 1.0 / std::sqrt(16.0 * 9.0);
    const double rayleigh_mean = scale * std::sqrt(std::numbers::pi / 2.0);
    CHECK(std::abs(mean - rayleigh_mean) / rayleigh_mean < 0.10);

    CHECK(std::all_of(big.bias_re().data(), big.bias_re().data() + 43,
                      [](double v) { return v == 0.0; }));
    ModRelu<double> act(43);
    act.init(rng);
    for (int i = 0; i < 43; ++i) CHECK(act.offsets()[i] == 0.0);
}

TEST_CASE("gradient checks: complex layers") {
    Rng rng(21);

    ComplexConv2d<double> conv(2, 3, 3, 1, 1);
    conv.init(rng);
    CHECK(grad_check_complex(conv, random_complex<double>({1, 2, 4, 4}, rng), 1e-5) <= 1e-4);

    ModRelu<double> act(2);
    act.offsets()[0] = -0.3;
    act.offsets()[1] = 0.4;
    // inputs kept away from the |z|+b = 0 kink
    CHECK(grad_check_complex(act, random_complex<double>({1, 2, 4, 4}, rng, 0.8), 1e-5) <= 1e-4);

    CMaxPool2d<double> pool;
    CHECK(grad_check_complex_stateless(pool, random_complex<double>({1, 2, 4, 4}, rng), 1e-5) <=
          1e-4);

    CDense<double> dense(6, 4);
    dense.init(rng);
    CHECK(grad_check_complex(dense, random_complex<double>({2, 6}, rng), 1e-5) <= 1e-6);
}

TEST_CASE("gradient checks: real layers") {
    Rng rng(22);
    auto rand_tensor = [&](std::vector<std::int64_t> shape) {
        Tensor<double> t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
        return t;
    };

    Conv2d<double> conv(2, 3, 3, 1, 1);
    conv.init(rng);
    CHECK(grad_check(conv, rand_tensor({2, 2, 5, 5}), 1e-5) <= 1e-4);

    Conv2d<double> strided(2, 3, 4, 2, 1);
    strided.init(rng);
    CHECK(grad_check(strided, rand_tensor({1, 2, 8, 8}), 1e-5) <= 1e-4);

    TConv2d<double> tconv(3, 2, 4, 2, 1);
    tconv.init(rng);
    CHECK(grad_check(tconv, rand_tensor({1, 3, 4, 4}), 1e-5) <= 1e-4);

    BatchNorm<double> bn(3);
    CHECK(grad_check(bn, rand_tensor({4, 3, 3, 3}), 1e-5) <= 1e-4);

    Dense<double> dense(6, 4);
    dense.init(rng);
    CHECK(grad_check(dense, rand_tensor({3, 6}), 1e-5) <= 1e-6);

    Relu<double> relu;
    CHECK(grad_check_stateless(relu, rand_tensor({1, 2, 4, 4}), 1e-6) <= 1e-4);
    LeakyRelu<double> lrelu(0.2);
    CHECK(grad_check_stateless(lrelu, rand_tensor({1, 2, 4, 4}), 1e-6) <= 1e-4);
    Sigmoid<double> sig;
    CHECK(grad_check_stateless(sig, rand_tensor({1, 2, 4, 4}), 1e-5) <= 1e-4);
    MaxPool2d<double> pool;
    CHECK(grad_check_stateless(pool, rand_tensor({1, 2, 4, 4}), 1e-5) <= 1e-4);
}

TEST_CASE("gemm variants agree with naive products") {
    Rng rng(23);
    const std::int64_t M = 7, N = 9, K = 11;
    std::vector<double> A(M * K), B(K * N), Bt(N * K), At(K * M);
    for (auto& v : A) v = rng.normal();
    for (auto& v : B) v = rng.normal();
    for (std::int64_t i = 0; i < K; ++i)
        for (std::int64_t j = 0; j < N; ++j) Bt[j * K + i] = B[i * N + j];
    for (std::int64_t i = 0; i < M; ++i)
        for (std::int64_t k = 0; k < K; ++k) At[k * M + i] = A[i * K + k];

    std::vector<double> ref(M * N, 0.0);
    for (std::int64_t i = 0; i < M; ++i)
        for (std::int64_t k = 0; k < K; ++k)
            for (std::int64_t j = 0; j < N; ++j) ref[i * N + j] += A[i * K + k] * B[k * N + j];

    std::vector<double> c1(M * N), c2(M * N), c3(M * N);
    gemm_nn<double>(M, N, K, A.data(), B.data(), c1.data(), false);
    gemm_nt<double>(M, N, K, A.data(), Bt.data(), c2.data(), false);
    gemm_tn<double>(M, N, K, At.data(), B.data(), c3.data(), false);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(std::abs(c1[i] - ref[i]) <= 1e-12);
        CHECK(std::abs(c2[i] - ref[i]) <= 1e-12);
        CHECK(std::abs(c3[i] - ref[i]) <= 1e-12);
    }
}

TEST_CASE("adam drives a quadratic toward its minimum deterministically") {
    auto run = [] {
        Tensor<float> w({4}), g({4});
        for (int i = 0; i < 4; ++i) w[i] = 1.0f + i;
        Adam<float> opt({{&w, &g}}, 0.05);
        for (int it = 0; it < 500; ++it) {
            for (int i = 0; i < 4; ++i) g[i] = 2.0f * (w[i] - 0.5f);
            opt.step();
        }
        return std::vector<float>(w.data(), w.data() + 4);
    };
    const auto w1 = run(), w2 = run();
    CHECK(w1 == w2);
    for (float v : w1) CHECK(std::abs(v - 0.5f) < 1e-3f);
}
