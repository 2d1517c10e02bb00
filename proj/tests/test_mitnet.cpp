#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mit/grad_check.hpp"
#include "mit/metrics.hpp"
#include "mit/mitnet.hpp"

#include <cmath>
#include <filesystem>

using namespace mit;
namespace fs = std::filesystem;

namespace {

DatasetConfig tiny_config() {
    DatasetConfig c = DatasetConfig::desk_scale();
    for (auto& s : c.shapes) s.step_mm = 40.0;
    c.shapes.resize(2);
    c.split = {0.6, 0.2, 0.2};
    c.seed = 9;
    return c;
}

const Dataset& tiny_dataset() {
    static const Dataset ds = generate(tiny_config());
    return ds;
}

std::vector<const Sample*> pick(const Dataset& ds, const std::vector<std::uint32_t>& idx,
                                std::size_t limit = SIZE_MAX) {
    std::vector<const Sample*> out;
    for (auto i : idx) {
        if (out.size() >= limit) break;
        out.push_back(&ds.samples[i]);
    }
    return out;
}

}  // namespace

TEST_CASE("default model maps a 16x16 complex frame to 512 probabilities") {
    MitnetConfig cfg;
    cfg.seed = 3;
    MitnetModel<float> model(cfg);

    Rng rng(4);
    ComplexTensor<float> x({2, 1, 16, 16});
    for (std::size_t i = 0; i < x.numel(); ++i) {
        x.re[i] = static_cast<float>(rng.normal());
        x.im[i] = static_cast<float>(rng.normal());
    }
    const Tensor<float> probs = model.forward(x);
    REQUIRE(probs.dim(0) == 2);
    REQUIRE(probs.dim(1) == 512);
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        CHECK(probs[i] > 0.0f);
        CHECK(probs[i] < 1.0f);
    }

    // same seed -> identical initial outputs
    MitnetModel<float> twin(cfg);
    const Tensor<float> probs2 = twin.forward(x);
    for (std::size_t i = 0; i < probs.numel(); ++i) CHECK(probs[i] == probs2[i]);
}

TEST_CASE("parameter count matches the closed-form sum") {
    MitnetConfig cfg;  // widths 16, 32, 64
    MitnetModel<float> model(cfg);

    auto cconv = [](int ci, int co) { return 2 * co * ci * 9 + 2 * co; };
    const std::size_t expected =
        cconv(1, 16) + 16 +            // enc1 + modReLU
        cconv(16, 32) + 32 +           // enc2
        cconv(32, 64) + 64 +           // bottleneck
        cconv(96, 32) + 32 +           // dec1 (skip concat doubles input channels)
        cconv(48, 16) + 16 +           // dec2
        (2 * 16 * 256) * 512 + 512;    // dense head
    CHECK(model.param_count() == expected);
    CHECK(expected == 4310784);
}

TEST_CASE("bce_loss pinned values") {
    const TriVector ones(4, 1.0);
    CHECK(bce_loss(ones, ones, TriVector(4, 1.0)) <= 1e-5);

    const TriVector half(4, 0.5);
    const TriVector targets = {0.0, 1.0, 0.0, 1.0};
    CHECK(bce_loss(half, targets, TriVector(4, 1.0)) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-9));

    CHECK(bce_loss({0.9}, {1.0}, {2.0}) ==
          doctest::Approx(-2.0 * std::log(0.9)).epsilon(1e-9));

    CHECK_THROWS_AS(bce_loss({0.5, 0.5}, {1.0}, {1.0, 1.0}), std::invalid_argument);
    CHECK(bce_loss(ones, ones, TriVector(4, 1.0)) >= 0.0);
}

TEST_CASE("binarize thresholding") {
    CHECK(binarize({0.4, 0.6}, 0.5) == TriVector{0.0, 1.0});
    CHECK(binarize({0.0, 1.0}, 0.5) == TriVector{0.0, 1.0});  // binary input unchanged

    // monotone: raising tau never turns a 0 into a 1
    Rng rng(6);
    TriVector v(64);
    for (auto& x : v) x = rng.uniform();
    const TriVector lo = binarize(v, 0.3), hi = binarize(v, 0.7);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(hi[i] <= lo[i]);

    CHECK_THROWS_AS(binarize(v, 1.5), std::invalid_argument);
}

TEST_CASE("full miniature model passes the gradient check") {
    MitnetConfig cfg;
    cfg.widths = {2, 4, 8};
    cfg.seed = 11;
    MitnetModel<double> model(cfg);

    Rng rng(12);
    ComplexTensor<double> x = random_complex<double>({1, 1, 16, 16}, rng);
    const Tensor<double> logits0 = model.forward_logits(x);
    const Tensor<double> proj = [&] {
        Tensor<double> p(logits0.shape());
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] = rng.normal();
        return p;
    }();

    std::vector<ParamRef<double>> params;
    model.collect_params(params);
    zero_params(params);
    model.forward_logits(x);
    const ComplexTensor<double> din = model.backward(proj);

    std::vector<DofView<double>> dofs;
    for (auto& p : params) dofs.push_back({p.value->data(), p.grad->data(), p.value->numel()});
    dofs.push_back({x.re.data(), din.re.data(), x.re.numel()});
    dofs.push_back({x.im.data(), din.im.data(), x.im.numel()});

    auto loss = [&] {
        const Tensor<double> logits = model.forward_logits(x);
        double s = 0.0;
        for (std::size_t i = 0; i < logits.numel(); ++i) s += logits[i] * proj[i];
        return s;
    };
    // the full check would perturb ~50k dofs; spot-check a deterministic
    // subset of every parameter tensor plus the input planes
    double worst = 0.0;
    for (auto& dof : dofs) {
        const std::size_t stride = std::max<std::size_t>(1, dof.n / 7);
        for (std::size_t i = 0; i < dof.n; i += stride) {
            DofView<double> one{dof.value + i, dof.grad + i, 1};
            worst = std::max(worst, grad_check_dofs<double>({one}, loss, 1e-5));
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("training is deterministic and learns on an overfit split") {
    const Dataset& ds = tiny_dataset();
    const auto train8 = pick(ds, ds.manifest.train_indices, 8);
    REQUIRE(train8.size() == 8);

    MitnetConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 21;
    const MitnetTrainResult a = train_ccnn(train8, train8, cfg);
    const MitnetTrainResult b = train_ccnn(train8, train8, cfg);
    REQUIRE(a.history.size() == b.history.size());
    CHECK(a.history[0].train_loss == b.history[0].train_loss);  // bit-identical

    // overfit mode: 8 samples, up to 500 epochs, plateau-stopped
    MitnetConfig ocfg;
    ocfg.epochs = 500;
    ocfg.patience = 12;
    ocfg.seed = 22;
    const MitnetTrainResult over = train_ccnn(train8, train8, ocfg);
    MitnetModel<float> model = make_model(over);
    double iou_sum = 0.0;
    for (const Sample* s : train8) {
        const TriVector pred = infer(model, s->frame);
        iou_sum += binary_vector_iou(binarize(pred, 0.5), s->label);
    }
    CHECK(iou_sum / 8.0 >= 95.0);

    // training loss decreased along the way
    CHECK(over.history.back().train_loss < over.history.front().train_loss);

    CHECK_THROWS_AS(train_ccnn({}, train8, cfg), std::invalid_argument);
}

TEST_CASE("inference is pure and checkpoints round-trip bit-exactly") {
    const Dataset& ds = tiny_dataset();
    const auto train8 = pick(ds, ds.manifest.train_indices, 8);
    MitnetConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 31;
    const MitnetTrainResult result = train_ccnn(train8, train8, cfg);

    MitnetModel<float> model = make_model(result);
    const Sample& s = ds.samples[ds.manifest.test_indices[0]];
    const TriVector v1 = infer(model, s.frame);
    const TriVector v2 = infer(model, s.frame);
    CHECK(v1 == v2);
    CHECK(v1.size() == 512);
    for (double p : v1) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }

    const fs::path file = fs::temp_directory_path() / "mitnet_test.ckpt";
    save_mitnet(result, file);
    MitnetModel<float> loaded = load_mitnet(file);
    CHECK(loaded.config().input_scale == model.config().input_scale);
    const TriVector v3 = infer(loaded, s.frame);
    CHECK(v3 == v1);
    fs::remove(file);
}
