#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mit/gan.hpp"
#include "mit/metrics.hpp"
#include "mit/rng.hpp"

#include <cmath>
#include <filesystem>

using namespace mit;
namespace fs = std::filesystem;

namespace {

GanConfig tiny_cfg() {
    GanConfig cfg;
    cfg.base_width = 2;
    cfg.batch_size = 4;
    cfg.seed = 5;
    return cfg;
}

FieldImage disk_image(double cx, double cy, double radius) {
    Phantom p{PhantomShape::cylinder, 2.0 * radius, 2.0, {cx, cy}, 0.0};
    return rasterize_phantom_to_image(p);
}

Tensor<float> to_batch(const FieldImage& img) {
    Tensor<float> t({1, 1, 256, 256});
    std::copy(img.pixels.begin(), img.pixels.end(), t.data());
    return t;
}

}  // namespace

TEST_CASE("generator: 256x256 in, 256x256 out in [0,1], deterministic init") {
    const GanConfig cfg = tiny_cfg();
    GeneratorNet<float> g1(cfg), g2(cfg);
    g1.set_training(false);
    g2.set_training(false);

    const Tensor<float> x = to_batch(disk_image(10.0, -15.0, 20.0));
    const Tensor<float> y1 = g1.forward(x);
    REQUIRE(y1.dim(2) == 256);
    REQUIRE(y1.dim(3) == 256);
    REQUIRE(y1.dim(1) == 1);
    for (std::size_t i = 0; i < y1.numel(); ++i) {
        CHECK(y1[i] >= 0.0f);
        CHECK(y1[i] <= 1.0f);
    }

    const Tensor<float> y2 = g2.forward(x);
    bool same = true;
    for (std::size_t i = 0; i < y1.numel(); ++i) same = same && y1[i] == y2[i];
    CHECK(same);
}

TEST_CASE("discriminator: 16x16 patch map in (0,1), order-sensitive") {
    const GanConfig cfg = tiny_cfg();
    DiscriminatorNet<float> dis(cfg);
    dis.set_training(false);

    const Tensor<float> a = to_batch(disk_image(0.0, 0.0, 25.0));
    const Tensor<float> b = to_batch(disk_image(30.0, 10.0, 15.0));
    const Tensor<float> s1 = dis.forward(a, b);
    REQUIRE(s1.dim(1) == 1);
    REQUIRE(s1.dim(2) == 16);
    REQUIRE(s1.dim(3) == 16);
    for (std::size_t i = 0; i < s1.numel(); ++i) {
        CHECK(s1[i] > 0.0f);
        CHECK(s1[i] < 1.0f);
    }

    // swapping candidate and condition changes the scores on a random init
    const Tensor<float> s2 = dis.forward(b, a);
    bool differs = false;
    for (std::size_t i = 0; i < s1.numel(); ++i) differs = differs || s1[i] != s2[i];
    CHECK(differs);
}

TEST_CASE("gan_losses pinned values") {
    Tensor<float> half({1, 1, 16, 16});
    half.fill(0.5f);
    Tensor<float> img({1, 1, 256, 256});
    for (std::size_t i = 0; i < img.numel(); ++i) img[i] = 0.25f + (i % 3) * 0.2f;

    // x~ = t: reconstruction term vanishes
    const GanLosses same = gan_losses(half, half, img, img, 100.0);
    CHECK(same.reconstruction == 0.0);

    // D = 0.5 everywhere: both adversarial terms are ln 2
    CHECK(same.adversarial == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(same.discriminator == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));

    // doubling lambda doubles (generator loss - adversarial term)
    Tensor<float> other = img;
    for (std::size_t i = 0; i < other.numel(); ++i) other[i] *= 0.9f;
    const GanLosses l1 = gan_losses(half, half, other, img, 50.0);
    const GanLosses l2 = gan_losses(half, half, other, img, 100.0);
    CHECK(l2.generator - l2.adversarial ==
          doctest::Approx(2.0 * (l1.generator - l1.adversarial)).epsilon(1e-9));

    // L1 switch
    const GanLosses l1mode = gan_losses(half, half, other, img, 100.0, true);
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < img.numel(); ++i) mean_abs += std::abs(other[i] - img[i]);
    mean_abs /= img.numel();
    CHECK(l1mode.reconstruction == doctest::Approx(100.0 * mean_abs).epsilon(1e-6));
}

TEST_CASE("training: deterministic epoch losses, IoU cleanup, round-trip") {
    // production-style pairs: smoothed triangle renderings as conditions,
    // crisp renderings of the same labels as references
    const TriMesh mesh = build_mesh();
    std::vector<std::pair<FieldImage, FieldImage>> pairs;
    Rng rng(31);
    for (int k = 0; k < 10; ++k) {
        const double cx = rng.uniform(-40.0, 40.0), cy = rng.uniform(-40.0, 40.0);
        Phantom p{PhantomShape::cylinder, 30.0 + 5.0 * (k % 2), 2.0, {cx, cy}, 0.0};
        const TriVector label = rasterize_phantom_to_tri(p, mesh);
        pairs.push_back({tri_vector_to_image(smooth_tri(label, mesh), mesh),
                         tri_vector_to_image(label, mesh)});
    }

    GanConfig cfg = tiny_cfg();
    cfg.epochs = 2;
    const GanTrainResult r1 = train_gan(pairs, cfg);
    const GanTrainResult r2 = train_gan(pairs, cfg);
    REQUIRE(r1.history.size() == 2);
    CHECK(r1.history[0].g_loss == r2.history[0].g_loss);
    CHECK(r1.history[0].d_loss == r2.history[0].d_loss);

    // longer run: binarized IoU of the enhanced image beats the condition's
    cfg.epochs = 80;
    const GanTrainResult r3 = train_gan(pairs, cfg);
    GeneratorNet<float> gen = make_generator(r3);

    double pre_iou = 0.0, post_iou = 0.0;
    for (const auto& [cond, truth] : pairs) {
        const FieldImage out = enhance(gen, cond);
        const Mask truth_mask = binarize_image(truth, 0.5);
        pre_iou += iou(binarize_image(cond, 0.5), truth_mask);
        post_iou += iou(binarize_image(out, 0.5), truth_mask);
    }
    CHECK(post_iou > pre_iou);

    // enhancement is pure
    const FieldImage e1 = enhance(gen, pairs[0].first);
    const FieldImage e2 = enhance(gen, pairs[0].first);
    CHECK(e1.pixels == e2.pixels);
    for (float v : e1.pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // checkpoint round trip preserves the generator bit-exactly
    const fs::path file = fs::temp_directory_path() / "gan_test.ckpt";
    save_gan(r3, file);
    auto [loaded, loaded_cfg] = load_gan_generator(file);
    CHECK(loaded_cfg.base_width == cfg.base_width);
    const FieldImage e3 = enhance(loaded, pairs[0].first);
    CHECK(e3.pixels == e1.pixels);
    fs::remove(file);
}
