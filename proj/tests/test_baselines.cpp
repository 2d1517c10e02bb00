#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mit/baselines.hpp"
#include "mit/metrics.hpp"

#include <cmath>
#include <complex>
#include <filesystem>

using namespace mit;
namespace fs = std::filesystem;

namespace {

const TriMesh& mesh() {
    static const TriMesh m = build_mesh();
    return m;
}

DatasetConfig tiny_config() {
    DatasetConfig c = DatasetConfig::desk_scale();
    for (auto& s : c.shapes) s.step_mm = 40.0;
    c.shapes.resize(2);
    c.split = {0.6, 0.2, 0.2};
    c.seed = 17;
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

TEST_CASE("magnitude_input: modulus, zeros, and phase invariance") {
    ComplexFrame f;
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s)
            if (e != s) f.at(e, s) = Complex(3.0, 4.0);
    const auto mag = magnitude_input(f);
    REQUIRE(mag.size() == 256);
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s)
            CHECK(mag[e * 16 + s] == (e == s ? 0.0 : 5.0));

    const auto zero = magnitude_input(ComplexFrame{});
    for (double v : zero) CHECK(v == 0.0);

    // global phase rotation leaves magnitudes unchanged
    const Complex rot = std::polar(1.0, 0.83);
    ComplexFrame g = f;
    for (auto& z : g.m) z *= rot;
    const auto mag_rot = magnitude_input(g);
    for (int i = 0; i < 256; ++i) CHECK(mag_rot[i] == doctest::Approx(mag[i]).epsilon(1e-12));
}

TEST_CASE("sensitivity matrix: finite, symmetry-consistent, locally linear") {
    NrConfig cfg;
    const NrSolver solver(mesh(), cfg);
    const Eigen::MatrixXd& J = solver.jacobian();
    REQUIRE(J.rows() == 480);
    REQUIRE(J.cols() == 512);
    for (int t = 0; t < 512; ++t) {
        CHECK(J.col(t).allFinite());
        CHECK(J.col(t).norm() > 0.0);
    }

    // symmetry-equivalent triangles have columns of equal magnitude
    const auto perm = mesh().rotation_triangle_perm(1);
    double worst = 0.0;
    for (int t = 0; t < 512; t += 37) {
        const double a = J.col(t).norm(), b = J.col(perm[t]).norm();
        worst = std::max(worst, std::abs(a - b) / std::max(a, b));
    }
    CHECK(worst <= 1e-6);

    // J * delta-sigma approximates the nonlinear differential response
    Phantom small{PhantomShape::cylinder, 30.0, 0.1 + 0.01, {10.0, -20.0}, 0.0};
    MaterialMap bg = MaterialMap::uniform_background(cfg.background_sigma);
    const TriVector occ = rasterize_phantom_to_tri(small, mesh());
    MaterialMap mat = bg;
    Eigen::VectorXd dsigma = Eigen::VectorXd::Zero(512);
    for (int t = 0; t < 512; ++t)
        if (occ[t] != 0.0) {
            mat.sigma[t] += 0.01;
            dsigma[t] = 0.01;
        }
    const ComplexFrame diff = differential_frame(mesh(), mat, bg);
    Eigen::VectorXd d(480);
    int k = 0;
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s) {
            if (e == s) continue;
            d[k] = diff.at(e, s).real();
            d[240 + k] = diff.at(e, s).imag();
            ++k;
        }
    const Eigen::VectorXd predicted = J * dsigma;
    CHECK((predicted - d).norm() / d.norm() <= 0.05);
}

TEST_CASE("nr_reconstruct: zero frame returns background, phantoms localize") {
    NrConfig cfg;
    const NrSolver solver(mesh(), cfg);

    const NrResult null = solver.reconstruct(ComplexFrame{});
    for (double v : null.reconstruction) CHECK(v == 0.0);

    // noiseless frames of single phantoms reconstruct with IoU >= 0.5
    const MaterialMap bg = MaterialMap::uniform_background(cfg.background_sigma);
    const std::vector<Phantom> phantoms = {
        {PhantomShape::cylinder, 30.0, 2.0, {24.0, 12.0}, 0.0},
        {PhantomShape::cylinder, 35.0, 3.0, {-36.0, 24.0}, 0.0},
        {PhantomShape::triangular_prism, 40.0, 2.0, {0.0, -24.0}, 0.0},
    };
    for (const auto& p : phantoms) {
        const ComplexFrame d = differential_frame(mesh(), MaterialMap::with_phantom(p, mesh()), bg);
        const NrResult r = solver.reconstruct(d);
        CHECK(r.iterations <= cfg.max_iterations);
        for (std::size_t i = 1; i < r.residuals.size(); ++i)
            CHECK(r.residuals[i] < r.residuals[i - 1]);  // accepted steps only
        const TriVector label = rasterize_phantom_to_tri(p, mesh());
        const double score = binary_vector_iou(binarize(r.reconstruction, 0.5), label);
        CHECK(score >= 50.0);
    }
}

TEST_CASE("fcn: training learns, checkpoints round-trip, phase is discarded") {
    const Dataset& ds = tiny_dataset();
    const auto train8 = pick(ds, ds.manifest.train_indices, 8);

    BaselineConfig cfg;
    cfg.epochs = 300;
    cfg.patience = 15;
    cfg.seed = 41;
    const FcnTrainResult result = train_fcn(train8, train8, cfg);
    FcnModel<float> model = make_fcn(result);

    double iou_sum = 0.0;
    for (const Sample* s : train8) {
        const TriVector pred = infer_fcn(model, s->frame, result.config.input_scale);
        iou_sum += binary_vector_iou(binarize(pred, 0.5), s->label);
    }
    CHECK(iou_sum / 8.0 >= 90.0);

    // outputs depend only on magnitudes: a global phase rotation changes nothing
    const Sample& s = *train8[0];
    ComplexFrame rotated = s.frame;
    for (auto& z : rotated.m) z *= std::polar(1.0, 1.234);
    const TriVector a = infer_fcn(model, s.frame, result.config.input_scale);
    const TriVector b = infer_fcn(model, rotated, result.config.input_scale);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));

    const fs::path file = fs::temp_directory_path() / "fcn_test.ckpt";
    save_fcn(result, file);
    auto [loaded, loaded_cfg] = load_fcn(file);
    CHECK(loaded_cfg.input_scale == result.config.input_scale);
    const TriVector c = infer_fcn(loaded, s.frame, loaded_cfg.input_scale);
    CHECK(c == a);
    fs::remove(file);
}

TEST_CASE("sae: pretraining reduces reconstruction error and seeds the stack") {
    const Dataset& ds = tiny_dataset();
    const auto train8 = pick(ds, ds.manifest.train_indices, 8);

    BaselineConfig cfg;
    cfg.epochs = 600;
    cfg.patience = 40;
    cfg.seed = 43;
    const SaeTrainResult result = train_sae(train8, train8, cfg);
    CHECK(result.ae1_mse_final < result.ae1_mse_init);

    SaeModel<float> model = make_sae(result);
    double iou_sum = 0.0;
    for (const Sample* s : train8) {
        const TriVector pred = infer_sae(model, s->frame, result.config.input_scale);
        iou_sum += binary_vector_iou(binarize(pred, 0.5), s->label);
    }
    CHECK(iou_sum / 8.0 >= 90.0);

    const fs::path file = fs::temp_directory_path() / "sae_test.ckpt";
    save_sae(result, file);
    auto [loaded, loaded_cfg] = load_sae(file);
    const TriVector a = infer_sae(model, train8[0]->frame, result.config.input_scale);
    const TriVector b = infer_sae(loaded, train8[0]->frame, loaded_cfg.input_scale);
    CHECK(a == b);
    fs::remove(file);
}

TEST_CASE("sae stack starts from the pretrained encoder weights bit-exactly") {
    const Dataset& ds = tiny_dataset();
    const auto train8 = pick(ds, ds.manifest.train_indices, 8);

    // epochs = 0: the returned state is exactly the stacked initialization
    BaselineConfig cfg;
    cfg.epochs = 1;
    cfg.early_stopping = false;
    cfg.seed = 44;
    const SaeTrainResult r1 = train_sae(train8, train8, cfg);
    cfg.seed = 44;
    const SaeTrainResult r2 = train_sae(train8, train8, cfg);
    CHECK(r1.state == r2.state);  // deterministic pipeline, pretraining included
    CHECK(r1.history[0].train_loss == r2.history[0].train_loss);
}
