#pragma once

#include "mit/dataset.hpp"
#include "mit/forward.hpp"
#include "mit/layers.hpp"
#include "mit/mitnet.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

namespace mit {

/// Real-valued input for the magnitude-only baselines: elementwise modulus of
/// the frame, row-major, length 256.
std::vector<double> magnitude_input(const ComplexFrame& frame);

// ---------------------------------------------------------------------------
// Newton-Raphson (damped Gauss-Newton over the FEM forward model)
// ---------------------------------------------------------------------------

struct NrConfig {
    int max_iterations = 10;
    double alpha_scale = 1e-3;       // Tikhonov: alpha = scale * trace(JtJ)/512
    int max_backtracks = 4;          // step halvings per rejected update
    double background_sigma = 0.1;   // S/m
    double frequency_hz = 1e6;
    double perturbation_scale = 1e-3;  // delta = scale * background sigma
};

struct NrResult {
    TriVector reconstruction;        // normalized positive contrast in [0, 1]
    std::vector<double> residuals;   // accepted-step residual norms
    int iterations = 0;
    bool diverged = false;
};

/// Precomputes the background system and the 480x512 sensitivity matrix
/// (240 off-diagonal complex channels stacked real-then-imaginary), then
/// solves frames with damped, Tikhonov-regularized Gauss-Newton steps.
class NrSolver {
public:
    NrSolver(const TriMesh& mesh, const NrConfig& cfg);

    NrResult reconstruct(const ComplexFrame& differential_frame) const;

    const Eigen::MatrixXd& jacobian() const { return jacobian_; }
    const NrConfig& config() const { return cfg_; }

private:
    Eigen::VectorXd vectorize(const ComplexFrame& frame) const;
    ComplexFrame forward_differential(const TriVector& sigma) const;

    const TriMesh& mesh_;
    NrConfig cfg_;
    MaterialMap background_;
    ComplexFrame background_frame_;
    Eigen::MatrixXd jacobian_;                  // 480 x 512
    Eigen::LDLT<Eigen::MatrixXd> normal_ldlt_;  // JtJ + alpha I
    double alpha_ = 0.0;
};

// ---------------------------------------------------------------------------
// FCN: 256 -> 360 -> 360 -> 512 dense stack with batch norm, sigmoid output
// ---------------------------------------------------------------------------

template <typename T>
class FcnModel {
public:
    explicit FcnModel(std::uint64_t seed)
        : d1_(256, 360), bn1_(360), d2_(360, 360), bn2_(360), d3_(360, kTriCount) {
        Rng rng(seed);
        d1_.init(rng);
        d2_.init(rng);
        d3_.init(rng, 0.1);
    }

    void set_training(bool training) {
        bn1_.set_training(training);
        bn2_.set_training(training);
    }

    Tensor<T> forward_logits(const Tensor<T>& x) {
        Tensor<T> a = r1_.forward(bn1_.forward(d1_.forward(x)));
        Tensor<T> b = r2_.forward(bn2_.forward(d2_.forward(a)));
        return d3_.forward(b);
    }

    Tensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> db = r2_.backward(d3_.backward(dlogits));
        Tensor<T> da = r1_.backward(d2_.backward(bn2_.backward(db)));
        return d1_.backward(bn1_.backward(da));
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        d1_.collect_params(out);
        bn1_.collect_params(out);
        d2_.collect_params(out);
        bn2_.collect_params(out);
        d3_.collect_params(out);
    }

    void collect_state(std::vector<Tensor<T>*>& out) {
        std::vector<ParamRef<T>> ps;
        collect_params(ps);
        for (auto& p : ps) out.push_back(p.value);
        out.push_back(&bn1_.running_mean());
        out.push_back(&bn1_.running_var());
        out.push_back(&bn2_.running_mean());
        out.push_back(&bn2_.running_var());
    }

private:
    Dense<T> d1_;
    BatchNorm<T> bn1_;
    Relu<T> r1_;
    Dense<T> d2_;
    BatchNorm<T> bn2_;
    Relu<T> r2_;
    Dense<T> d3_;
};

// ---------------------------------------------------------------------------
// SAE: two pretrained autoencoders (256->128->256 and 128->64->128) stacked
// with a 512-unit supervised decoder head
// ---------------------------------------------------------------------------

template <typename T>
class SaeModel {
public:
    explicit SaeModel(std::uint64_t seed) : e1_(256, 128), e2_(128, 64), head_(64, kTriCount) {
        Rng rng(seed);
        e1_.init(rng);
        e2_.init(rng);
        head_.init(rng, 0.1);
    }

    void set_training(bool) {}  // no layers with train/eval behavior

    Tensor<T> hidden1(const Tensor<T>& x) { return s1_.forward(e1_.forward(x)); }

    Tensor<T> forward_logits(const Tensor<T>& x) {
        Tensor<T> h1 = s1_.forward(e1_.forward(x));
        Tensor<T> h2 = s2_.forward(e2_.forward(h1));
        return head_.forward(h2);
    }

    Tensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> dh2 = s2_.backward(head_.backward(dlogits));
        Tensor<T> dh1 = s1_.backward(e2_.backward(dh2));
        return e1_.backward(dh1);
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        e1_.collect_params(out);
        e2_.collect_params(out);
        head_.collect_params(out);
    }

    void collect_state(std::vector<Tensor<T>*>& out) {
        std::vector<ParamRef<T>> ps;
        collect_params(ps);
        for (auto& p : ps) out.push_back(p.value);
    }

    Dense<T>& encoder1() { return e1_; }
    Dense<T>& encoder2() { return e2_; }

private:
    Dense<T> e1_;
    Relu<T> s1_;
    Dense<T> e2_;
    Relu<T> s2_;
    Dense<T> head_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct BaselineConfig {
    double learning_rate = 0.001;
    int epochs = 200;
    int batch_size = 16;
    bool class_weighted_loss = true;
    bool early_stopping = true;
    int patience = 20;
    double input_scale = 0.0;  // 0 = unit-RMS calibration on the training split
    std::uint64_t seed = 1;
    int pretrain_epochs = 40;  // SAE autoencoder phases

    std::string to_json() const;
    static BaselineConfig from_json(const std::string& text);
};

struct FcnTrainResult {
    BaselineConfig config;
    std::vector<float> state;
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

struct SaeTrainResult {
    BaselineConfig config;
    std::vector<float> state;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double ae1_mse_init = 0.0;   // reconstruction MSE before/after pretraining
    double ae1_mse_final = 0.0;
};

FcnTrainResult train_fcn(const std::vector<const Sample*>& train,
                         const std::vector<const Sample*>& val, BaselineConfig cfg);
SaeTrainResult train_sae(const std::vector<const Sample*>& train,
                         const std::vector<const Sample*>& val, BaselineConfig cfg);

FcnModel<float> make_fcn(const FcnTrainResult& result);
SaeModel<float> make_sae(const SaeTrainResult& result);

TriVector infer_fcn(FcnModel<float>& model, const ComplexFrame& frame, double input_scale);
TriVector infer_sae(SaeModel<float>& model, const ComplexFrame& frame, double input_scale);

void save_fcn(const FcnTrainResult& result, const std::filesystem::path& file);
void save_sae(const SaeTrainResult& result, const std::filesystem::path& file);
std::pair<FcnModel<float>, BaselineConfig> load_fcn(const std::filesystem::path& file);
std::pair<SaeModel<float>, BaselineConfig> load_sae(const std::filesystem::path& file);

}  // namespace mit
