#include "mit/baselines.hpp"

#include "mit/adam.hpp"
#include "mit/checkpoint.hpp"
#include "mit/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mit {

using nlohmann::json;

std::vector<double> magnitude_input(const ComplexFrame& frame) {
    std::vector<double> out(256);
    for (int i = 0; i < 256; ++i) out[i] = std::abs(frame.m[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Newton-Raphson
// ---------------------------------------------------------------------------

NrSolver::NrSolver(const TriMesh& mesh, const NrConfig& cfg) : mesh_(mesh), cfg_(cfg) {
    background_ = MaterialMap::uniform_background(cfg.background_sigma);
    background_.omega = 2.0 * 3.14159265358979323846 * cfg.frequency_hz;
    background_frame_ = forward(mesh_, background_);

    const double delta = cfg.perturbation_scale * cfg.background_sigma;
    jacobian_.resize(480, kTriCount);
    for (int t = 0; t < kTriCount; ++t) {
        MaterialMap perturbed = background_;
        perturbed.sigma[t] += delta;
        const ComplexFrame diff = forward(mesh_, perturbed) - background_frame_;
        jacobian_.col(t) = vectorize(diff) / delta;
    }

    // Smoothness (graph-Laplacian) damping: an identity prior picks peaky
    // minimum-norm updates that localize poorly on this mesh.
    Eigen::MatrixXd laplacian = Eigen::MatrixXd::Zero(kTriCount, kTriCount);
    for (int t = 0; t < kTriCount; ++t) {
        laplacian(t, t) = static_cast<double>(mesh.neighbors[t].size());
        for (int nb : mesh.neighbors[t]) laplacian(t, nb) = -1.0;
    }
    const Eigen::MatrixXd smoothness = laplacian.transpose() * laplacian;

    Eigen::MatrixXd normal = jacobian_.transpose() * jacobian_;
    alpha_ = cfg.alpha_scale * normal.trace() / smoothness.trace();
    normal += alpha_ * smoothness;
    normal_ldlt_.compute(normal);
}

Eigen::VectorXd NrSolver::vectorize(const ComplexFrame& frame) const {
    Eigen::VectorXd v(480);
    int k = 0;
    for (int e = 0; e < 16; ++e)
        for (int s = 0; s < 16; ++s) {
            if (e == s) continue;
            v[k] = frame.at(e, s).real();
            v[240 + k] = frame.at(e, s).imag();
            ++k;
        }
    return v;
}

ComplexFrame NrSolver::forward_differential(const TriVector& sigma) const {
    MaterialMap mat = background_;
    mat.sigma = sigma;
    return forward(mesh_, mat) - background_frame_;
}

NrResult NrSolver::reconstruct(const ComplexFrame& differential_frame) const {
    const Eigen::VectorXd d = vectorize(differential_frame);

    NrResult result;
    TriVector sigma(kTriCount, cfg_.background_sigma);
    Eigen::VectorXd residual = d;  // d - F(sigma_0), F(background) = 0
    double residual_norm = residual.norm();
    result.residuals.push_back(residual_norm);

    TriVector best_sigma = sigma;
    double best_norm = residual_norm;
    int consecutive_failures = 0;

    for (int it = 0; it < cfg_.max_iterations; ++it) {
        const Eigen::VectorXd update = normal_ldlt_.solve(jacobian_.transpose() * residual);
        if (update.norm() == 0.0) break;

        bool accepted = false;
        double step = 1.0;
        for (int bt = 0; bt <= cfg_.max_backtracks; ++bt, step *= 0.5) {
            TriVector candidate(kTriCount);
            for (int t = 0; t < kTriCount; ++t)
                candidate[t] = std::max(sigma[t] + step * update[t], 0.0);
            const Eigen::VectorXd r = d - vectorize(forward_differential(candidate));
            if (r.norm() < residual_norm) {
                sigma = std::move(candidate);
                residual = r;
                residual_norm = r.norm();
                result.residuals.push_back(residual_norm);
                accepted = true;
                break;
            }
        }
        ++result.iterations;

        if (accepted) {
            consecutive_failures = 0;
            if (residual_norm < best_norm) {
                best_norm = residual_norm;
                best_sigma = sigma;
            }
        } else if (++consecutive_failures >= 3) {
            result.diverged = true;
            break;
        }
    }

    // normalized positive contrast
    result.reconstruction.assign(kTriCount, 0.0);
    double max_contrast = 0.0;
    for (int t = 0; t < kTriCount; ++t)
        max_contrast = std::max(max_contrast, best_sigma[t] - cfg_.background_sigma);
    if (max_contrast > 0.0)
        for (int t = 0; t < kTriCount; ++t)
            result.reconstruction[t] =
                std::max(best_sigma[t] - cfg_.background_sigma, 0.0) / max_contrast;
    return result;
}

// ---------------------------------------------------------------------------
// Shared dense-net training machinery
// ---------------------------------------------------------------------------

std::string BaselineConfig::to_json() const {
    return json{{"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"class_weighted_loss", class_weighted_loss},
                {"early_stopping", early_stopping},
                {"patience", patience},
                {"input_scale", input_scale},
                {"seed", seed},
                {"pretrain_epochs", pretrain_epochs}}
        .dump();
}

BaselineConfig BaselineConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    BaselineConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.class_weighted_loss = j.value("class_weighted_loss", c.class_weighted_loss);
    c.early_stopping = j.value("early_stopping", c.early_stopping);
    c.patience = j.value("patience", c.patience);
    c.input_scale = j.value("input_scale", c.input_scale);
    c.seed = j.value("seed", c.seed);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    return c;
}

namespace {

double calibrate_magnitude_scale(const std::vector<const Sample*>& train) {
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const Sample* s : train)
        for (const double v : magnitude_input(s->frame)) {
            sum_sq += v * v;
            ++count;
        }
    const double rms = std::sqrt(sum_sq / std::max<std::size_t>(count, 1));
    if (!(rms > 0.0)) throw std::runtime_error("input scale: training magnitudes are all zero");
    return 1.0 / rms;
}

Tensor<float> magnitude_batch(const std::vector<const Sample*>& batch, double scale) {
    Tensor<float> x({static_cast<std::int64_t>(batch.size()), 256});
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto mag = magnitude_input(batch[k]->frame);
        for (int i = 0; i < 256; ++i) x[k * 256 + i] = static_cast<float>(mag[i] * scale);
    }
    return x;
}

Tensor<float> label_batch(const std::vector<const Sample*>& batch) {
    Tensor<float> t({static_cast<std::int64_t>(batch.size()), kTriCount});
    for (std::size_t k = 0; k < batch.size(); ++k)
        for (int i = 0; i < kTriCount; ++i)
            t[k * kTriCount + i] = static_cast<float>(batch[k]->label[i]);
    return t;
}

void fill_weights(const Tensor<float>& targets, bool class_weighted, Tensor<float>& weights) {
    if (!class_weighted) {
        weights.fill(1.0f);
        return;
    }
    double ones = 0.0;
    for (std::size_t i = 0; i < targets.numel(); ++i) ones += targets[i];
    const double total = static_cast<double>(targets.numel());
    const double zeros = total - ones;
    const float w1 = ones > 0.0 ? static_cast<float>(total / (2.0 * ones)) : 0.0f;
    const float w0 = zeros > 0.0 ? static_cast<float>(total / (2.0 * zeros)) : 0.0f;
    for (std::size_t i = 0; i < targets.numel(); ++i)
        weights[i] = targets[i] != 0.0f ? w1 : w0;
}

double weighted_bce(const Tensor<float>& probs, const Tensor<float>& targets,
                    const Tensor<float>& weights) {
    constexpr double eps = 1e-7;
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        const double p = std::clamp(static_cast<double>(probs[i]), eps, 1.0 - eps);
        loss -= weights[i] * (targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p));
    }
    return loss / static_cast<double>(probs.numel());
}

Tensor<float> sigmoid_of(const Tensor<float>& logits) {
    Tensor<float> p(logits.shape());
    for (std::size_t i = 0; i < logits.numel(); ++i)
        p[i] = 1.0f / (1.0f + std::exp(-logits[i]));
    return p;
}

/// BCE/Adam loop shared by the FCN and the stacked autoencoder head.
template <typename Model>
void train_supervised(Model& model, const std::vector<const Sample*>& train,
                      const std::vector<const Sample*>& val, const BaselineConfig& cfg,
                      std::vector<EpochStats>& history, std::vector<float>& best_state,
                      int& best_epoch) {
    std::vector<ParamRef<float>> params;
    model.collect_params(params);
    Adam<float> opt(params, cfg.learning_rate);

    auto snapshot = [&] {
        std::vector<float> blob;
        std::vector<Tensor<float>*> state;
        model.collect_state(state);
        for (const Tensor<float>* t : state)
            blob.insert(blob.end(), t->data(), t->data() + t->numel());
        return blob;
    };

    auto evaluate = [&](double& loss_out, double& iou_out) {
        model.set_training(false);
        double loss = 0.0, iou_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < val.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch(
                val.begin() + start, val.begin() + std::min(val.size(), start + cfg.batch_size));
            const Tensor<float> probs =
                sigmoid_of(model.forward_logits(magnitude_batch(batch, cfg.input_scale)));
            const Tensor<float> targets = label_batch(batch);
            Tensor<float> weights(targets.shape());
            fill_weights(targets, cfg.class_weighted_loss, weights);
            loss += weighted_bce(probs, targets, weights);
            ++batches;
            for (std::size_t k = 0; k < batch.size(); ++k) {
                TriVector pred(probs.data() + k * kTriCount, probs.data() + (k + 1) * kTriCount);
                iou_sum += binary_vector_iou(binarize(pred, 0.5), batch[k]->label);
            }
        }
        model.set_training(true);
        loss_out = loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        iou_out = iou_sum / static_cast<double>(val.size());
    };

    best_state = snapshot();
    double best_iou = -1.0;
    int since_best = 0;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed ^ 0x66636eULL);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < std::min(train.size(), start + cfg.batch_size); ++i)
                batch.push_back(train[order[i]]);

            const Tensor<float> logits =
                model.forward_logits(magnitude_batch(batch, cfg.input_scale));
            const Tensor<float> probs = sigmoid_of(logits);
            const Tensor<float> targets = label_batch(batch);
            Tensor<float> weights(targets.shape());
            fill_weights(targets, cfg.class_weighted_loss, weights);

            const double loss = weighted_bce(probs, targets, weights);
            if (!std::isfinite(loss))
                throw std::runtime_error("baseline training: loss diverged at epoch " +
                                         std::to_string(epoch));
            epoch_loss += loss;
            ++batches;

            Tensor<float> dlogits(probs.shape());
            const float scale = 1.0f / static_cast<float>(probs.numel());
            for (std::size_t i = 0; i < probs.numel(); ++i)
                dlogits[i] = weights[i] * (probs[i] - targets[i]) * scale;

            opt.zero_grad();
            model.backward(dlogits);
            opt.step();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        evaluate(stats.val_loss, stats.val_iou);
        history.push_back(stats);
        if (epoch % 10 == 0)
            std::fprintf(stderr, "dense net epoch %3d  loss %.5f  val IoU %.2f%%\n", epoch,
                         stats.train_loss, stats.val_iou);

        if (stats.val_iou > best_iou) {
            best_iou = stats.val_iou;
            best_epoch = epoch;
            best_state = snapshot();
            since_best = 0;
        } else if (cfg.early_stopping && ++since_best >= cfg.patience) {
            break;
        }
    }
}

template <typename Model>
void restore_state(Model& model, const std::vector<float>& blob) {
    std::vector<Tensor<float>*> state;
    model.collect_state(state);
    std::size_t off = 0;
    for (Tensor<float>* t : state) {
        if (off + t->numel() > blob.size())
            throw std::invalid_argument("restore_state: blob too small");
        std::copy(blob.begin() + off, blob.begin() + off + t->numel(), t->data());
        off += t->numel();
    }
    if (off != blob.size()) throw std::invalid_argument("restore_state: blob size mismatch");
}

/// One hidden-layer autoencoder trained with MSE; used for SAE pretraining.
class PretrainAe {
public:
    PretrainAe(std::int64_t in, std::int64_t hidden, std::uint64_t seed)
        : enc_(in, hidden), dec_(hidden, in) {
        Rng rng(seed);
        enc_.init(rng);
        dec_.init(rng, 0.5);
    }

    Tensor<float> reconstruct(const Tensor<float>& x) {
        return dec_.forward(act_.forward(enc_.forward(x)));
    }

    double mse(const Tensor<float>& x) {
        const Tensor<float> r = reconstruct(x);
        double s = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i)
            s += (r[i] - x[i]) * (r[i] - x[i]);
        return s / static_cast<double>(x.numel());
    }

    void train(const std::vector<Tensor<float>>& batches, int epochs, double lr) {
        std::vector<ParamRef<float>> params;
        enc_.collect_params(params);
        dec_.collect_params(params);
        Adam<float> opt(params, lr);
        for (int e = 0; e < epochs; ++e) {
            for (const Tensor<float>& x : batches) {
                const Tensor<float> r = reconstruct(x);
                Tensor<float> dr(r.shape());
                const float scale = 2.0f / static_cast<float>(r.numel());
                for (std::size_t i = 0; i < r.numel(); ++i) dr[i] = scale * (r[i] - x[i]);
                opt.zero_grad();
                enc_.backward(act_.backward(dec_.backward(dr)));
                opt.step();
            }
        }
    }

    Tensor<float> encode(const Tensor<float>& x) { return act_.forward(enc_.forward(x)); }
    Dense<float>& encoder() { return enc_; }

private:
    Dense<float> enc_;
    Relu<float> act_;
    Dense<float> dec_;
};

}  // namespace

FcnTrainResult train_fcn(const std::vector<const Sample*>& train,
                         const std::vector<const Sample*>& val, BaselineConfig cfg) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_fcn: empty training or validation split");
    if (cfg.input_scale == 0.0) cfg.input_scale = calibrate_magnitude_scale(train);

    FcnModel<float> model(cfg.seed);
    FcnTrainResult result;
    result.config = cfg;
    train_supervised(model, train, val, cfg, result.history, result.state, result.best_epoch);
    return result;
}

SaeTrainResult train_sae(const std::vector<const Sample*>& train,
                         const std::vector<const Sample*>& val, BaselineConfig cfg) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_sae: empty training or validation split");
    if (cfg.input_scale == 0.0) cfg.input_scale = calibrate_magnitude_scale(train);

    // pretraining batches over the training split
    std::vector<Tensor<float>> batches;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
        std::vector<const Sample*> batch(
            train.begin() + start,
            train.begin() + std::min(train.size(), start + cfg.batch_size));
        batches.push_back(magnitude_batch(batch, cfg.input_scale));
    }

    SaeTrainResult result;
    result.config = cfg;

    PretrainAe ae1(256, 128, cfg.seed ^ 0xae1);
    result.ae1_mse_init = ae1.mse(batches.front());
    ae1.train(batches, cfg.pretrain_epochs, cfg.learning_rate);
    result.ae1_mse_final = ae1.mse(batches.front());

    std::vector<Tensor<float>> code_batches;
    for (const Tensor<float>& x : batches) code_batches.push_back(ae1.encode(x));
    PretrainAe ae2(128, 64, cfg.seed ^ 0xae2);
    ae2.train(code_batches, cfg.pretrain_epochs, cfg.learning_rate);

    // stack: encoder weights carried over bit-exactly, supervised fine-tune
    SaeModel<float> model(cfg.seed);
    model.encoder1().weight() = ae1.encoder().weight();
    model.encoder1().bias() = ae1.encoder().bias();
    model.encoder2().weight() = ae2.encoder().weight();
    model.encoder2().bias() = ae2.encoder().bias();

    train_supervised(model, train, val, cfg, result.history, result.state, result.best_epoch);
    return result;
}

FcnModel<float> make_fcn(const FcnTrainResult& result) {
    FcnModel<float> model(result.config.seed);
    restore_state(model, result.state);
    model.set_training(false);
    return model;
}

SaeModel<float> make_sae(const SaeTrainResult& result) {
    SaeModel<float> model(result.config.seed);
    restore_state(model, result.state);
    return model;
}

namespace {

TriVector infer_real_net(const Tensor<float>& logits) {
    TriVector out(logits.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        out[i] = std::clamp(p, 1e-7, 1.0 - 1e-7);
    }
    return out;
}

}  // namespace

TriVector infer_fcn(FcnModel<float>& model, const ComplexFrame& frame, double input_scale) {
    model.set_training(false);
    Tensor<float> x({1, 256});
    const auto mag = magnitude_input(frame);
    for (int i = 0; i < 256; ++i) x[i] = static_cast<float>(mag[i] * input_scale);
    return infer_real_net(model.forward_logits(x));
}

TriVector infer_sae(SaeModel<float>& model, const ComplexFrame& frame, double input_scale) {
    Tensor<float> x({1, 256});
    const auto mag = magnitude_input(frame);
    for (int i = 0; i < 256; ++i) x[i] = static_cast<float>(mag[i] * input_scale);
    return infer_real_net(model.forward_logits(x));
}

void save_fcn(const FcnTrainResult& result, const std::filesystem::path& file) {
    FcnModel<float> model = make_fcn(result);
    std::vector<Tensor<float>*> state;
    model.collect_state(state);
    std::vector<const Tensor<float>*> cstate(state.begin(), state.end());
    save_checkpoint(file, "fcn", result.config.to_json(), cstate);
}

void save_sae(const SaeTrainResult& result, const std::filesystem::path& file) {
    SaeModel<float> model = make_sae(result);
    std::vector<Tensor<float>*> state;
    model.collect_state(state);
    std::vector<const Tensor<float>*> cstate(state.begin(), state.end());
    save_checkpoint(file, "sae", result.config.to_json(), cstate);
}

std::pair<FcnModel<float>, BaselineConfig> load_fcn(const std::filesystem::path& file) {
    const auto [kind, config_json] = read_checkpoint_header(file);
    if (kind != "fcn") throw std::runtime_error("load_fcn: checkpoint kind '" + kind + "'");
    const BaselineConfig cfg = BaselineConfig::from_json(config_json);
    FcnModel<float> model(cfg.seed);
    std::vector<Tensor<float>*> state;
    model.collect_state(state);
    load_checkpoint_state(file, "fcn", state);
    model.set_training(false);
    return {std::move(model), cfg};
}

std::pair<SaeModel<float>, BaselineConfig> load_sae(const std::filesystem::path& file) {
    const auto [kind, config_json] = read_checkpoint_header(file);
    if (kind != "sae") throw std::runtime_error("load_sae: checkpoint kind '" + kind + "'");
    const BaselineConfig cfg = BaselineConfig::from_json(config_json);
    SaeModel<float> model(cfg.seed);
    std::vector<Tensor<float>*> state;
    model.collect_state(state);
    load_checkpoint_state(file, "sae", state);
    return {std::move(model), cfg};
}

}  // namespace mit
