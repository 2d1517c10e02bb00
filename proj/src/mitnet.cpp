#include "mit/mitnet.hpp"

#include "mit/checkpoint.hpp"
#include "mit/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mit {

using nlohmann::json;

std::string MitnetConfig::to_json() const {
    return json{{"widths", widths},
                {"output_len", output_len},
                {"binarize_tau", binarize_tau},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"class_weighted_loss", class_weighted_loss},
                {"early_stopping", early_stopping},
                {"patience", patience},
                {"input_scale", input_scale},
                {"seed", seed}}
        .dump();
}

MitnetConfig MitnetConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    MitnetConfig c;
    c.widths = j.value("widths", c.widths);
    c.output_len = j.value("output_len", c.output_len);
    c.binarize_tau = j.value("binarize_tau", c.binarize_tau);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.class_weighted_loss = j.value("class_weighted_loss", c.class_weighted_loss);
    c.early_stopping = j.value("early_stopping", c.early_stopping);
    c.patience = j.value("patience", c.patience);
    c.input_scale = j.value("input_scale", c.input_scale);
    c.seed = j.value("seed", c.seed);
    return c;
}

double bce_loss(const TriVector& o, const TriVector& t, const TriVector& w) {
    if (o.size() != t.size() || o.size() != w.size())
        throw std::invalid_argument("bce_loss: length mismatch");
    constexpr double eps = 1e-7;
    double loss = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double p = std::clamp(o[i], eps, 1.0 - eps);
        loss -= w[i] * (t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p));
    }
    return loss / static_cast<double>(o.size());
}

TriVector binarize(const TriVector& v, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("binarize: tau must be in (0,1)");
    TriVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= tau ? 1.0 : 0.0;
    return out;
}

ComplexTensor<float> frames_to_batch(const std::vector<const ComplexFrame*>& frames,
                                     double input_scale) {
    const std::int64_t n = static_cast<std::int64_t>(frames.size());
    ComplexTensor<float> batch({n, 1, 16, 16});
    for (std::int64_t k = 0; k < n; ++k)
        for (int i = 0; i < 256; ++i) {
            batch.re[k * 256 + i] = static_cast<float>(frames[k]->m[i].real() * input_scale);
            batch.im[k * 256 + i] = static_cast<float>(frames[k]->m[i].imag() * input_scale);
        }
    return batch;
}

TriVector infer(MitnetModel<float>& model, const ComplexFrame& frame) {
    const ComplexTensor<float> x = frames_to_batch({&frame}, model.config().input_scale);
    const Tensor<float> logits = model.forward_logits(x);
    // probabilities at loss-clipping precision, strictly inside (0, 1)
    TriVector out(logits.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
        out[i] = std::clamp(p, 1e-7, 1.0 - 1e-7);
    }
    return out;
}

std::vector<float> flatten_params(MitnetModel<float>& model) {
    std::vector<ParamRef<float>> ps;
    model.collect_params(ps);
    std::vector<float> blob;
    for (const auto& p : ps)
        blob.insert(blob.end(), p.value->data(), p.value->data() + p.value->numel());
    return blob;
}

void unflatten_params(MitnetModel<float>& model, const std::vector<float>& blob) {
    std::vector<ParamRef<float>> ps;
    model.collect_params(ps);
    std::size_t off = 0;
    for (auto& p : ps) {
        if (off + p.value->numel() > blob.size())
            throw std::invalid_argument("unflatten_params: blob too small");
        std::copy(blob.begin() + off, blob.begin() + off + p.value->numel(), p.value->data());
        off += p.value->numel();
    }
    if (off != blob.size()) throw std::invalid_argument("unflatten_params: blob size mismatch");
}

namespace {

/// Unit-RMS calibration over the training frames (both quadratures pooled).
double calibrate_input_scale(const std::vector<const Sample*>& train) {
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const Sample* s : train) {
        for (const auto& z : s->frame.m) {
            sum_sq += std::norm(z);
            count += 2;
        }
    }
    const double rms = std::sqrt(sum_sq / std::max<std::size_t>(count, 1));
    if (!(rms > 0.0)) throw std::runtime_error("input scale: training frames are all zero");
    return 1.0 / rms;
}

/// Per-batch inverse-class-frequency weights: w_i = n / (2 * count(class_i)).
void fill_batch_weights(const Tensor<float>& targets, bool class_weighted,
                        Tensor<float>& weights) {
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

double batch_bce(const Tensor<float>& probs, const Tensor<float>& targets,
                 const Tensor<float>& weights) {
    constexpr double eps = 1e-7;
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        const double p = std::clamp(static_cast<double>(probs[i]), eps, 1.0 - eps);
        loss -= weights[i] * (targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p));
    }
    return loss / static_cast<double>(probs.dim(1)) / static_cast<double>(probs.dim(0));
}

}  // namespace

MitnetTrainResult train_ccnn(const std::vector<const Sample*>& train,
                             const std::vector<const Sample*>& val, MitnetConfig cfg) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_ccnn: empty training or validation split");
    if (cfg.input_scale == 0.0) cfg.input_scale = calibrate_input_scale(train);

    MitnetModel<float> model(cfg);
    std::vector<ParamRef<float>> params;
    model.collect_params(params);
    Adam<float> opt(params, cfg.learning_rate);

    const int n512 = cfg.output_len;
    auto make_targets = [&](const std::vector<const Sample*>& batch) {
        Tensor<float> t({static_cast<std::int64_t>(batch.size()), n512});
        for (std::size_t k = 0; k < batch.size(); ++k)
            for (int i = 0; i < n512; ++i) t[k * n512 + i] = static_cast<float>(batch[k]->label[i]);
        return t;
    };

    auto evaluate = [&](const std::vector<const Sample*>& split, double& loss_out,
                        double& iou_out) {
        double loss = 0.0, iou_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < split.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch(
                split.begin() + start,
                split.begin() + std::min(split.size(), start + cfg.batch_size));
            std::vector<const ComplexFrame*> frames;
            for (const Sample* s : batch) frames.push_back(&s->frame);
            const Tensor<float> probs = model.forward(frames_to_batch(frames, cfg.input_scale));
            const Tensor<float> targets = make_targets(batch);
            Tensor<float> weights(targets.shape());
            fill_batch_weights(targets, cfg.class_weighted_loss, weights);
            loss += batch_bce(probs, targets, weights);
            ++batches;
            for (std::size_t k = 0; k < batch.size(); ++k) {
                TriVector pred(probs.data() + k * n512, probs.data() + (k + 1) * n512);
                iou_sum += binary_vector_iou(binarize(pred, cfg.binarize_tau), batch[k]->label);
            }
        }
        loss_out = loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        iou_out = iou_sum / static_cast<double>(split.size());
    };

    MitnetTrainResult result;
    result.config = cfg;
    result.best_state = flatten_params(model);
    double best_iou = -1.0;
    int since_best = 0;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed ^ 0x747261696eULL);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < std::min(train.size(), start + cfg.batch_size); ++i)
                batch.push_back(train[order[i]]);
            std::vector<const ComplexFrame*> frames;
            for (const Sample* s : batch) frames.push_back(&s->frame);

            const Tensor<float> probs = model.forward(frames_to_batch(frames, cfg.input_scale));
            const Tensor<float> targets = make_targets(batch);
            Tensor<float> weights(targets.shape());
            fill_batch_weights(targets, cfg.class_weighted_loss, weights);

            const double loss = batch_bce(probs, targets, weights);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_ccnn: loss diverged (NaN/inf) at epoch " +
                                         std::to_string(epoch));
            epoch_loss += loss;
            ++batches;

            // d(loss)/d(logit) = w * (o - t) / n, averaged over the batch
            Tensor<float> dlogits(probs.shape());
            const float scale = 1.0f / static_cast<float>(n512) /
                                static_cast<float>(batch.size());
            for (std::size_t i = 0; i < probs.numel(); ++i)
                dlogits[i] = weights[i] * (probs[i] - targets[i]) * scale;

            opt.zero_grad();
            model.backward(dlogits);
            opt.step();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1));
        evaluate(val, stats.val_loss, stats.val_iou);
        result.history.push_back(stats);
        std::fprintf(stderr, "ccnn epoch %3d  loss %.5f  val loss %.5f  val IoU %.2f%%\n",
                     epoch, stats.train_loss, stats.val_loss, stats.val_iou);

        if (stats.val_iou > best_iou) {
            best_iou = stats.val_iou;
            result.best_epoch = epoch;
            result.best_state = flatten_params(model);
            since_best = 0;
        } else if (cfg.early_stopping && ++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

MitnetModel<float> make_model(const MitnetTrainResult& result) {
    MitnetModel<float> model(result.config);
    unflatten_params(model, result.best_state);
    return model;
}

void save_mitnet(const MitnetTrainResult& result, const std::filesystem::path& file) {
    MitnetModel<float> model = make_model(result);
    std::vector<ParamRef<float>> ps;
    model.collect_params(ps);
    std::vector<const Tensor<float>*> state;
    for (const auto& p : ps) state.push_back(p.value);
    save_checkpoint(file, "mitnet", result.config.to_json(), state);
}

MitnetModel<float> load_mitnet(const std::filesystem::path& file) {
    const auto [kind, config_json] = read_checkpoint_header(file);
    if (kind != "mitnet")
        throw std::runtime_error("load_mitnet: checkpoint kind '" + kind + "'");
    MitnetModel<float> model(MitnetConfig::from_json(config_json));
    std::vector<ParamRef<float>> ps;
    model.collect_params(ps);
    std::vector<Tensor<float>*> state;
    for (auto& p : ps) state.push_back(p.value);
    load_checkpoint_state(file, "mitnet", state);
    return model;
}

}  // namespace mit
