#include "mit/gan.hpp"

#include "mit/adam.hpp"
#include "mit/checkpoint.hpp"
#include "mit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mit {

using nlohmann::json;

std::string GanConfig::to_json() const {
    return json{{"base_width", base_width},
                {"lambda", lambda},
                {"l1_reconstruction", l1_reconstruction},
                {"learning_rate", learning_rate},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"early_stopping", early_stopping},
                {"patience", patience},
                {"seed", seed}}
        .dump();
}

GanConfig GanConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    GanConfig c;
    c.base_width = j.value("base_width", c.base_width);
    c.lambda = j.value("lambda", c.lambda);
    c.l1_reconstruction = j.value("l1_reconstruction", c.l1_reconstruction);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.early_stopping = j.value("early_stopping", c.early_stopping);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    return c;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

template <typename T>
GeneratorNet<T>::GeneratorNet(const GanConfig& cfg) : w_(cfg.base_width) {
    if (w_ <= 0) throw std::invalid_argument("generator: base width must be positive");
    const int w = w_;
    const int stage_in[5] = {1, w, 2 * w, 4 * w, 8 * w};
    const int stage_out[5] = {w, 2 * w, 4 * w, 8 * w, 16 * w};
    for (int s = 0; s < 5; ++s) {
        enc_.emplace_back(stage_in[s], stage_out[s], 3, 1, 1);
        enc_.emplace_back(stage_out[s], stage_out[s], 3, 1, 1);
        enc_bn_.emplace_back(stage_out[s]);
        enc_bn_.emplace_back(stage_out[s]);
        enc_act_.emplace_back();
        enc_act_.emplace_back();
        pool_.emplace_back();
    }
    // four skip-concatenated upsampling stages, then the output stage
    dec_.emplace_back(16 * w, 8 * w, 4, 2, 1);   // 8 -> 16, concat s5 (16w)
    dec_.emplace_back(24 * w, 4 * w, 4, 2, 1);   // 16 -> 32, concat s4 (8w)
    dec_.emplace_back(12 * w, 2 * w, 4, 2, 1);   // 32 -> 64, concat s3 (4w)
    dec_.emplace_back(6 * w, w, 4, 2, 1);        // 64 -> 128, concat s2 (2w)
    dec_.emplace_back(3 * w, 1, 4, 2, 1);        // 128 -> 256, sigmoid output
    const int dec_out[4] = {8 * w, 4 * w, 2 * w, w};
    for (int d = 0; d < 4; ++d) {
        dec_bn_.emplace_back(dec_out[d]);
        dec_act_.emplace_back();
    }

    Rng rng(cfg.seed);
    for (auto& c : enc_) c.init(rng);
    for (auto& d : dec_) d.init(rng);
    // tiny output-layer gain: with the residual condition path the untrained
    // net then starts as the identity map
    Rng out_rng(cfg.seed ^ 0x0907ULL);
    dec_[4].init(out_rng, 1e-4);
}

template <typename T>
Tensor<T> GeneratorNet<T>::forward(const Tensor<T>& x) {
    skips_.clear();
    Tensor<T> cur = x;
    for (int s = 0; s < 5; ++s) {
        cur = enc_act_[2 * s].forward(enc_bn_[2 * s].forward(enc_[2 * s].forward(cur)));
        cur = enc_act_[2 * s + 1].forward(
            enc_bn_[2 * s + 1].forward(enc_[2 * s + 1].forward(cur)));
        skips_.push_back(cur);
        cur = pool_[s].forward(cur);
    }
    for (int d = 0; d < 4; ++d) {
        cur = dec_act_[d].forward(dec_bn_[d].forward(dec_[d].forward(cur)));
        cur = concat_channels(cur, skips_[4 - d]);
    }
    // residual identity path: the condition enters the output in logit space,
    // so an untrained net starts near the identity map
    Tensor<T> z = dec_[4].forward(cur);
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const T c = std::clamp(x[i], T(0.02), T(0.98));
        z[i] += std::log(c / (T(1) - c));
    }
    return out_act_.forward(z);
}

template <typename T>
Tensor<T> GeneratorNet<T>::backward(const Tensor<T>& doutput) {
    const int w = w_;
    Tensor<T> d = dec_[4].backward(out_act_.backward(doutput));

    // peel the decoder, collecting gradients that flow into the skips
    std::vector<Tensor<T>> skip_grads(5);
    const int dec_out[4] = {8 * w, 4 * w, 2 * w, w};
    for (int k = 3; k >= 0; --k) {
        auto [dcur, dskip] = split_channels(d, dec_out[k]);
        skip_grads[4 - k] = std::move(dskip);
        d = dec_[k].backward(dec_bn_[k].backward(dec_act_[k].backward(dcur)));
    }

    // encoder in reverse; skips feed both the pool and the decoder concat
    for (int s = 4; s >= 0; --s) {
        Tensor<T> dskip = pool_[s].backward(d);
        if (skip_grads[s].numel() > 0)
            for (std::size_t i = 0; i < dskip.numel(); ++i) dskip[i] += skip_grads[s][i];
        Tensor<T> dmid = enc_[2 * s + 1].backward(
            enc_bn_[2 * s + 1].backward(enc_act_[2 * s + 1].backward(dskip)));
        d = enc_[2 * s].backward(enc_bn_[2 * s].backward(enc_act_[2 * s].backward(dmid)));
    }
    return d;
}

template <typename T>
void GeneratorNet<T>::set_training(bool training) {
    for (auto& bn : enc_bn_) bn.set_training(training);
    for (auto& bn : dec_bn_) bn.set_training(training);
}

template <typename T>
void GeneratorNet<T>::collect_params(std::vector<ParamRef<T>>& out) {
    for (auto& c : enc_) c.collect_params(out);
    for (auto& bn : enc_bn_) bn.collect_params(out);
    for (auto& d : dec_) d.collect_params(out);
    for (auto& bn : dec_bn_) bn.collect_params(out);
}

template <typename T>
void GeneratorNet<T>::collect_state(std::vector<Tensor<T>*>& out) {
    std::vector<ParamRef<T>> ps;
    collect_params(ps);
    for (auto& p : ps) out.push_back(p.value);
    for (auto& bn : enc_bn_) {
        out.push_back(&bn.running_mean());
        out.push_back(&bn.running_var());
    }
    for (auto& bn : dec_bn_) {
        out.push_back(&bn.running_mean());
        out.push_back(&bn.running_var());
    }
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

template <typename T>
DiscriminatorNet<T>::DiscriminatorNet(const GanConfig& cfg)
    : score_(8 * cfg.base_width, 1, 3, 1, 1) {
    const int w = cfg.base_width;
    conv_.emplace_back(2, w, 4, 2, 1);
    conv_.emplace_back(w, 2 * w, 4, 2, 1);
    conv_.emplace_back(2 * w, 4 * w, 4, 2, 1);
    conv_.emplace_back(4 * w, 8 * w, 4, 2, 1);
    for (int k = 0; k < 4; ++k) act_.emplace_back(0.2);
    for (int k = 0; k < 3; ++k) bn_.emplace_back((2 << k) * w);

    Rng rng(cfg.seed ^ 0xd15cULL);
    for (auto& c : conv_) c.init(rng);
    score_.init(rng);
}

template <typename T>
Tensor<T> DiscriminatorNet<T>::forward(const Tensor<T>& condition, const Tensor<T>& candidate) {
    Tensor<T> cur = concat_channels(condition, candidate);
    cur = act_[0].forward(conv_[0].forward(cur));
    for (int k = 1; k < 4; ++k)
        cur = act_[k].forward(bn_[k - 1].forward(conv_[k].forward(cur)));
    return score_act_.forward(score_.forward(cur));
}

template <typename T>
Tensor<T> DiscriminatorNet<T>::backward(const Tensor<T>& dscores) {
    Tensor<T> d = score_.backward(score_act_.backward(dscores));
    for (int k = 3; k >= 1; --k)
        d = conv_[k].backward(bn_[k - 1].backward(act_[k].backward(d)));
    d = conv_[0].backward(act_[0].backward(d));
    auto [dcond, dcand] = split_channels(d, 1);
    (void)dcond;
    return std::move(dcand);
}

template <typename T>
void DiscriminatorNet<T>::set_training(bool training) {
    for (auto& bn : bn_) bn.set_training(training);
}

template <typename T>
void DiscriminatorNet<T>::collect_params(std::vector<ParamRef<T>>& out) {
    for (auto& c : conv_) c.collect_params(out);
    for (auto& bn : bn_) bn.collect_params(out);
    score_.collect_params(out);
}

template <typename T>
void DiscriminatorNet<T>::collect_state(std::vector<Tensor<T>*>& out) {
    std::vector<ParamRef<T>> ps;
    collect_params(ps);
    for (auto& p : ps) out.push_back(p.value);
    for (auto& bn : bn_) {
        out.push_back(&bn.running_mean());
        out.push_back(&bn.running_var());
    }
}

template class GeneratorNet<float>;
template class DiscriminatorNet<float>;

// ---------------------------------------------------------------------------
// Losses and training
// ---------------------------------------------------------------------------

namespace {
constexpr double kClip = 1e-7;

double mean_log(const Tensor<float>& scores, bool one_minus) {
    double s = 0.0;
    for (std::size_t i = 0; i < scores.numel(); ++i) {
        const double p =
            std::clamp(one_minus ? 1.0 - scores[i] : static_cast<double>(scores[i]), kClip,
                       1.0 - kClip);
        s += std::log(p);
    }
    return s / static_cast<double>(scores.numel());
}
}  // namespace

GanLosses gan_losses(const Tensor<float>& d_real, const Tensor<float>& d_fake,
                     const Tensor<float>& fake, const Tensor<float>& truth, double lambda,
                     bool l1) {
    if (!fake.same_shape(truth)) throw std::invalid_argument("gan_losses: shape mismatch");
    GanLosses out;
    out.discriminator = -mean_log(d_real, false) - mean_log(d_fake, true);
    out.adversarial = -mean_log(d_fake, false);
    double rec = 0.0;
    if (l1) {
        for (std::size_t i = 0; i < fake.numel(); ++i) rec += std::abs(fake[i] - truth[i]);
        rec /= static_cast<double>(fake.numel());
    } else {
        for (std::size_t i = 0; i < fake.numel(); ++i)
            rec += (fake[i] - truth[i]) * static_cast<double>(fake[i] - truth[i]);
        rec = std::sqrt(rec);
    }
    out.reconstruction = lambda * rec;
    out.generator = out.adversarial + out.reconstruction;
    return out;
}

namespace {

Tensor<float> image_batch(const std::vector<const FieldImage*>& images) {
    const std::int64_t n = static_cast<std::int64_t>(images.size());
    Tensor<float> batch({n, 1, FieldImage::kRes, FieldImage::kRes});
    for (std::int64_t k = 0; k < n; ++k)
        std::copy(images[k]->pixels.begin(), images[k]->pixels.end(),
                  batch.data() + k * FieldImage::kRes * FieldImage::kRes);
    return batch;
}

std::vector<float> snapshot_state(std::vector<Tensor<float>*>& state) {
    std::vector<float> blob;
    for (const Tensor<float>* t : state)
        blob.insert(blob.end(), t->data(), t->data() + t->numel());
    return blob;
}

void restore_state_blob(std::vector<Tensor<float>*>& state, const std::vector<float>& blob,
                        std::size_t& off) {
    for (Tensor<float>* t : state) {
        if (off + t->numel() > blob.size())
            throw std::invalid_argument("gan restore: state blob too small");
        std::copy(blob.begin() + off, blob.begin() + off + t->numel(), t->data());
        off += t->numel();
    }
}

}  // namespace

GanTrainResult train_gan(const std::vector<std::pair<FieldImage, FieldImage>>& pairs,
                         GanConfig cfg,
                         const std::vector<std::pair<FieldImage, FieldImage>>& eval_pairs) {
    if (pairs.empty()) throw std::invalid_argument("train_gan: no training pairs");

    GeneratorNet<float> gen(cfg);
    DiscriminatorNet<float> dis(cfg);
    gen.set_training(true);
    dis.set_training(true);

    std::vector<ParamRef<float>> gparams, dparams;
    gen.collect_params(gparams);
    dis.collect_params(dparams);
    Adam<float> opt_g(gparams, cfg.learning_rate);
    Adam<float> opt_d(dparams, cfg.learning_rate);

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed ^ 0x67616eULL);

    GanTrainResult result;
    result.config = cfg;

    // held-out enhancement quality: mean binarized IoU of G(cond) vs truth
    auto eval_enhanced_iou = [&]() {
        gen.set_training(false);
        double sum = 0.0;
        for (std::size_t start = 0; start < eval_pairs.size(); start += cfg.batch_size) {
            std::vector<const FieldImage*> conds, truths;
            for (std::size_t i = start; i < std::min(eval_pairs.size(), start + cfg.batch_size);
                 ++i) {
                conds.push_back(&eval_pairs[i].first);
                truths.push_back(&eval_pairs[i].second);
            }
            const Tensor<float> fake = gen.forward(image_batch(conds));
            const std::int64_t px = FieldImage::kRes * FieldImage::kRes;
            for (std::size_t k = 0; k < conds.size(); ++k) {
                std::size_t inter = 0, uni = 0;
                const float* f = fake.data() + k * px;
                const float* t = truths[k]->pixels.data();
                for (std::int64_t i = 0; i < px; ++i) {
                    const bool a = f[i] >= 0.5f, b = t[i] >= 0.5f;
                    inter += a && b;
                    uni += a || b;
                }
                sum += uni ? 100.0 * inter / uni : 100.0;
            }
        }
        gen.set_training(true);
        return sum / static_cast<double>(eval_pairs.size());
    };

    auto snapshot = [&](GanTrainResult& into) {
        std::vector<Tensor<float>*> gstate, dstate;
        gen.collect_state(gstate);
        dis.collect_state(dstate);
        into.generator_state = snapshot_state(gstate);
        into.discriminator_state = snapshot_state(dstate);
    };

    double best_eval = -1.0;
    int since_best = 0;
    if (!eval_pairs.empty()) {
        // calibrate batch-norm running statistics (forward only), then admit
        // the untrained net — identity by construction — as a candidate
        for (int sweep = 0; sweep < 3; ++sweep) {
            for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
                std::vector<const FieldImage*> conds;
                for (std::size_t i = start; i < std::min(pairs.size(), start + cfg.batch_size);
                     ++i)
                    conds.push_back(&pairs[i].first);
                gen.forward(image_batch(conds));
            }
        }
        best_eval = eval_enhanced_iou();
        result.best_epoch = -1;
        snapshot(result);
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        GanEpochStats stats;
        stats.epoch = epoch;
        std::size_t batches = 0;
        double real_hits = 0.0, fake_hits = 0.0, patches = 0.0;

        for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
            std::vector<const FieldImage*> conds, truths;
            for (std::size_t i = start; i < std::min(pairs.size(), start + cfg.batch_size);
                 ++i) {
                conds.push_back(&pairs[order[i]].first);
                truths.push_back(&pairs[order[i]].second);
            }
            const Tensor<float> cond = image_batch(conds);
            const Tensor<float> truth = image_batch(truths);

            const Tensor<float> fake = gen.forward(cond);

            // --- discriminator step: ascent on log D(t) + log(1 - D(x~)) ---
            opt_d.zero_grad();
            const Tensor<float> s_real = dis.forward(cond, truth);
            Tensor<float> ds(s_real.shape());
            const float inv_np = 1.0f / static_cast<float>(s_real.numel());
            for (std::size_t i = 0; i < s_real.numel(); ++i) {
                const float p = std::clamp(s_real[i], (float)kClip, 1.0f - (float)kClip);
                ds[i] = -inv_np / p;
            }
            dis.backward(ds);
            const Tensor<float> s_fake_d = dis.forward(cond, fake);
            for (std::size_t i = 0; i < s_fake_d.numel(); ++i) {
                const float p = std::clamp(s_fake_d[i], (float)kClip, 1.0f - (float)kClip);
                ds[i] = inv_np / (1.0f - p);
            }
            dis.backward(ds);
            opt_d.step();

            // --- generator step: non-saturating adversarial + reconstruction ---
            const Tensor<float> s_fake = dis.forward(cond, fake);
            for (std::size_t i = 0; i < s_fake.numel(); ++i) {
                const float p = std::clamp(s_fake[i], (float)kClip, 1.0f - (float)kClip);
                ds[i] = -inv_np / p;
            }
            opt_d.zero_grad();  // discriminator only relays the gradient here
            Tensor<float> dfake = dis.backward(ds);

            double norm_sq = 0.0;
            for (std::size_t i = 0; i < fake.numel(); ++i)
                norm_sq += (fake[i] - truth[i]) * static_cast<double>(fake[i] - truth[i]);
            if (cfg.l1_reconstruction) {
                const float s = static_cast<float>(cfg.lambda) / fake.numel();
                for (std::size_t i = 0; i < fake.numel(); ++i)
                    dfake[i] += s * (fake[i] > truth[i] ? 1.0f : (fake[i] < truth[i] ? -1.0f : 0.0f));
            } else if (norm_sq > 0.0) {
                const float s = static_cast<float>(cfg.lambda / std::sqrt(norm_sq));
                for (std::size_t i = 0; i < fake.numel(); ++i)
                    dfake[i] += s * (fake[i] - truth[i]);
            }
            opt_g.zero_grad();
            gen.backward(dfake);
            opt_g.step();

            const GanLosses losses =
                gan_losses(s_real, s_fake, fake, truth, cfg.lambda, cfg.l1_reconstruction);
            if (!std::isfinite(losses.generator) || !std::isfinite(losses.discriminator))
                throw std::runtime_error("train_gan: loss diverged at epoch " +
                                         std::to_string(epoch));
            stats.g_loss += losses.generator;
            stats.d_loss += losses.discriminator;
            ++batches;
            for (std::size_t i = 0; i < s_real.numel(); ++i) {
                real_hits += s_real[i] > 0.5f;
                fake_hits += s_fake[i] < 0.5f;
                ++patches;
            }
        }

        stats.g_loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
        stats.d_loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
        stats.d_real_accuracy = real_hits / patches;
        stats.d_fake_accuracy = fake_hits / patches;
        if (!eval_pairs.empty()) stats.eval_iou = eval_enhanced_iou();
        result.history.push_back(stats);
        std::fprintf(stderr,
                     "gan epoch %3d  g %.2f  d %.4f  acc real %.2f fake %.2f  eval IoU %.2f\n",
                     epoch, stats.g_loss, stats.d_loss, stats.d_real_accuracy,
                     stats.d_fake_accuracy, stats.eval_iou);

        if (!eval_pairs.empty()) {
            if (stats.eval_iou > best_eval) {
                best_eval = stats.eval_iou;
                result.best_epoch = epoch;
                snapshot(result);
                since_best = 0;
            } else if (cfg.early_stopping && ++since_best >= cfg.patience) {
                break;
            }
        }
    }

    if (eval_pairs.empty()) {
        result.best_epoch = static_cast<int>(result.history.size()) - 1;
        snapshot(result);
    }
    return result;
}

GeneratorNet<float> make_generator(const GanTrainResult& result) {
    GeneratorNet<float> gen(result.config);
    std::vector<Tensor<float>*> state;
    gen.collect_state(state);
    std::size_t off = 0;
    restore_state_blob(state, result.generator_state, off);
    gen.set_training(false);
    return gen;
}

FieldImage enhance(GeneratorNet<float>& generator, const FieldImage& condition) {
    generator.set_training(false);
    Tensor<float> x({1, 1, FieldImage::kRes, FieldImage::kRes});
    std::copy(condition.pixels.begin(), condition.pixels.end(), x.data());
    const Tensor<float> y = generator.forward(x);
    FieldImage out;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = std::clamp(y[i], 0.0f, 1.0f);
    return out;
}

void save_gan(const GanTrainResult& result, const std::filesystem::path& file) {
    GeneratorNet<float> gen(result.config);
    DiscriminatorNet<float> dis(result.config);
    std::vector<Tensor<float>*> gstate, dstate;
    gen.collect_state(gstate);
    dis.collect_state(dstate);
    std::size_t off = 0;
    restore_state_blob(gstate, result.generator_state, off);
    off = 0;
    restore_state_blob(dstate, result.discriminator_state, off);

    std::vector<const Tensor<float>*> all;
    for (auto* t : gstate) all.push_back(t);
    for (auto* t : dstate) all.push_back(t);
    save_checkpoint(file, "gan", result.config.to_json(), all);
}

std::pair<GeneratorNet<float>, GanConfig> load_gan_generator(const std::filesystem::path& file) {
    const auto [kind, config_json] = read_checkpoint_header(file);
    if (kind != "gan") throw std::runtime_error("load_gan: checkpoint kind '" + kind + "'");
    const GanConfig cfg = GanConfig::from_json(config_json);
    GeneratorNet<float> gen(cfg);
    DiscriminatorNet<float> dis(cfg);
    std::vector<Tensor<float>*> state;
    gen.collect_state(state);
    dis.collect_state(state);
    load_checkpoint_state(file, "gan", state);
    gen.set_training(false);
    return {std::move(gen), cfg};
}

}  // namespace mit
