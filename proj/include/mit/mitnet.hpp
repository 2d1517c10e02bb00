#pragma once

#include "mit/adam.hpp"
#include "mit/complex_layers.hpp"
#include "mit/dataset.hpp"
#include "mit/forward.hpp"
#include "mit/geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mit {

/// Complex U-net classifier configuration. The encoder widths are complex
/// channel counts per stage (two modulus-max pools between three stages);
/// the decoder mirrors them through C2R/R2C skip junctions and a real dense
/// head of `output_len` sigmoid units.
struct MitnetConfig {
    std::vector<int> widths = {16, 32, 64};
    int output_len = kTriCount;
    double binarize_tau = 0.5;

    double learning_rate = 0.001;
    int epochs = 200;
    int batch_size = 16;
    bool class_weighted_loss = true;  // w_i = n / (2 * class count), per batch
    bool early_stopping = true;
    int patience = 20;
    double input_scale = 0.0;  // 0 = calibrate to unit RMS on the training split
    std::uint64_t seed = 1;

    std::string to_json() const;
    static MitnetConfig from_json(const std::string& text);
};

/// Encoder 16x16 -> 8x8 -> 4x4 with complex conv + modReLU stages, mirrored
/// decoder with nearest-neighbor upsampling and C2R-concat-R2C skip
/// junctions, real dense head with sigmoid output.
template <typename T>
class MitnetModel {
public:
    explicit MitnetModel(const MitnetConfig& cfg)
        : cfg_(cfg), enc1_(1, w(0), 3, 1, 1), act1_(w(0)), enc2_(w(0), w(1), 3, 1, 1),
          act2_(w(1)), bott_(w(1), w(2), 3, 1, 1), act3_(w(2)),
          dec1_(w(1) + w(2), w(1), 3, 1, 1), act4_(w(1)), dec2_(w(0) + w(1), w(0), 3, 1, 1),
          act5_(w(0)), head_(2 * w(0) * 16 * 16, cfg.output_len) {
        if (cfg.widths.size() != 3) throw std::invalid_argument("mitnet: need 3 stage widths");
        for (int width : cfg.widths)
            if (width <= 0) throw std::invalid_argument("mitnet: widths must be positive");
        if (cfg.output_len <= 0) throw std::invalid_argument("mitnet: bad output length");
        Rng rng(cfg.seed);
        enc1_.init(rng);
        act1_.init(rng);
        enc2_.init(rng);
        act2_.init(rng);
        bott_.init(rng);
        act3_.init(rng);
        dec1_.init(rng);
        act4_.init(rng);
        dec2_.init(rng);
        act5_.init(rng);
        // small head gain keeps the sigmoid unsaturated at init: the complex
        // stack roughly doubles feature energy per stage
        head_.init(rng, 0.01);
    }

    /// Raw head outputs for a (N, 1, 16, 16) complex batch.
    Tensor<T> forward_logits(const ComplexTensor<T>& x) {
        s1_ = act1_.forward(enc1_.forward(x));
        ComplexTensor<T> p1 = pool1_.forward(s1_);
        s2_ = act2_.forward(enc2_.forward(p1));
        ComplexTensor<T> p2 = pool2_.forward(s2_);
        ComplexTensor<T> b = act3_.forward(bott_.forward(p2));

        ComplexTensor<T> u1 = upsample2x(b);
        Tensor<T> j1 = concat_channels(c2r(u1), c2r(s2_));
        ComplexTensor<T> d1 = act4_.forward(dec1_.forward(r2c(j1)));

        ComplexTensor<T> u2 = upsample2x(d1);
        Tensor<T> j2 = concat_channels(c2r(u2), c2r(s1_));
        ComplexTensor<T> d2 = act5_.forward(dec2_.forward(r2c(j2)));

        Tensor<T> flat_in = c2r(d2);
        const std::int64_t n = flat_in.dim(0);
        Tensor<T> flat({n, static_cast<std::int64_t>(flat_in.numel() / n)});
        std::copy(flat_in.data(), flat_in.data() + flat_in.numel(), flat.data());
        return head_.forward(flat);
    }

    /// Sigmoid probabilities in (0, 1).
    Tensor<T> forward(const ComplexTensor<T>& x) {
        Tensor<T> logits = forward_logits(x);
        Tensor<T> probs(logits.shape());
        for (std::size_t i = 0; i < logits.numel(); ++i)
            probs[i] = T(1) / (T(1) + std::exp(-logits[i]));
        return probs;
    }

    /// Backpropagates a gradient w.r.t. the logits (the BCE-with-sigmoid
    /// gradient (o - t) * w / n comes in already fused).
    ComplexTensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> dflat = head_.backward(dlogits);
        const std::int64_t n = dflat.dim(0);
        Tensor<T> dflat4({n, 2 * w(0), 16, 16});
        std::copy(dflat.data(), dflat.data() + dflat.numel(), dflat4.data());
        ComplexTensor<T> dd2 = r2c(dflat4);

        ComplexTensor<T> dj2 = dec2_.backward(act5_.backward(dd2));
        Tensor<T> dj2_real = c2r(dj2);
        auto [du2_r, ds1_skip_r] = split_channels(dj2_real, 2 * w(1));
        ComplexTensor<T> dd1 = upsample2x_backward(r2c(du2_r));

        ComplexTensor<T> dj1 = dec1_.backward(act4_.backward(dd1));
        Tensor<T> dj1_real = c2r(dj1);
        auto [du1_r, ds2_skip_r] = split_channels(dj1_real, 2 * w(2));
        ComplexTensor<T> db = upsample2x_backward(r2c(du1_r));

        ComplexTensor<T> dp2 = bott_.backward(act3_.backward(db));
        ComplexTensor<T> ds2 = pool2_.backward(dp2);
        const ComplexTensor<T> ds2_skip = r2c(ds2_skip_r);
        for (std::size_t i = 0; i < ds2.numel(); ++i) {
            ds2.re[i] += ds2_skip.re[i];
            ds2.im[i] += ds2_skip.im[i];
        }

        ComplexTensor<T> dp1 = enc2_.backward(act2_.backward(ds2));
        ComplexTensor<T> ds1 = pool1_.backward(dp1);
        const ComplexTensor<T> ds1_skip = r2c(ds1_skip_r);
        for (std::size_t i = 0; i < ds1.numel(); ++i) {
            ds1.re[i] += ds1_skip.re[i];
            ds1.im[i] += ds1_skip.im[i];
        }
        return enc1_.backward(act1_.backward(ds1));
    }

    void collect_params(std::vector<ParamRef<T>>& out) {
        enc1_.collect_params(out);
        act1_.collect_params(out);
        enc2_.collect_params(out);
        act2_.collect_params(out);
        bott_.collect_params(out);
        act3_.collect_params(out);
        dec1_.collect_params(out);
        act4_.collect_params(out);
        dec2_.collect_params(out);
        act5_.collect_params(out);
        head_.collect_params(out);
    }

    std::size_t param_count() {
        std::vector<ParamRef<T>> ps;
        collect_params(ps);
        std::size_t n = 0;
        for (const auto& p : ps) n += p.value->numel();
        return n;
    }

    const MitnetConfig& config() const { return cfg_; }
    MitnetConfig& config() { return cfg_; }

private:
    int w(int i) const { return cfg_.widths[i]; }

    MitnetConfig cfg_;
    ComplexConv2d<T> enc1_;
    ModRelu<T> act1_;
    ComplexConv2d<T> enc2_;
    ModRelu<T> act2_;
    ComplexConv2d<T> bott_;
    ModRelu<T> act3_;
    ComplexConv2d<T> dec1_;
    ModRelu<T> act4_;
    ComplexConv2d<T> dec2_;
    ModRelu<T> act5_;
    Dense<T> head_;
    CMaxPool2d<T> pool1_, pool2_;
    ComplexTensor<T> s1_, s2_;
};

/// Weighted binary cross-entropy on clipped probabilities (clip 1e-7).
double bce_loss(const TriVector& o, const TriVector& t, const TriVector& w);

/// Elementwise threshold: v >= tau -> 1.
TriVector binarize(const TriVector& v, double tau = 0.5);

/// (N, 1, 16, 16) complex batch from frames, scaled by input_scale.
ComplexTensor<float> frames_to_batch(const std::vector<const ComplexFrame*>& frames,
                                     double input_scale);

/// Forward pass on one frame; deterministic, output in (0, 1).
TriVector infer(MitnetModel<float>& model, const ComplexFrame& frame);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_iou = 0.0;  // percent, binarized vector IoU
};

struct MitnetTrainResult {
    MitnetConfig config;              // with the resolved input scale
    std::vector<float> best_state;    // flat parameter blob of the best epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

/// Mini-batch Adam training with best-validation checkpointing and optional
/// early stopping on validation IoU. Deterministic for a fixed seed.
MitnetTrainResult train_ccnn(const std::vector<const Sample*>& train,
                             const std::vector<const Sample*>& val, MitnetConfig cfg);

/// Materializes the trained model from a result (or a checkpoint file).
MitnetModel<float> make_model(const MitnetTrainResult& result);

void save_mitnet(const MitnetTrainResult& result, const std::filesystem::path& file);
MitnetModel<float> load_mitnet(const std::filesystem::path& file);

/// Flat view of all parameters, used for checkpointing.
std::vector<float> flatten_params(MitnetModel<float>& model);
void unflatten_params(MitnetModel<float>& model, const std::vector<float>& blob);

}  // namespace mit
