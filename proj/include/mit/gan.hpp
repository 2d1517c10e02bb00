#pragma once

#include "mit/geometry.hpp"
#include "mit/layers.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mit {

struct GanConfig {
    int base_width = 4;     // encoder stage widths w, 2w, 4w, 8w, 16w
    double lambda = 100.0;  // reconstruction penalty weight
    bool l1_reconstruction = false;  // default: L2 norm of the residual
    double learning_rate = 0.001;
    int epochs = 200;
    int batch_size = 16;
    bool early_stopping = true;  // on held-out enhancement IoU, when eval pairs exist
    int patience = 6;
    std::uint64_t seed = 1;

    std::string to_json() const;
    static GanConfig from_json(const std::string& text);
};

/// Encoder-decoder generator: ten 3x3 conv layers (BN + ReLU each, max-pool
/// after every two) down to an 8x8 bottleneck, then four stride-2 transpose
/// convs with symmetric skip concatenations and a final transpose conv to the
/// 256x256 single-channel sigmoid output. No noise input: identical
/// conditions give identical outputs.
template <typename T>
class GeneratorNet {
public:
    explicit GeneratorNet(const GanConfig& cfg);

    /// x: (N, 1, 256, 256) -> (N, 1, 256, 256) in [0, 1].
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& doutput);

    void set_training(bool training);
    void collect_params(std::vector<ParamRef<T>>& out);
    void collect_state(std::vector<Tensor<T>*>& out);

private:
    int w_ = 4;
    std::vector<Conv2d<T>> enc_;
    std::vector<BatchNorm<T>> enc_bn_;
    std::vector<Relu<T>> enc_act_;
    std::vector<MaxPool2d<T>> pool_;
    std::vector<TConv2d<T>> dec_;
    std::vector<BatchNorm<T>> dec_bn_;
    std::vector<Relu<T>> dec_act_;
    Sigmoid<T> out_act_;
    std::vector<Tensor<T>> skips_;  // pre-pool encoder features, reused by backward
};

/// PatchGAN discriminator on the channel-concatenated (condition, candidate)
/// pair: four stride-2 conv blocks and a scoring conv produce a 16x16 map of
/// per-patch real/fake probabilities.
template <typename T>
class DiscriminatorNet {
public:
    explicit DiscriminatorNet(const GanConfig& cfg);

    /// (N, 1, 256, 256) x2 -> (N, 1, 16, 16) scores in (0, 1).
    Tensor<T> forward(const Tensor<T>& condition, const Tensor<T>& candidate);
    /// Returns the gradient w.r.t. the candidate image (condition gradient is
    /// discarded: conditions are inputs, never optimized).
    Tensor<T> backward(const Tensor<T>& dscores);

    void set_training(bool training);
    void collect_params(std::vector<ParamRef<T>>& out);
    void collect_state(std::vector<Tensor<T>*>& out);

private:
    std::vector<Conv2d<T>> conv_;
    std::vector<BatchNorm<T>> bn_;
    std::vector<LeakyRelu<T>> act_;
    Conv2d<T> score_;
    Sigmoid<T> score_act_;
};

/// Adversarial + reconstruction objectives:
///   discriminator loss = -mean log D(t|y) - mean log(1 - D(x~|y))
///   generator loss     = -mean log D(x~|y) + lambda * ||x~ - t||
/// where the reconstruction term is the L2 norm over the whole batch
/// (an L1 mean-absolute switch is available in the config).
struct GanLosses {
    double generator = 0.0;
    double discriminator = 0.0;
    double adversarial = 0.0;    // generator adversarial part
    double reconstruction = 0.0;  // lambda-weighted part
};

GanLosses gan_losses(const Tensor<float>& d_real, const Tensor<float>& d_fake,
                     const Tensor<float>& fake, const Tensor<float>& truth, double lambda,
                     bool l1 = false);

struct GanEpochStats {
    int epoch = 0;
    double g_loss = 0.0;
    double d_loss = 0.0;
    double d_real_accuracy = 0.0;  // fraction of real patches scored > 0.5
    double d_fake_accuracy = 0.0;  // fraction of fake patches scored < 0.5
    double eval_iou = 0.0;         // held-out enhanced IoU, when eval pairs exist
};

struct GanTrainResult {
    GanConfig config;
    std::vector<float> generator_state;
    std::vector<float> discriminator_state;
    std::vector<GanEpochStats> history;
    int best_epoch = 0;
};

/// Alternating one-discriminator/one-generator steps per batch with Adam.
/// Pairs are (condition rendering, reference image). When eval_pairs are
/// given, the returned state is the epoch with the best held-out enhanced
/// IoU (early-stopped by cfg.patience).
GanTrainResult train_gan(const std::vector<std::pair<FieldImage, FieldImage>>& pairs,
                         GanConfig cfg,
                         const std::vector<std::pair<FieldImage, FieldImage>>& eval_pairs = {});

GeneratorNet<float> make_generator(const GanTrainResult& result);

/// Pure forward pass of a trained generator on one condition image.
FieldImage enhance(GeneratorNet<float>& generator, const FieldImage& condition);

void save_gan(const GanTrainResult& result, const std::filesystem::path& file);
std::pair<GeneratorNet<float>, GanConfig> load_gan_generator(const std::filesystem::path& file);

}  // namespace mit
