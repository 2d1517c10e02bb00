#include "mit/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

mit::ExperimentConfig resolve_config(const std::string& config_path, bool paper_scale,
                                     std::uint64_t seed, bool seed_given) {
    mit::ExperimentConfig cfg = paper_scale ? mit::ExperimentConfig::paper_scale()
                                            : mit::ExperimentConfig::desk_scale();
    if (!config_path.empty()) cfg = mit::ExperimentConfig::load(config_path);
    if (seed_given) {
        cfg.dataset.seed = seed;
        cfg.mitnet.seed = seed;
        cfg.fcn.seed = seed;
        cfg.sae.seed = seed;
        cfg.gan.seed = seed;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnetic induction tomography reconstruction workbench"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, method, condition, ckpt_dir;
    std::uint64_t seed = 42;
    bool paper_scale = false, enhance = false;
    std::uint32_t sample_index = 0;
    std::vector<std::string> methods = {"mitnet", "nr", "fcn", "sae"};

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config JSON");
        sub->add_flag("--paper-scale", paper_scale,
                      "hardware-protocol dataset steps and full training schedules");
        return sub->add_option("--seed", seed, "master seed override");
    };

    auto* gen = app.add_subcommand("gen-data", "synthesize the measurement dataset");
    auto* gen_seed = add_common(gen);
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* train = app.add_subcommand("train", "train a reconstructor or an enhancer");
    auto* train_seed = add_common(train);
    train->add_option("--method", method, "ccnn | fcn | sae | gan")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "checkpoint directory")->required();
    train->add_option("--condition", condition,
                      "gan only: condition reconstructor checkpoint, or 'nr'");

    auto* rec = app.add_subcommand("reconstruct", "reconstruct one frame and dump images");
    auto* rec_seed = add_common(rec);
    rec->add_option("--method", method, "mitnet | ccnn | fcn | sae | nr")->required();
    rec->add_option("--data", data_dir, "dataset directory")->required();
    rec->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory (unused for nr)");
    rec->add_option("--sample", sample_index, "sample index in the dataset");
    rec->add_option("--out", out_dir, "output directory")->required();
    rec->add_flag("--enhance", enhance, "also run the method's trained enhancer");

    auto* eval = app.add_subcommand("eval", "score methods on the held-out test split");
    auto* eval_seed = add_common(eval);
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory")->required();
    eval->add_option("--out", out_dir, "report directory")->required();
    eval->add_option("--methods", methods, "methods to score");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const auto cfg = resolve_config(config_path, paper_scale, seed, !gen_seed->empty());
            return mit::cmd_gen_data(cfg, out_dir);
        }
        if (train->parsed()) {
            const auto cfg =
                resolve_config(config_path, paper_scale, seed, !train_seed->empty());
            return mit::cmd_train(cfg, method, data_dir, out_dir, condition);
        }
        if (rec->parsed()) {
            const auto cfg = resolve_config(config_path, paper_scale, seed, !rec_seed->empty());
            return mit::cmd_reconstruct(cfg, method, data_dir,
                                        ckpt_dir.empty() ? out_dir : ckpt_dir, sample_index,
                                        out_dir, enhance);
        }
        if (eval->parsed()) {
            const auto cfg =
                resolve_config(config_path, paper_scale, seed, !eval_seed->empty());
            return mit::cmd_eval(cfg, data_dir, ckpt_dir, out_dir, methods);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
