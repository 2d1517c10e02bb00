#pragma once

#include "mit/baselines.hpp"
#include "mit/dataset.hpp"
#include "mit/gan.hpp"
#include "mit/mitnet.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mit {

/// All tunables of one experiment. Desk-scale defaults train in CPU-minutes;
/// paper_scale() restores the hardware-protocol dataset steps and full
/// training schedules.
struct ExperimentConfig {
    DatasetConfig dataset;
    MitnetConfig mitnet;
    BaselineConfig fcn;
    BaselineConfig sae;
    GanConfig gan;
    NrConfig nr;
    int gan_pairs_cap = 160;  // training pairs per enhancer at desk scale

    static ExperimentConfig desk_scale();
    static ExperimentConfig paper_scale();

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& file);
};

/// A reconstruction method under evaluation: name plus frame -> TriVector.
struct Reconstructor {
    std::string name;
    std::function<TriVector(const ComplexFrame&)> infer;
};

struct SampleScore {
    std::uint32_t sample_index = 0;
    std::string method;
    std::string shape_class;
    bool enhanced = false;
    double iou_pct = 0.0;
    std::optional<double> cd_px;
};

struct ReportRow {
    std::string method;
    std::string shape_class;  // CY-35 / CY-30 / PR / ALL
    bool enhanced = false;
    double mean_iou = 0.0;
    double mean_cd = 0.0;
    int samples = 0;
};

/// reconstruct -> smooth -> render -> (enhance) -> binarize -> score against
/// the rendered ground-truth map. The same path serves every method.
std::vector<SampleScore> evaluate_method(const Dataset& dataset,
                                         const std::vector<std::uint32_t>& indices,
                                         const TriMesh& mesh, const Reconstructor& method,
                                         GeneratorNet<float>* enhancer);

std::vector<ReportRow> aggregate_scores(const std::vector<SampleScore>& scores);

/// Condition/reference pairs for enhancer training, built from a
/// reconstructor's renderings on the given split (capped, evenly strided).
std::vector<std::pair<FieldImage, FieldImage>> build_gan_pairs(
    const Dataset& dataset, const std::vector<std::uint32_t>& indices, const TriMesh& mesh,
    const Reconstructor& method, int cap);

// ---------------------------------------------------------------------------
// CLI-facing commands. Each writes a provenance JSON next to its outputs.
// ---------------------------------------------------------------------------

int cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// method: ccnn | fcn | sae | gan. The gan variant needs a condition source:
/// a reconstructor checkpoint path, or "nr".
int cmd_train(const ExperimentConfig& cfg, const std::string& method,
              const std::filesystem::path& data_dir, const std::filesystem::path& out_dir,
              const std::string& condition_source = "");

int cmd_reconstruct(const ExperimentConfig& cfg, const std::string& method,
                    const std::filesystem::path& data_dir,
                    const std::filesystem::path& ckpt_dir, std::uint32_t sample_index,
                    const std::filesystem::path& out_dir, bool enhance);

int cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
             const std::filesystem::path& ckpt_dir, const std::filesystem::path& out_dir,
             const std::vector<std::string>& methods);

/// Makes the named reconstructor from a checkpoint directory (nr builds its
/// solver from the dataset config).
Reconstructor make_reconstructor(const std::string& method, const ExperimentConfig& cfg,
                                 const Dataset& dataset, const TriMesh& mesh,
                                 const std::filesystem::path& ckpt_dir);

std::filesystem::path checkpoint_path(const std::filesystem::path& ckpt_dir,
                                      const std::string& method);
std::filesystem::path gan_checkpoint_path(const std::filesystem::path& ckpt_dir,
                                          const std::string& method);

void write_provenance(const std::filesystem::path& dir, const std::string& command,
                      const ExperimentConfig& cfg);

}  // namespace mit
