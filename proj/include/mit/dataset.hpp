#pragma once

#include "mit/forward.hpp"
#include "mit/geometry.hpp"
#include "mit/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mit {

/// One movable object class in the acquisition protocol.
struct ShapeSpec {
    PhantomShape shape = PhantomShape::cylinder;
    double size_mm = 30.0;
    double conductivity = 2.0;  // S/m
    double step_mm = 12.0;
    int repetitions = 3;
};

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetConfig {
    std::vector<ShapeSpec> shapes;
    double background_sigma = 0.1;  // S/m
    double frequency_hz = 1e6;
    double snr_db = 62.0;
    std::uint64_t seed = 42;
    SplitRatios split;

    /// Desk-scale defaults: the three object classes at a 12 mm step,
    /// three repetitions each.
    static DatasetConfig desk_scale();
    /// Hardware-protocol steps and rounds (4 mm / 4, 4 mm / 3, 5 mm / 3).
    static DatasetConfig paper_scale();

    double omega() const { return 2.0 * 3.14159265358979323846 * frequency_hz; }
};

/// One measurement: the noisy differential frame and its triangulation label.
struct Sample {
    ComplexFrame frame;
    TriVector label;
    Phantom phantom;
    int shape_index = 0;
    int position_index = 0;  // within the shape's position list
    int repetition = 0;
};

struct DatasetManifest {
    std::uint32_t format_version = 1;
    DatasetConfig config;
    std::vector<std::uint32_t> train_indices;
    std::vector<std::uint32_t> val_indices;
    std::vector<std::uint32_t> test_indices;
};

struct Dataset {
    std::vector<Sample> samples;
    DatasetManifest manifest;
};

/// Grid positions (multiples of step in x and y, centered at the origin)
/// where the phantom cross-section stays fully inside the sensing disk.
/// Deterministic row-major order.
std::vector<Vec2> enumerate_positions(const Phantom& prototype, double step_mm);
std::vector<Vec2> enumerate_positions(double cylinder_diameter_mm, double step_mm);

/// Synthesizes the full dataset: every shape x position x repetition, each
/// with independently seeded noise, split by position.
Dataset generate(const DatasetConfig& config);

/// 16x32 layout of a frame: columns 0..15 real parts, 16..31 imaginary
/// parts, row = excitation index.
Tensor<double> flatten(const ComplexFrame& frame);
/// Inverse of flatten; rejects anything that is not 16x32.
ComplexFrame unflatten(const Tensor<double>& m);

/// Position-grouped split: all repetitions of one (shape, position) pair land
/// in the same split. Ratios must sum to 1; empty splits are rejected.
void split_by_position(Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

/// Binary container ("MITD") plus a JSON manifest next to it.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// CY-35 / CY-30 / PR style class tag for reporting.
std::string shape_class_name(const Phantom& phantom);

std::string dataset_config_to_json(const DatasetConfig& config);
DatasetConfig dataset_config_from_json(const std::string& text);

}  // namespace mit
