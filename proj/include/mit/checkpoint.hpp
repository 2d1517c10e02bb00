#pragma once

#include "mit/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mit {

/// Binary checkpoint container: magic "MITC", version, model kind, an
/// embedded JSON config, then raw f32 tensors in model state order. A
/// save -> load round trip restores inference bit-exactly.
void save_checkpoint(const std::filesystem::path& file, const std::string& kind,
                     const std::string& config_json,
                     const std::vector<const Tensor<float>*>& state);

/// Reads the kind and config without touching tensors.
std::pair<std::string, std::string> read_checkpoint_header(const std::filesystem::path& file);

/// Loads tensors into the given state list; shapes must match exactly.
void load_checkpoint_state(const std::filesystem::path& file, const std::string& expected_kind,
                           const std::vector<Tensor<float>*>& state);

}  // namespace mit
