#pragma once

#include "mit/geometry.hpp"
#include "mit/metrics.hpp"

#include <filesystem>

namespace mit {

/// Binary PGM (P5, maxval 255). Pixel values are clamped to [0, 1] and scaled.
void write_pgm(const FieldImage& img, const std::filesystem::path& file);
void write_pgm(const Mask& mask, const std::filesystem::path& file);

/// Reads a P5 PGM back into [0, 1]; used by tests and tooling.
FieldImage read_pgm(const std::filesystem::path& file);

}  // namespace mit
