#pragma once

#include "mit/geometry.hpp"

#include <cstdint>
#include <vector>

namespace mit {

/// Binary 256x256 object mask; metrics operate on these only, so nothing can
/// be scored before binarization.
struct Mask {
    static constexpr int kRes = FieldImage::kRes;
    std::vector<std::uint8_t> pixels;

    Mask() : pixels(kRes * kRes, 0) {}
    std::uint8_t& at(int row, int col) { return pixels[row * kRes + col]; }
    std::uint8_t at(int row, int col) const { return pixels[row * kRes + col]; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
};

/// Pixel >= tau becomes 1.
Mask binarize_image(const FieldImage& img, double tau);

/// Intersection over union in percent. Two empty masks agree perfectly (100).
double iou(const Mask& r, const Mask& g);

struct Centroid {
    double x = 0.0;  // column coordinate, pixels
    double y = 0.0;  // row coordinate, pixels
};

/// Mean member coordinates. Throws std::domain_error on an empty mask.
Centroid centroid(const Mask& m);

/// Euclidean centroid distance in pixels; throws if either mask is empty.
double cd(const Mask& r, const Mask& g);

/// One simultaneous smoothing pass: each triangle becomes the mean of itself
/// and its edge neighbors.
TriVector smooth_tri(const TriVector& v, const TriMesh& mesh);

/// IoU (0..100) of two binary tri-vectors; used for validation monitoring.
double binary_vector_iou(const TriVector& a, const TriVector& b);

}  // namespace mit
