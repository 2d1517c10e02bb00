#include "mit/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace mit {

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (auto p : pixels) n += p;
    return n;
}

Mask binarize_image(const FieldImage& img, double tau) {
    Mask m;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        m.pixels[i] = img.pixels[i] >= tau ? 1 : 0;
    return m;
}

double iou(const Mask& r, const Mask& g) {
    if (r.pixels.size() != g.pixels.size())
        throw std::invalid_argument("iou: mask shape mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < r.pixels.size(); ++i) {
        inter += r.pixels[i] & g.pixels[i];
        uni += r.pixels[i] | g.pixels[i];
    }
    if (uni == 0) return 100.0;  // empty scene reconstructed as empty
    return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

Centroid centroid(const Mask& m) {
    double sx = 0.0, sy = 0.0;
    std::size_t k = 0;
    for (int row = 0; row < Mask::kRes; ++row)
        for (int col = 0; col < Mask::kRes; ++col)
            if (m.at(row, col)) {
                sx += col;
                sy += row;
                ++k;
            }
    if (k == 0) throw std::domain_error("centroid: empty mask");
    return {sx / k, sy / k};
}

double cd(const Mask& r, const Mask& g) {
    const Centroid a = centroid(r);
    const Centroid b = centroid(g);
    return std::hypot(a.x - b.x, a.y - b.y);
}

TriVector smooth_tri(const TriVector& v, const TriMesh& mesh) {
    if (v.size() != mesh.triangles.size())
        throw std::invalid_argument("smooth_tri: vector/mesh size mismatch");
    TriVector out(v.size(), 0.0);
    for (std::size_t t = 0; t < v.size(); ++t) {
        double s = v[t];
        for (int nb : mesh.neighbors[t]) s += v[nb];
        out[t] = s / (1.0 + mesh.neighbors[t].size());
    }
    return out;
}

double binary_vector_iou(const TriVector& a, const TriVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("binary_vector_iou: length mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0.0, y = b[i] != 0.0;
        inter += x && y;
        uni += x || y;
    }
    if (uni == 0) return 100.0;
    return 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace mit
