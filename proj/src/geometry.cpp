#include "mit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace mit {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double norm(Vec2 a) { return std::hypot(a.x, a.y); }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// ---------------------------------------------------------------------------
// CoilArray
// ---------------------------------------------------------------------------

Vec2 CoilArray::coil_center(int k) const {
    const double a = angles_rad.at(k);
    return {placement_radius_mm * std::cos(a), placement_radius_mm * std::sin(a)};
}

CoilArray build_coil_array() {
    CoilArray c;
    c.angles_rad.resize(c.count);
    for (int k = 0; k < c.count; ++k) c.angles_rad[k] = kTwoPi * k / c.count;
    return c;
}

// ---------------------------------------------------------------------------
// Mesh construction
// ---------------------------------------------------------------------------

namespace {

double signed_area(Vec2 a, Vec2 b, Vec2 c) { return 0.5 * cross(b - a, c - a); }

// Barycentric inside test with an absolute tolerance in mm^2.
bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double tol) {
    const double s0 = cross(b - a, p - a);
    const double s1 = cross(c - b, p - b);
    const double s2 = cross(a - c, p - c);
    return s0 >= -tol && s1 >= -tol && s2 >= -tol;
}

}  // namespace

TriMesh build_mesh() {
    TriMesh m;
    const double R = m.field_radius_mm;

    // Circles alternate 32/64 nodes. Radii follow a 0.6-power grading of the
    // equal-area law: the center is refined enough that the smallest phantom
    // (30 mm) spans several triangles, at the cost of mildly larger rim
    // triangles.
    const int counts[6] = {32, 64, 32, 64, 32, 64};
    m.circle_start.resize(6);
    m.circle_count.assign(counts, counts + 6);
    m.circle_radius.resize(6);

    m.nodes.push_back({0.0, 0.0});  // node 0: center
    for (int c = 0; c < 6; ++c) {
        m.circle_radius[c] = R * std::pow((32.0 + 96.0 * c) / 512.0, 0.6);
        m.circle_start[c] = static_cast<int>(m.nodes.size());
        for (int j = 0; j < counts[c]; ++j) {
            const double a = kTwoPi * j / counts[c];
            m.nodes.push_back({m.circle_radius[c] * std::cos(a),
                               m.circle_radius[c] * std::sin(a)});
        }
    }

    auto node_on = [&](int circle, int j) {
        const int n = m.circle_count[circle];
        return m.circle_start[circle] + ((j % n) + n) % n;
    };

    auto push_tri = [&](int a, int b, int c) {
        if (signed_area(m.nodes[a], m.nodes[b], m.nodes[c]) < 0.0) std::swap(b, c);
        m.triangles.push_back({a, b, c});
    };

    // Central fan.
    for (int j = 0; j < 32; ++j) push_tri(0, node_on(0, j), node_on(0, j + 1));

    // Five rings of 96. "Up" rings go 32 -> 64 nodes, "down" rings 64 -> 32.
    for (int ring = 0; ring < 5; ++ring) {
        const int ci = ring;      // inner circle
        const int co = ring + 1;  // outer circle
        const bool up = m.circle_count[ci] == 32;
        for (int j = 0; j < 32; ++j) {
            if (up) {
                push_tri(node_on(ci, j), node_on(co, 2 * j), node_on(co, 2 * j + 1));
                push_tri(node_on(ci, j), node_on(co, 2 * j + 1), node_on(ci, j + 1));
                push_tri(node_on(ci, j + 1), node_on(co, 2 * j + 1), node_on(co, 2 * j + 2));
            } else {
                push_tri(node_on(ci, 2 * j), node_on(co, j), node_on(ci, 2 * j + 1));
                push_tri(node_on(ci, 2 * j + 1), node_on(co, j), node_on(co, j + 1));
                push_tri(node_on(ci, 2 * j + 1), node_on(co, j + 1), node_on(ci, 2 * j + 2));
            }
        }
    }

    // Edge adjacency.
    std::map<std::pair<int, int>, std::vector<int>> edge_tris;
    for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
        const auto& tri = m.triangles[t];
        for (int e = 0; e < 3; ++e) {
            int a = tri[e], b = tri[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            edge_tris[{a, b}].push_back(t);
        }
    }
    m.neighbors.assign(m.triangles.size(), {});
    for (const auto& [edge, tris] : edge_tris) {
        if (tris.size() == 2) {
            m.neighbors[tris[0]].push_back(tris[1]);
            m.neighbors[tris[1]].push_back(tris[0]);
        }
    }
    for (auto& nb : m.neighbors) std::sort(nb.begin(), nb.end());

    for (int j = 0; j < counts[5]; ++j) m.outer_boundary_nodes.push_back(node_on(5, j));

    // Pixel-center point location for 256x256 field images.
    m.pixel_tri_.assign(FieldImage::kRes * FieldImage::kRes, -1);
    for (int row = 0; row < FieldImage::kRes; ++row) {
        for (int col = 0; col < FieldImage::kRes; ++col) {
            const Vec2 p = FieldImage::pixel_center(row, col);
            if (norm(p) <= R) m.pixel_tri_[row * FieldImage::kRes + col] = m.locate(p);
        }
    }

    return m;
}

double TriMesh::triangle_area(int t) const {
    const auto& tri = triangles[t];
    return std::abs(signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]));
}

Vec2 TriMesh::triangle_centroid(int t) const {
    const auto& tri = triangles[t];
    return {(nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
            (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0};
}

double TriMesh::total_area() const {
    double s = 0.0;
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) s += triangle_area(t);
    return s;
}

int TriMesh::locate_in_candidates(Vec2 p, double tol) const {
    const double r = norm(p);
    double theta = std::atan2(p.y, p.x);
    if (theta < 0.0) theta += kTwoPi;

    // Ring index from the circle radii (ring -1 means the central fan).
    int ring = 0;
    while (ring < 5 && r > circle_radius[ring]) ++ring;
    const int sector = std::min<int>(31, static_cast<int>(theta / (kTwoPi / 32.0)));

    int best = -1;
    auto consider = [&](int t) {
        if (t < 0 || t >= static_cast<int>(triangles.size())) return;
        if (best != -1 && t >= best) return;
        const auto& tri = triangles[t];
        if (point_in_triangle(p, nodes[tri[0]], nodes[tri[1]], nodes[tri[2]], tol)) best = t;
    };

    // Triangle indices: fan j -> j; ring k sector j -> 32 + 96k + 3j + {0,1,2}.
    // Chord edges mean the containing triangle can sit in an adjacent ring or
    // sector, so a neighborhood is scanned and the lowest passing index wins.
    for (int dr = -1; dr <= 1; ++dr) {
        const int rr = ring + dr;
        if (rr < 0 || rr > 5) continue;
        for (int ds = -1; ds <= 1; ++ds) {
            const int ss = ((sector + ds) % 32 + 32) % 32;
            if (rr == 0) {
                consider(ss);
                // fan is ring "0" below circle_radius[0]; ring 1 starts at 32
            } else {
                const int base = 32 + 96 * (rr - 1) + 3 * ss;
                consider(base);
                consider(base + 1);
                consider(base + 2);
            }
        }
    }
    return best;
}

int TriMesh::locate(Vec2 p) const {
    if (norm(p) > field_radius_mm) return -1;
    const double tol = 1e-9 * field_radius_mm * field_radius_mm;
    Vec2 q = p;
    for (int attempt = 0; attempt < 6; ++attempt) {
        const int t = locate_in_candidates(q, tol);
        if (t >= 0) return t;
        q = 0.999 * q;  // pull out of the sliver between outer chords and the circle
    }
    return -1;
}

std::vector<int> TriMesh::rotation_node_perm(int k) const {
    std::vector<int> perm(nodes.size());
    perm[0] = 0;
    for (int c = 0; c < 6; ++c) {
        const int n = circle_count[c];
        const int shift = n / 16 * (((k % 16) + 16) % 16);
        for (int j = 0; j < n; ++j)
            perm[circle_start[c] + j] = circle_start[c] + (j + shift) % n;
    }
    return perm;
}

std::vector<int> TriMesh::rotation_triangle_perm(int k) const {
    const auto node_perm = rotation_node_perm(k);
    std::map<std::array<int, 3>, int> tri_index;
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
        auto key = triangles[t];
        std::sort(key.begin(), key.end());
        tri_index[key] = t;
    }
    std::vector<int> perm(triangles.size());
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
        std::array<int, 3> key = {node_perm[triangles[t][0]], node_perm[triangles[t][1]],
                                  node_perm[triangles[t][2]]};
        std::sort(key.begin(), key.end());
        const auto it = tri_index.find(key);
        if (it == tri_index.end())
            throw std::logic_error("mesh rotation does not map triangles onto themselves");
        perm[t] = it->second;
    }
    return perm;
}

// ---------------------------------------------------------------------------
// Phantom
// ---------------------------------------------------------------------------

std::array<Vec2, 3> Phantom::prism_vertices() const {
    // Equilateral cross-section, circumradius s/sqrt(3); orientation 0 puts
    // one vertex on the +y axis.
    const double R = size_mm / std::sqrt(3.0);
    std::array<Vec2, 3> v;
    for (int i = 0; i < 3; ++i) {
        const double a = orientation_rad + std::numbers::pi / 2.0 + i * kTwoPi / 3.0;
        v[i] = {position.x + R * std::cos(a), position.y + R * std::sin(a)};
    }
    return v;
}

bool Phantom::contains(Vec2 p) const {
    if (size_mm <= 0.0) return false;
    if (shape == PhantomShape::cylinder) return norm(p - position) <= 0.5 * size_mm;
    const auto v = prism_vertices();
    return point_in_triangle(p, v[0], v[1], v[2], 0.0) ||
           point_in_triangle(p, v[0], v[2], v[1], 0.0);
}

bool Phantom::inside_field(const SensingField& field) const {
    const double R = field.radius_mm();
    if (shape == PhantomShape::cylinder)
        return norm(position - field.center) + 0.5 * size_mm <= R;
    for (const auto& v : prism_vertices())
        if (norm(v - field.center) > R) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

Vec2 FieldImage::pixel_center(int row, int col) {
    return {-100.0 + (col + 0.5) * kScaleMmPerPx, 100.0 - (row + 0.5) * kScaleMmPerPx};
}

TriVector rasterize_phantom_to_tri(const Phantom& phantom, const TriMesh& mesh) {
    if (!phantom.inside_field(SensingField{}))
        throw std::invalid_argument("phantom cross-section leaves the sensing disk");
    TriVector v(mesh.triangles.size(), 0.0);
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
        if (phantom.contains(mesh.triangle_centroid(t))) v[t] = 1.0;
    return v;
}

FieldImage rasterize_phantom_to_image(const Phantom& phantom) {
    if (!phantom.inside_field(SensingField{}))
        throw std::invalid_argument("phantom cross-section leaves the sensing disk");
    FieldImage img;
    for (int row = 0; row < FieldImage::kRes; ++row)
        for (int col = 0; col < FieldImage::kRes; ++col)
            if (phantom.contains(FieldImage::pixel_center(row, col))) img.at(row, col) = 1.0f;
    return img;
}

FieldImage tri_vector_to_image(const TriVector& v, const TriMesh& mesh) {
    if (v.size() != mesh.triangles.size())
        throw std::invalid_argument("tri_vector_to_image: vector/mesh size mismatch");
    FieldImage img;
    const auto& map = mesh.pixel_triangle_map();
    for (int i = 0; i < FieldImage::kRes * FieldImage::kRes; ++i) {
        const std::int32_t t = map[i];
        if (t >= 0) img.pixels[i] = static_cast<float>(v[t]);
    }
    return img;
}

void export_mesh(const TriMesh& mesh, std::ostream& os) {
    for (const auto& n : mesh.nodes) os << n.x << " " << n.y << "\n";
    for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
}

}  // namespace mit
