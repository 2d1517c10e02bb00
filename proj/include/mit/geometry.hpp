#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace mit {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double norm(Vec2 a);
double cross(Vec2 a, Vec2 b);

/// Circular sensing region. Distances are millimetres throughout the
/// geometry layer.
struct SensingField {
    double diameter_mm = 200.0;
    Vec2 center{0.0, 0.0};
    double radius_mm() const { return 0.5 * diameter_mm; }
};

/// The 16-coil array on the field boundary. Coil k sits at angle 2*pi*k/16.
struct CoilArray {
    int count = 16;
    std::vector<double> angles_rad;
    double placement_radius_mm = 100.0;
    double coil_diameter_mm = 18.0;
    int turns = 13;

    Vec2 coil_center(int k) const;
};

CoilArray build_coil_array();

/// Triangulation of the sensing disk: a central fan of 32 triangles plus
/// five annular rings of 96, for 512 triangles total. Node circles alternate
/// 32/64 nodes so that every ring closes with 96 triangles; ring radii are
/// chosen so triangle areas stay close to the 512-way equal split of the
/// disk. The whole construction is 16-fold rotationally symmetric, which the
/// forward model and several tests rely on.
struct TriMesh {
    std::vector<Vec2> nodes;                        // mm
    std::vector<std::array<int, 3>> triangles;      // node index triples, CCW
    std::vector<std::vector<int>> neighbors;        // edge-sharing triangles
    std::vector<int> outer_boundary_nodes;          // nodes on the r=100 circle

    // circle layout metadata (node index ranges per concentric circle)
    std::vector<int> circle_start;                  // first node index of each circle
    std::vector<int> circle_count;                  // node count of each circle
    std::vector<double> circle_radius;              // mm

    double field_radius_mm = 100.0;

    double triangle_area(int t) const;
    Vec2 triangle_centroid(int t) const;
    double total_area() const;

    /// Triangle containing p; boundary ties resolve to the lowest index.
    /// Points inside the disk but in the hairline sliver outside the outer
    /// polygon are pulled radially inward. Returns -1 outside the disk.
    int locate(Vec2 p) const;

    /// Node permutation for a rotation by k * 2*pi/16 about the center.
    std::vector<int> rotation_node_perm(int k) const;
    /// Triangle permutation for the same rotation: triangle t maps onto
    /// perm[t].
    std::vector<int> rotation_triangle_perm(int k) const;

    /// Pixel-center -> triangle index map for 256x256 field images
    /// (-1 outside the disk). Built once during construction.
    const std::vector<std::int32_t>& pixel_triangle_map() const { return pixel_tri_; }

private:
    friend TriMesh build_mesh();
    std::vector<std::int32_t> pixel_tri_;
    int locate_in_candidates(Vec2 p, double tol) const;
};

TriMesh build_mesh();

enum class PhantomShape : std::uint8_t { cylinder = 0, triangular_prism = 1 };

/// Movable test object. `size_mm` is the cylinder diameter or the prism side
/// length; orientation 0 points one prism vertex toward +y.
struct Phantom {
    PhantomShape shape = PhantomShape::cylinder;
    double size_mm = 30.0;
    double conductivity = 2.0;  // S/m
    Vec2 position{0.0, 0.0};    // mm
    double orientation_rad = 0.0;

    bool contains(Vec2 p) const;
    /// True if the cross-section lies fully inside the sensing disk.
    bool inside_field(const SensingField& field) const;
    /// Corner points of the prism cross-section (empty for cylinders).
    std::array<Vec2, 3> prism_vertices() const;
};

/// One value per mesh triangle, in mesh order.
using TriVector = std::vector<double>;
inline constexpr int kTriCount = 512;

/// 256x256 grayscale conductivity image covering the 200 mm field.
struct FieldImage {
    static constexpr int kRes = 256;
    static constexpr double kScaleMmPerPx = 200.0 / 256.0;

    std::vector<float> pixels;  // row-major, row 0 at y = +100 mm

    FieldImage() : pixels(kRes * kRes, 0.0f) {}
    float& at(int row, int col) { return pixels[row * kRes + col]; }
    float at(int row, int col) const { return pixels[row * kRes + col]; }

    /// Physical position of a pixel center (mm).
    static Vec2 pixel_center(int row, int col);
};

/// Binary occupancy of the mesh: triangle i is 1 iff its centroid lies inside
/// the phantom. Throws if the phantom leaves the sensing disk.
TriVector rasterize_phantom_to_tri(const Phantom& phantom, const TriMesh& mesh);

/// Binary 256x256 occupancy image of the phantom cross-section.
FieldImage rasterize_phantom_to_image(const Phantom& phantom);

/// Paints each pixel with the value of the triangle containing its center;
/// pixels outside the disk stay 0.
FieldImage tri_vector_to_image(const TriVector& v, const TriMesh& mesh);

/// Plain-text mesh dump: one "x y" node line per node, then one "i j k"
/// triangle line per triangle (zero-based).
void export_mesh(const TriMesh& mesh, std::ostream& os);

}  // namespace mit
