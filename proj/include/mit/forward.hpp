#pragma once

#include "mit/geometry.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <complex>
#include <memory>
#include <optional>
#include <vector>

namespace mit {

using Complex = std::complex<double>;

/// Material distribution on the mesh plus the excitation frequency.
struct MaterialMap {
    TriVector sigma;                       // S/m, one entry per triangle
    double mu = 4e-7 * 3.14159265358979323846;  // H/m, uniform
    double omega = 2.0 * 3.14159265358979323846 * 1e6;  // rad/s

    static MaterialMap uniform_background(double sigma_background = 0.1);
    /// Background with the phantom conductivity painted into its triangles.
    static MaterialMap with_phantom(const Phantom& phantom, const TriMesh& mesh,
                                    double sigma_background = 0.1);
};

/// 16x16 complex measurement frame; entry (e, s) is the voltage sensed at
/// coil s while coil e excites. The self-measurement diagonal is zero.
struct ComplexFrame {
    static constexpr int kCoils = 16;
    std::array<Complex, kCoils * kCoils> m{};

    Complex& at(int e, int s) { return m[e * kCoils + s]; }
    Complex at(int e, int s) const { return m[e * kCoils + s]; }
    bool all_finite() const;
};

ComplexFrame operator-(const ComplexFrame& a, const ComplexFrame& b);

/// Assembled linear-triangle FEM system S = K + j*omega*M over the free
/// (non-Dirichlet) nodes, with the per-coil excitation node resolved. The
/// factorization is computed eagerly so solves are pure.
struct FemSystem {
    Eigen::SparseMatrix<Complex> matrix;   // free-node system, complex symmetric
    std::vector<int> free_of_node;         // node -> free index, -1 on the boundary
    std::vector<int> node_of_free;
    std::vector<int> coil_node;            // nearest free node per coil
    double omega = 0.0;
    double loop_length_m = 0.0;            // turns * pi * coil diameter
    int node_count = 0;

    std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<Complex>>> solver;
};

/// Weak-form assembly: stiffness from the mu^-1 gradient term, mass from
/// j*omega*sigma, homogeneous Dirichlet on the outer circle. Throws on
/// non-positive mu/omega or a sigma vector of the wrong length.
FemSystem assemble(const TriMesh& mesh, const MaterialMap& mat,
                   const CoilArray& coils = build_coil_array());

/// Nodal vector potential for one excitation (zeros on Dirichlet nodes).
/// Throws with the residual if the direct solve fails its 1e-10 contract.
Eigen::VectorXcd solve_excitation(const FemSystem& sys, int coil);

/// Sensed voltages U_s = -j*omega * A(coil node s) * loop length. When
/// exciting_coil is given, that self-channel is zeroed.
std::array<Complex, ComplexFrame::kCoils> sense(const FemSystem& sys,
                                                const Eigen::VectorXcd& A,
                                                int exciting_coil = -1);

/// Full 16-excitation frame for one material map.
ComplexFrame forward(const TriMesh& mesh, const MaterialMap& mat);

/// forward(mat) - forward(background); rejects mismatched mu/omega.
ComplexFrame differential_frame(const TriMesh& mesh, const MaterialMap& mat,
                                const MaterialMap& background);

/// Measurement noise: i.i.d. complex Gaussian per entry, each quadrature with
/// standard deviation |entry| * 10^(-SNR/20), so the magnitude SNR over
/// repeated draws matches the target. An infinite target disables noise.
struct NoiseModel {
    double target_snr_db = 62.0;
    std::uint64_t seed = 0;
};

ComplexFrame add_noise(const ComplexFrame& frame, const NoiseModel& model);

/// 10*log10(mean^2 / variance) over the samples (sample variance, n-1).
/// Returns nullopt when the variance is zero (unmeasurable); -inf when the
/// mean is zero. Requires at least two samples.
std::optional<double> compute_snr(const std::vector<double>& samples);

}  // namespace mit
