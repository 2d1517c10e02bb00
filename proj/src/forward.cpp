#include "mit/forward.hpp"

#include "mit/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mit {

MaterialMap MaterialMap::uniform_background(double sigma_background) {
    MaterialMap m;
    m.sigma.assign(kTriCount, sigma_background);
    return m;
}

MaterialMap MaterialMap::with_phantom(const Phantom& phantom, const TriMesh& mesh,
                                      double sigma_background) {
    MaterialMap m = uniform_background(sigma_background);
    const TriVector occupancy = rasterize_phantom_to_tri(phantom, mesh);
    for (int t = 0; t < kTriCount; ++t)
        if (occupancy[t] != 0.0) m.sigma[t] = phantom.conductivity;
    return m;
}

bool ComplexFrame::all_finite() const {
    for (const auto& z : m)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

ComplexFrame operator-(const ComplexFrame& a, const ComplexFrame& b) {
    ComplexFrame d;
    for (std::size_t i = 0; i < a.m.size(); ++i) d.m[i] = a.m[i] - b.m[i];
    return d;
}

FemSystem assemble(const TriMesh& mesh, const MaterialMap& mat, const CoilArray& coils) {
    if (mat.sigma.size() != mesh.triangles.size())
        throw std::invalid_argument("assemble: sigma length must match triangle count");
    if (!(mat.mu > 0.0)) throw std::invalid_argument("assemble: mu must be positive");
    if (!(mat.omega > 0.0)) throw std::invalid_argument("assemble: omega must be positive");
    for (double s : mat.sigma)
        if (s < 0.0) throw std::invalid_argument("assemble: sigma must be non-negative");

    FemSystem sys;
    sys.omega = mat.omega;
    sys.loop_length_m = coils.turns * 3.14159265358979323846 * coils.coil_diameter_mm * 1e-3;
    sys.node_count = static_cast<int>(mesh.nodes.size());

    // Free nodes: everything except the outer Dirichlet circle.
    sys.free_of_node.assign(mesh.nodes.size(), -1);
    std::vector<bool> dirichlet(mesh.nodes.size(), false);
    for (int n : mesh.outer_boundary_nodes) dirichlet[n] = true;
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
        if (!dirichlet[n]) {
            sys.free_of_node[n] = static_cast<int>(sys.node_of_free.size());
            sys.node_of_free.push_back(static_cast<int>(n));
        }
    }
    const int nf = static_cast<int>(sys.node_of_free.size());

    // Linear-triangle stiffness (mu^-1 grad.grad) and mass (j*omega*sigma),
    // assembled in SI units (mesh coordinates are mm).
    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(mesh.triangles.size() * 9);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double x[3] = {mesh.nodes[tri[0]].x * 1e-3, mesh.nodes[tri[1]].x * 1e-3,
                             mesh.nodes[tri[2]].x * 1e-3};
        const double y[3] = {mesh.nodes[tri[0]].y * 1e-3, mesh.nodes[tri[1]].y * 1e-3,
                             mesh.nodes[tri[2]].y * 1e-3};
        const double area2 = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
        const double area = 0.5 * std::abs(area2);
        double b[3], c[3];
        for (int i = 0; i < 3; ++i) {
            const int j = (i + 1) % 3, k = (i + 2) % 3;
            b[i] = y[j] - y[k];
            c[i] = x[k] - x[j];
        }
        const double k_scale = 1.0 / (mat.mu * 4.0 * area);
        const double m_scale = mat.sigma[t] * area / 12.0;
        for (int i = 0; i < 3; ++i) {
            const int fi = sys.free_of_node[tri[i]];
            if (fi < 0) continue;
            for (int j = 0; j < 3; ++j) {
                const int fj = sys.free_of_node[tri[j]];
                if (fj < 0) continue;
                const double kk = k_scale * (b[i] * b[j] + c[i] * c[j]);
                const double mm = m_scale * (i == j ? 2.0 : 1.0);
                trips.emplace_back(fi, fj, Complex(kk, mat.omega * mm));
            }
        }
    }
    sys.matrix.resize(nf, nf);
    sys.matrix.setFromTriplets(trips.begin(), trips.end());

    // Excitation/sensing node: nearest free node to each coil center.
    sys.coil_node.resize(coils.count);
    for (int k = 0; k < coils.count; ++k) {
        const Vec2 cc = coils.coil_center(k);
        double best = std::numeric_limits<double>::max();
        int best_node = -1;
        for (int n : sys.node_of_free) {
            const double d = norm(mesh.nodes[n] - cc);
            if (d < best) {
                best = d;
                best_node = n;
            }
        }
        sys.coil_node[k] = best_node;
    }

    sys.solver = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<Complex>>>();
    sys.solver->compute(sys.matrix);
    if (sys.solver->info() != Eigen::Success)
        throw std::runtime_error("assemble: factorization failed");
    return sys;
}

Eigen::VectorXcd solve_excitation(const FemSystem& sys, int coil) {
    if (coil < 0 || coil >= static_cast<int>(sys.coil_node.size()))
        throw std::invalid_argument("solve_excitation: coil index out of range");
    const int nf = static_cast<int>(sys.node_of_free.size());
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(nf);
    b[sys.free_of_node[sys.coil_node[coil]]] = Complex(1.0, 0.0);

    const Eigen::VectorXcd a = sys.solver->solve(b);
    const double residual = (sys.matrix * a - b).norm() / b.norm();
    if (!(residual <= 1e-10))
        throw std::runtime_error("solve_excitation: residual " + std::to_string(residual));

    Eigen::VectorXcd full = Eigen::VectorXcd::Zero(sys.node_count);
    for (int i = 0; i < nf; ++i) full[sys.node_of_free[i]] = a[i];
    return full;
}

std::array<Complex, ComplexFrame::kCoils> sense(const FemSystem& sys,
                                                const Eigen::VectorXcd& A,
                                                int exciting_coil) {
    std::array<Complex, ComplexFrame::kCoils> u{};
    const Complex jw(0.0, sys.omega);
    for (int s = 0; s < ComplexFrame::kCoils; ++s) {
        if (s == exciting_coil) continue;
        u[s] = -jw * A[sys.coil_node[s]] * sys.loop_length_m;
    }
    return u;
}

ComplexFrame forward(const TriMesh& mesh, const MaterialMap& mat) {
    const FemSystem sys = assemble(mesh, mat);
    ComplexFrame frame;
    for (int e = 0; e < ComplexFrame::kCoils; ++e) {
        const Eigen::VectorXcd a = solve_excitation(sys, e);
        const auto u = sense(sys, a, e);
        for (int s = 0; s < ComplexFrame::kCoils; ++s) frame.at(e, s) = u[s];
    }
    return frame;
}

ComplexFrame differential_frame(const TriMesh& mesh, const MaterialMap& mat,
                                const MaterialMap& background) {
    if (mat.omega != background.omega || mat.mu != background.mu ||
        mat.sigma.size() != background.sigma.size())
        throw std::invalid_argument("differential_frame: mismatched material configuration");
    return forward(mesh, mat) - forward(mesh, background);
}

ComplexFrame add_noise(const ComplexFrame& frame, const NoiseModel& model) {
    if (std::isinf(model.target_snr_db) && model.target_snr_db > 0.0) return frame;
    if (!(model.target_snr_db > 0.0))
        throw std::invalid_argument("add_noise: SNR target must be positive");

    Rng rng(model.seed);
    const double atten = std::pow(10.0, -model.target_snr_db / 20.0);
    ComplexFrame out = frame;
    for (auto& z : out.m) {
        const double s = std::abs(z) * atten;
        if (s > 0.0) z += Complex(s * rng.normal(), s * rng.normal());
    }
    return out;
}

std::optional<double> compute_snr(const std::vector<double>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("compute_snr: need at least 2 samples");
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(samples.size() - 1);
    if (var == 0.0) return std::nullopt;
    if (mean == 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(mean * mean / var);
}

}  // namespace mit
