#pragma once

#include "tfrmt/depth_grid.hpp"
#include "tfrmt/environment.hpp"

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <vector>

namespace tfrmt {

// Trapped acoustic modes of the unperturbed channel at a given acoustic
// wavenumber k (rad/km): eigenpairs of
//   -(1/2) psi'' + k^2 V0(z) psi = k^2 E psi
// discretized with second-order central differences on the shared depth grid
// (symmetric tridiagonal, Dirichlet walls). E is dimensionless; the parabolic
// propagator uses the matching discrete dispersion so that these modes are
// its exact stationary states at zero perturbation.
//
// Normalization: sum_i w_i psi_m(z_i)^2 = 1 under the grid's trapezoid
// weights. Sign: psi_m > 0 at its first extremum inside the classically
// allowed region (scanning downward from the upper turning point).
struct ModeBasis {
    double k = 0.0;                         // rad/km
    std::shared_ptr<const DepthGrid> grid;
    Eigen::MatrixXd psi;                    // grid points x M
    Eigen::VectorXd E;                      // M, ascending
    int M = 0;

    // Trapping threshold used when the basis was solved (V0 at z = 0 for the
    // default channel-mode set).
    double threshold = 0.0;
};

// Solve for trapped modes at wavenumber k.
//   m_requested == 0: all modes with E_m < V0(z = 0)  (channel modes).
//   m_requested  > 0: exactly that many lowest modes; throws if the request
//                     exceeds the count of modes trapped by the window edge
//                     (E_m < min(V0(z_min), V0(z_max))).
// May legitimately return M == 0 at very small k.
ModeBasis solve_modes(double k, const WaveguideParams& wg,
                      std::shared_ptr<const DepthGrid> grid, int m_requested = 0);

// Modal coefficients of a complex field sampled on the basis grid:
//   a_m = sum_i w_i psi_m(z_i) conj-free (modes are real).
Eigen::VectorXcd project(const ModeBasis& basis, const Eigen::VectorXcd& field);

// Internal-wave coupling elements between modes,
//   V^{j,l}_{mn} = integral dz V_j(z; kl) psi_m psi_n
//                = iw_spectral_weight(j, kl) * W^j_{mn},
//   W^j_{mn}     = integral dz iw_mode_profile(j, z) psi_m psi_n.
// The depth integrals W^j are independent of l and cached lazily per j; the
// l dependence is the scalar spectral weight.
class CouplingTensor {
  public:
    CouplingTensor(const ModeBasis& basis, const WaveguideParams& wg,
                   const InternalWaveParams& iw);

    // Depth-overlap matrix W^j (M x M, symmetric). Reference valid for the
    // lifetime of this object.
    const Eigen::MatrixXd& mode_overlap(int j);

    // Full coupling element including the spectral weight.
    double element(int j, int l, int m, int n);

    // Sub-block [m0, m1) x [n0, n1) of V^{j,l}.
    Eigen::MatrixXd block(int j, int l, int m0, int m1, int n0, int n1);

    const ModeBasis& basis() const { return basis_; }
    const InternalWaveParams& iw() const { return iw_; }
    const WaveguideParams& waveguide() const { return wg_; }

  private:
    const ModeBasis& basis_;
    WaveguideParams wg_;
    InternalWaveParams iw_;
    Eigen::VectorXd kl_;
    std::vector<Eigen::MatrixXd> overlaps_;  // indexed j-1, empty until built
    std::vector<char> built_;
    std::mutex build_mutex_;
};

} // namespace tfrmt
