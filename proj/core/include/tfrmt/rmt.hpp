#pragma once

#include "tfrmt/environment.hpp"
#include "tfrmt/modes.hpp"
#include "tfrmt/pe.hpp"

#include <Eigen/Dense>
#include <cstdint>

namespace tfrmt {

// Standard deviations s_mn of the random coupling matrix for one range block,
//   s_mn^2 = (k^2 r_b^2 / 16) sum_l [sinc^2(w+ r_b/2) + sinc^2(w- r_b/2)]
//            * sum_j h_j^2(k_l) (W^j_mn)^2,
//   w+- = k (E_m - E_n) +- k_l,
// which is one quarter of the first-order transition probability
// |U_mn|^2 of the propagated equations over the block, ensemble-averaged
// over internal-wave phases. The band structure comes from the sinc
// resonance: only mode pairs whose beat wavenumber k|E_m - E_n| lies inside
// the internal-wave band couple strongly.
struct VarianceProfile {
    double k = 0.0;    // rad/km
    double r_b = 0.0;  // block range, km
    Eigen::MatrixXd s; // M x M, symmetric
};

VarianceProfile variance_profile(const ModeBasis& basis, const WaveguideParams& wg,
                                 const InternalWaveParams& iw, double r_b);

// Hermitian coupling draw: off-diagonal A_mn = s_mn (x + iy)/sqrt(2) with
// x, y standard normal and A_nm = conj(A_mn); diagonal real s_mm * N(0,1).
// Every element is keyed by (seed, m, n) alone, so two draws with the same
// seed but different matrix sizes agree on their common leading block. Each
// element then has variance exactly s_mn^2.
Eigen::MatrixXcd hermitian_draw(const Eigen::MatrixXd& s, std::uint64_t seed);

// One block propagator: U = Lambda (I + iA)^{-1} (I - iA) with
// Lambda = diag(exp(-i k E_m r_b)). The Cayley factor is exactly unitary for
// Hermitian A and reduces to Lambda (I - 2iA) at first order, so the
// off-diagonal transition variance is 4 s_mn^2, matching first-order
// propagation through the sampled field.
Eigen::MatrixXcd cayley_block(const Eigen::MatrixXcd& A, const Eigen::VectorXd& E,
                              double k, double r_b);

struct RMTConfig {
    double block_range = 50.0;  // r_b, km
    // Reuse the same element draws at every acoustic wavenumber of a member
    // (draws keyed by member and block only). The scattering strength still
    // varies with k through s_mn(k); this choice makes the phase structure of
    // a member coherent across the source band. When false, draws are salted
    // with the wavenumber index and decorrelate.
    bool k_coherent = true;
};

std::uint64_t member_block_seed(std::uint64_t ensemble_seed, int member, int block,
                                const RMTConfig& cfg, int k_index);

// Ensemble member: product of independent block unitaries covering [0, range]
// (range must be a whole number of blocks). Every draw is reconstructed
// deterministically from (ensemble_seed, member, block), so members and
// wavenumbers can be evaluated in any order or in parallel. Needs only the
// eigenvalues of the basis (for the free phases), not the mode shapes.
UnitaryPropagator draw_member(const Eigen::VectorXd& E, const VarianceProfile& vp,
                              const RMTConfig& cfg, double range,
                              std::uint64_t ensemble_seed, int member, int k_index = 0);

inline UnitaryPropagator draw_member(const ModeBasis& basis, const VarianceProfile& vp,
                                     const RMTConfig& cfg, double range,
                                     std::uint64_t ensemble_seed, int member,
                                     int k_index = 0) {
    return draw_member(basis.E, vp, cfg, range, ensemble_seed, member, k_index);
}

} // namespace tfrmt
