#pragma once

#include "tfrmt/depth_grid.hpp"

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>

// Deep-water acoustic environment: a canonical mid-latitude sound channel
// plus a stochastic internal-wave sound-speed perturbation.
//
// Unit conventions used throughout the project:
//   depths/ranges km, horizontal wavenumbers rad/km, sound speed km/s,
//   frequencies of acoustics Hz, buoyancy/inertial frequencies rad/s.
// The potential V entering the parabolic equation is dimensionless
// (delta c / c0 to leading order).

namespace tfrmt {

struct WaveguideParams {
    double c0 = 1.49;       // reference sound speed, km/s
    double z_axis = 1.0;    // channel axis depth, km
    double B = 1.0;         // thermocline scale, km
    double gamma = 0.0114;  // perturbation coefficient, 1/km
    double H = 5.0;         // nominal ocean depth, km
    double z_min = -3.0;    // top of computational window, km
    double z_max = 10.0;    // bottom of computational window, km
};

// Smooth channel potential,
//   V0(z) = (B gamma / 2) (e^{-eta} - 1 + eta),  eta = 2 (z - z_axis) / B.
// Zero at the axis, quadratic nearby, exponential toward the surface and
// asymptotically linear below. Evaluated by the same formula over the whole
// window, including z < 0; there is no explicit surface model.
double munk_potential(const WaveguideParams& wg, double z);

// First derivative dV0/dz, used by tests and diagnostics.
double munk_potential_dz(const WaveguideParams& wg, double z);

struct InternalWaveParams {
    double energy = 6.3e-5;          // spectrum energy level, dimensionless
    double n0 = 1.0471975511965976e-2;      // buoyancy frequency at z=0: 2*pi/600 rad/s
    double f_inertial = 7.2722052166430399e-5;  // inertial frequency: 2*pi/86400 rad/s
    int j_star = 3;                  // modal bandwidth parameter
    int j_max = 30;                  // number of vertical modes kept
    double g = 9.81;                 // gravitational acceleration, m/s^2
    int n_kl = 512;                  // horizontal wavenumber samples
    double kl_min = 6.2831853071795862e-2;  // 2*pi*0.01 rad/km
    double kl_max = 6.2831853071795862;     // 2*pi*1.0  rad/km
    double strength_scale = 1.0;     // global multiplier on the perturbation amplitude

    // Uniform horizontal wavenumber grid (rad/km) and its spacing.
    Eigen::VectorXd kl_grid() const;
    double dkl() const;

    // Modal normalization sum M = (pi j* - 1) / (2 j*^2) for the j^-2 tail.
    double mode_sum_norm() const;
};

// Exponential stratification profile N(z) = n0 e^{-z/B}, rad/s.
double buoyancy_freq(const WaveguideParams& wg, const InternalWaveParams& iw, double z);

// Reference vertical wavenumber of internal-wave mode j,
//   k_j = f_inertial * pi * j / (n0 * B),  returned in rad/km.
double iw_mode_wavenumber(const WaveguideParams& wg, const InternalWaveParams& iw, int j);

// Displacement-spectrum integral I_{j,kl} over internal-wave frequencies,
// via the closed form
//   k_j I = 1/(b^2+1) + (b^2/2)/(b^2+1)^{3/2} ln[(sqrt(b^2+1)+1)/(sqrt(b^2+1)-1)],
// b = kl/k_j. Returned in km (i.e. already divided by k_j in rad/km).
double iw_spectrum_integral(const WaveguideParams& wg, const InternalWaveParams& iw,
                            int j, double kl);

// Spectral amplitude factor sqrt(I_{j,kl} / (j^2 + j*^2)), km^{1/2}.
double iw_spectral_weight(const WaveguideParams& wg, const InternalWaveParams& iw,
                          int j, double kl);

// Depth profile of vertical mode j including the full physical prefactor:
//   P0 * exp(-3z/(2B)) * sin(j pi xi(z)),   xi(z) = e^{-z/B} - e^{-H/B},
// where
//   P0 = (24.5 / g) * 1000 * (2B/pi) * n0^2 * sqrt(energy * dkl / M).
// Unit audit: the 24.5 s^2/m convention wants the modal displacement amplitude
// (2B/pi) sqrt(I dkl / ...) in meters; with B, I, dkl carried in km that
// amplitude is 1000x too small, hence the single factor of 1000 here. The
// product of this profile with the spectral weight above is dimensionless.
// strength_scale is applied here, so it propagates consistently to sampled
// fields and to second-moment predictions.
double iw_mode_profile(const WaveguideParams& wg, const InternalWaveParams& iw,
                       int j, double z);

// One frozen internal-wave field: independent uniform phases on the
// (mode, wavenumber) lattice. phase(j-1, l) depends only on (seed, j, l).
struct IWRealization {
    std::uint64_t seed = 0;
    Eigen::MatrixXd phase;  // j_max x n_kl, values in [0, 2*pi)
};

IWRealization sample_iw_realization(std::uint64_t seed, const InternalWaveParams& iw);

// Pointwise fractional sound-speed perturbation
//   eps V1(z, r) = sum_j iw_mode_profile(j, z) *
//                  sum_l iw_spectral_weight(j, kl) cos(phase_jl + kl r).
// Direct double sum; intended for spot checks and small evaluations.
double eval_perturbation(const IWRealization& rz, double z, double r,
                         const WaveguideParams& wg, const InternalWaveParams& iw);

// Cached evaluator for propagation loops. Separates the perturbation into a
// depth factor matrix F (grid x j) and complex range coefficients
// c_{jl} = weight_jl e^{i phase_jl}, so a full-depth profile at range r costs
// one n_kl-length phasor sweep plus one (grid x j) matrix-vector product.
class PerturbationField {
  public:
    PerturbationField(std::shared_ptr<const DepthGrid> grid,
                      const WaveguideParams& wg, const InternalWaveParams& iw,
                      const IWRealization& rz);

    // eps V1 on the whole depth grid at range r (km).
    Eigen::VectorXd profile(double r) const;

    // Accumulate profile(r) into out (size = grid points).
    void add_profile(double r, Eigen::Ref<Eigen::VectorXd> out) const;

    const DepthGrid& grid() const { return *grid_; }
    std::uint64_t seed() const { return seed_; }

  private:
    Eigen::VectorXd range_coeffs(double r) const;  // c_j(r), length j_max

    std::shared_ptr<const DepthGrid> grid_;
    Eigen::MatrixXd depth_modes_;    // grid x j_max: full-prefactor profiles
    Eigen::MatrixXcd spectral_;      // j_max x n_kl: weight * e^{i phase}
    Eigen::VectorXd kl_;             // rad/km
    std::uint64_t seed_ = 0;
};

} // namespace tfrmt
