#pragma once

#include "tfrmt/depth_grid.hpp"
#include "tfrmt/environment.hpp"
#include "tfrmt/modes.hpp"

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>

namespace tfrmt {

struct PEConfig {
    double dr = 0.025;              // range step, km
    double absorber_width = 1.5;    // sponge width at each window edge, km
    double absorber_strength = 1e-2;  // peak imaginary potential, dimensionless
    double unitarity_tol = 1e-6;    // extraction defect gate
};

struct PEResult {
    Eigen::VectorXcd field;
    double absorbed_fraction = 0.0;  // 1 - ||out||^2 / ||in||^2
    int steps = 0;
    bool absorber_warning = false;   // absorbed_fraction > 1%
};

// One-way split-step propagator for
//   (i/k) dPsi/dr = -(1/(2k^2)) d^2Psi/dz^2 + V(z, r) Psi,
// Strang-factorized per step as half-potential, spectral kinetic,
// half-potential, with V = V0 + eps V1 refreshed at the midpoint range of
// each step. The kinetic factor applies the dispersion of the same
// second-order finite-difference Laplacian the mode solver diagonalizes
// (2 - 2 cos(p dz))/dz^2 rather than p^2, so at eps = 0 the solved modes are
// stationary states of the discrete flow up to pure splitting error.
//
// An absorbing sponge (smooth imaginary potential ramp, sin^2 profile) fills
// the outer absorber_width of each window edge.
class SplitStepPropagator {
  public:
    SplitStepPropagator(std::shared_ptr<const DepthGrid> grid, double k,
                        const WaveguideParams& wg, const PEConfig& cfg,
                        const PerturbationField* pert = nullptr);
    ~SplitStepPropagator();

    SplitStepPropagator(const SplitStepPropagator&) = delete;
    SplitStepPropagator& operator=(const SplitStepPropagator&) = delete;

    // Advance one step from range r (km). The potential is sampled at r+dr/2.
    void step(Eigen::Ref<Eigen::VectorXcd> field, double r) const;

    // March from r0 to r1 (must be an integral number of steps).
    PEResult propagate(Eigen::VectorXcd field, double r0, double r1) const;

    double k() const { return k_; }
    double dr() const { return cfg_.dr; }
    const DepthGrid& grid() const { return *grid_; }

  private:
    struct Fft;

    std::shared_ptr<const DepthGrid> grid_;
    double k_;
    PEConfig cfg_;
    const PerturbationField* pert_;
    Eigen::VectorXcd static_half_;   // exp(-i k V0 dr/2) * sponge decay
    Eigen::VectorXcd kinetic_;       // exp(-i sym(p) dr/(2k)) / n
    std::unique_ptr<Fft> fft_;
};

// Propagator matrix in the mode basis over one range interval: column n is
// the propagated mode n projected back onto all modes. Produced either by
// direct integration (origin "pe") or by the statistical ensemble
// (origin "rmt"); "free" marks the unperturbed diagonal.
struct UnitaryPropagator {
    Eigen::MatrixXcd U;
    double k = 0.0;        // rad/km
    double r = 0.0;        // total range, km
    int blocks = 1;
    std::string origin;    // "pe", "rmt", "free"
    std::uint64_t seed = 0;
    double defect = 0.0;   // max |U U^H - I| measured at build time
};

// Max-norm unitarity defect ||U U^H - I||_max.
double unitarity_defect(const Eigen::MatrixXcd& U);

// Extract the mode-space propagator over [0, range] by propagating each mode
// of `basis` and projecting back. Throws if the defect exceeds `tol`
// (tol <= 0 uses cfg.unitarity_tol). Truncation to a finite mode set makes
// the defect physical, not numerical, once scattering reaches the band edge;
// callers studying perturbed statistics pass an explicit looser tol and the
// measured defect ships with the result.
UnitaryPropagator extract_unitary(const ModeBasis& basis, const WaveguideParams& wg,
                                  const PEConfig& cfg, double range,
                                  const PerturbationField* pert = nullptr,
                                  double tol = 0.0);

} // namespace tfrmt
