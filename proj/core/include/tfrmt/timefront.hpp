#pragma once

#include "tfrmt/depth_grid.hpp"
#include "tfrmt/environment.hpp"
#include "tfrmt/modes.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace tfrmt {

// Broadband Gaussian pulse: center frequency and bandwidth in Hz, depth
// location and vertical 1/e half-width of the starting field in km.
struct SourceSpec {
    double f0 = 75.0;
    double sigma_f = 18.75;
    double z_src = 1.0;
    double w_src = 0.1;

    double k0(const WaveguideParams& wg) const { return 2.0 * M_PI * f0 / wg.c0; }
    double sigma_k(const WaveguideParams& wg) const { return 2.0 * M_PI * sigma_f / wg.c0; }
};

// Uniform acoustic wavenumber grid covering the source band.
struct KGrid {
    Eigen::VectorXd k;      // ascending, uniform, rad/km
    double dk = 0.0;
    double k0 = 0.0;        // band center, rad/km
    double sigma_k = 0.0;   // band width, rad/km

    int size() const { return static_cast<int>(k.size()); }
    // Gaussian spectral weight exp(-(k-k0)^2 / (2 sigma_k^2)).
    double weight(double kv) const;
    // Trapezoid end-weight for sample i (1/2 at the ends, 1 inside).
    double quad_weight(int i) const;
};

// Build a grid of nk samples spanning k0 +- span_sigmas * sigma_k.
// Errors: f0 <= 3 sigma_f (negative-wavenumber weight not negligible),
// negative k_lo, or truncated spectral mass above 1e-4 of the total
// (span_sigmas >= 3.9 keeps it under; the default 4 truncates 6.3e-5 of the
// mass, with an edge weight value of e^{-8} ~ 3.3e-4 of the peak).
KGrid make_k_grid(const SourceSpec& src, const WaveguideParams& wg, int nk,
                  double span_sigmas = 4.0);

// Normalized Gaussian starting field g(z) = (2/(pi w^2))^{1/4} e^{-(z-z_src)^2/w^2},
// unit L2 norm in continuous z. Errors if w_src is not resolvable (< 3 dz).
Eigen::VectorXd source_profile(const SourceSpec& src, const DepthGrid& grid);

struct SourceWeights {
    Eigen::VectorXcd a;       // modal weights a_n = <psi_n, g>
    double spillover = 0.0;   // 1 - sum |a_n|^2, energy outside the trapped set
    bool warning = false;     // spillover > 1%
};

SourceWeights source_weights(const SourceSpec& src, const ModeBasis& basis);

// Per-wavenumber slice of a basis family, reduced to what synthesis needs:
// eigenvalues, mode shapes sampled on the output depth grid, source weights,
// and (for ensemble statistics paths) the coupling standard deviations.
// M may be zero at the bottom of the band; such slices contribute nothing.
struct BasisSlice {
    double k = 0.0;
    Eigen::VectorXd E;        // M
    Eigen::MatrixXd psi_out;  // nz_out x M
    Eigen::VectorXcd a;       // M
    Eigen::MatrixXd s;        // M x M coupling sigmas; empty unless needed
};

struct SynthesisConfig {
    // Center of the reduced-time window tau = t - r/c0, seconds. The window
    // spans tau_center + [-T/2, T/2) with T = 2 pi / (c0 dk).
    double tau_center = 0.0;
};

// One member's timefront on the (z_out, tau) grid, plus bookkeeping.
struct TimefrontGrid {
    Eigen::MatrixXcd phi;     // nz x nt
    Eigen::VectorXd z;        // km
    Eigen::VectorXd tau;      // s, reduced time t - r/c0
    double r = 0.0;           // km
    double tau_center = 0.0;
    // Quadrature value of integral dz dt |phi|^2 evaluated in mode space
    // (exact given mode orthonormality; independent of output decimation).
    double energy = 0.0;
    SourceSpec source;
    KGrid kgrid;
    std::string origin;       // "pe", "rmt", "free", "mixing"
    std::uint64_t seed = 0;
    int member = -1;
};

// Coherent broadband synthesis
//   Phi(z, tau) = (2 pi sigma_k^2 r)^{-1/2} sum_p dk theta_p w(k_p)
//                 sum_m b_m(k_p) psi_m(z; k_p) exp(-i k_p c0 tau),
// where b(k) are the modal amplitudes after propagation to range r
// (b = U(k) a(k)) supplied per slice. The tau dependence is evaluated as a
// length-nk DFT, so the window is T = 2 pi / (c0 dk) with resolution T/nk,
// circular in tau about tau_center.
TimefrontGrid synthesize(const std::vector<BasisSlice>& family, const KGrid& kg,
                         const Eigen::VectorXd& z_out,
                         const std::vector<Eigen::VectorXcd>& amplitudes,
                         const SourceSpec& src, const WaveguideParams& wg, double r,
                         const SynthesisConfig& cfg = {});

// Ensemble-averaged intensity and its second moment (for Monte-Carlo error
// bars): I = mean |phi|^2, I2 = mean |phi|^4, pointwise over members.
struct IntensityGrid {
    Eigen::MatrixXd I;        // nz x nt
    Eigen::MatrixXd I2;       // nz x nt, mean of squared intensity
    Eigen::VectorXd z;
    Eigen::VectorXd tau;
    double r = 0.0;
    int members = 0;
    std::string origin;
};

IntensityGrid average_intensity(const std::vector<TimefrontGrid>& members);

// Analytic single-block ensemble prediction for the scattering-induced
// intensity change ("mixing front"):
//   dI(z, tau) = (2 pi sigma_k^2 r_b)^{-1} sum_{m,n}
//     | sum_p dk theta_p w(k_p) 2 s_mn(k_p) e^{-i k_p r_b E_m(k_p)} a_n(k_p)
//           psi_m(z; k_p) e^{-i k_p c0 tau} |^2.
// Slices must carry s. Nonnegative by construction; zero wherever source
// weights or coupling vanish. tau_stride subsamples the synthesis tau grid.
IntensityGrid mixing_front(const std::vector<BasisSlice>& family, const KGrid& kg,
                           const Eigen::VectorXd& z_out, const SourceSpec& src,
                           const WaveguideParams& wg, double r_b,
                           const SynthesisConfig& cfg = {}, int tau_stride = 1);

} // namespace tfrmt
