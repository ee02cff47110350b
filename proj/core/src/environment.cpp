#include "tfrmt/environment.hpp"

#include "tfrmt/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace tfrmt {

namespace {
constexpr double kTwoPi = 6.2831853071795864769252867665590;

void check_j(const InternalWaveParams& iw, int j) {
    if (j < 1 || j > iw.j_max)
        throw std::invalid_argument("internal-wave mode index outside [1, j_max]");
}
} // namespace

double munk_potential(const WaveguideParams& wg, double z) {
    const double eta = 2.0 * (z - wg.z_axis) / wg.B;
    return 0.5 * wg.B * wg.gamma * (std::expm1(-eta) + eta);
}

double munk_potential_dz(const WaveguideParams& wg, double z) {
    const double eta = 2.0 * (z - wg.z_axis) / wg.B;
    return wg.gamma * (1.0 - std::exp(-eta));
}

Eigen::VectorXd InternalWaveParams::kl_grid() const {
    return Eigen::VectorXd::LinSpaced(n_kl, kl_min, kl_max);
}

double InternalWaveParams::dkl() const {
    return (kl_max - kl_min) / (n_kl - 1);
}

double InternalWaveParams::mode_sum_norm() const {
    const double js = static_cast<double>(j_star);
    return (M_PI * js - 1.0) / (2.0 * js * js);
}

double buoyancy_freq(const WaveguideParams& wg, const InternalWaveParams& iw, double z) {
    return iw.n0 * std::exp(-z / wg.B);
}

double iw_mode_wavenumber(const WaveguideParams& wg, const InternalWaveParams& iw, int j) {
    check_j(iw, j);
    return iw.f_inertial * M_PI * j / (iw.n0 * wg.B);
}

double iw_spectrum_integral(const WaveguideParams& wg, const InternalWaveParams& iw,
                            int j, double kl) {
    const double kj = iw_mode_wavenumber(wg, iw, j);
    const double b2 = (kl / kj) * (kl / kj);
    const double s = std::sqrt(b2 + 1.0);
    const double closed =
        1.0 / (b2 + 1.0) + 0.5 * b2 / ((b2 + 1.0) * s) * std::log((s + 1.0) / (s - 1.0));
    return closed / kj;
}

double iw_spectral_weight(const WaveguideParams& wg, const InternalWaveParams& iw,
                          int j, double kl) {
    const double jsq = static_cast<double>(j) * j +
                       static_cast<double>(iw.j_star) * iw.j_star;
    return std::sqrt(iw_spectrum_integral(wg, iw, j, kl) / jsq);
}

namespace {
// Shared prefactor of the depth profiles; see header for the unit audit.
double profile_prefactor(const WaveguideParams& wg, const InternalWaveParams& iw) {
    return iw.strength_scale * (24.5 / iw.g) * 1000.0 * (2.0 * wg.B / M_PI) *
           iw.n0 * iw.n0 * std::sqrt(iw.energy * iw.dkl() / iw.mode_sum_norm());
}
} // namespace

double iw_mode_profile(const WaveguideParams& wg, const InternalWaveParams& iw,
                       int j, double z) {
    check_j(iw, j);
    const double xi = std::exp(-z / wg.B) - std::exp(-wg.H / wg.B);
    return profile_prefactor(wg, iw) * std::exp(-1.5 * z / wg.B) * std::sin(j * M_PI * xi);
}

IWRealization sample_iw_realization(std::uint64_t seed, const InternalWaveParams& iw) {
    IWRealization rz;
    rz.seed = seed;
    rz.phase.resize(iw.j_max, iw.n_kl);
    for (int j = 1; j <= iw.j_max; ++j)
        for (int l = 0; l < iw.n_kl; ++l)
            rz.phase(j - 1, l) = kTwoPi * rng::to_u01(rng::derive(seed, j, l));
    return rz;
}

double eval_perturbation(const IWRealization& rz, double z, double r,
                         const WaveguideParams& wg, const InternalWaveParams& iw) {
    if (z < wg.z_min || z > wg.z_max)
        throw std::invalid_argument("eval_perturbation: depth outside window");
    if (rz.phase.rows() != iw.j_max || rz.phase.cols() != iw.n_kl)
        throw std::invalid_argument("eval_perturbation: realization shape mismatch");

    const Eigen::VectorXd kl = iw.kl_grid();
    double sum = 0.0;
    for (int j = 1; j <= iw.j_max; ++j) {
        double cj = 0.0;
        for (int l = 0; l < iw.n_kl; ++l)
            cj += iw_spectral_weight(wg, iw, j, kl(l)) *
                  std::cos(rz.phase(j - 1, l) + kl(l) * r);
        sum += iw_mode_profile(wg, iw, j, z) * cj;
    }
    return sum;
}

PerturbationField::PerturbationField(std::shared_ptr<const DepthGrid> grid,
                                     const WaveguideParams& wg,
                                     const InternalWaveParams& iw,
                                     const IWRealization& rz)
    : grid_(std::move(grid)), seed_(rz.seed) {
    if (rz.phase.rows() != iw.j_max || rz.phase.cols() != iw.n_kl)
        throw std::invalid_argument("PerturbationField: realization shape mismatch");

    const int n = grid_->size();
    depth_modes_.resize(n, iw.j_max);
    for (int j = 1; j <= iw.j_max; ++j)
        for (int i = 0; i < n; ++i)
            depth_modes_(i, j - 1) = iw_mode_profile(wg, iw, j, grid_->z(i));

    kl_ = iw.kl_grid();
    spectral_.resize(iw.j_max, iw.n_kl);
    for (int j = 1; j <= iw.j_max; ++j)
        for (int l = 0; l < iw.n_kl; ++l)
            spectral_(j - 1, l) =
                iw_spectral_weight(wg, iw, j, kl_(l)) *
                std::complex<double>(std::cos(rz.phase(j - 1, l)),
                                     std::sin(rz.phase(j - 1, l)));
}

Eigen::VectorXd PerturbationField::range_coeffs(double r) const {
    Eigen::VectorXcd phasor(kl_.size());
    for (Eigen::Index l = 0; l < kl_.size(); ++l) {
        const double a = kl_(l) * r;
        phasor(l) = std::complex<double>(std::cos(a), std::sin(a));
    }
    return (spectral_ * phasor).real();
}

Eigen::VectorXd PerturbationField::profile(double r) const {
    return depth_modes_ * range_coeffs(r);
}

void PerturbationField::add_profile(double r, Eigen::Ref<Eigen::VectorXd> out) const {
    out.noalias() += depth_modes_ * range_coeffs(r);
}

} // namespace tfrmt
