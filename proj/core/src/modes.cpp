#include "tfrmt/modes.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tfrmt {

namespace {

// Orient one eigenvector to the sign convention: positive at the first
// interior extremum of the classically allowed region.
void orient_mode(const DepthGrid& grid, const WaveguideParams& wg, double e_m,
                 Eigen::Ref<Eigen::VectorXd> psi) {
    const int n = grid.size();
    int lo = 0;
    while (lo < n && munk_potential(wg, grid.z(lo)) > e_m) ++lo;
    if (lo >= n - 2) lo = 0;  // degenerate window; fall back to full scan

    const double floor = 1e-3 * psi.cwiseAbs().maxCoeff();
    double ref = 0.0;
    for (int i = std::max(lo, 1); i + 1 < n; ++i) {
        const double a = std::abs(psi(i));
        if (a >= std::abs(psi(i - 1)) && a >= std::abs(psi(i + 1)) && a > floor) {
            ref = psi(i);
            break;
        }
    }
    if (ref == 0.0) {
        int imax = 0;
        psi.cwiseAbs().maxCoeff(&imax);
        ref = psi(imax);
    }
    if (ref < 0.0) psi = -psi;
}

} // namespace

ModeBasis solve_modes(double k, const WaveguideParams& wg,
                      std::shared_ptr<const DepthGrid> grid, int m_requested) {
    if (!(k > 0.0))
        throw std::invalid_argument("solve_modes: wavenumber must be positive");
    if (!grid)
        throw std::invalid_argument("solve_modes: null grid");

    const int n = grid->size();
    const double dz = grid->dz;
    const double inv2 = 1.0 / (dz * dz);

    // Tridiagonal operator: -(1/2) D2 + k^2 V0.
    std::vector<double> diag(n), offd(n - 1, -0.5 * inv2);
    for (int i = 0; i < n; ++i)
        diag[i] = inv2 + k * k * munk_potential(wg, grid->z(i));

    const double chan_threshold = munk_potential(wg, 0.0);
    const double edge_threshold =
        std::min(munk_potential(wg, grid->z_min()), munk_potential(wg, grid->z_max()));

    // Pass 1: count/locate eigenvalues without vectors. (Dummy z/isuppz:
    // jobz='N' leaves them untouched, but some LAPACKE builds dislike null.)
    int m_found = 0;
    std::vector<double> w(n);
    {
        std::vector<double> d(diag), e(offd);
        double zdummy = 0.0;
        lapack_int sdummy[2] = {0, 0};
        lapack_int info;
        if (m_requested == 0) {
            info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'N', 'V', n, d.data(), e.data(),
                                  0.0, k * k * chan_threshold, 0, 0, 0.0, &m_found,
                                  w.data(), &zdummy, 1, sdummy);
        } else {
            info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'N', 'I', n, d.data(), e.data(),
                                  0.0, 0.0, 1, m_requested, 0.0, &m_found,
                                  w.data(), &zdummy, 1, sdummy);
        }
        if (info != 0)
            throw std::runtime_error("solve_modes: eigenvalue count failed, info=" +
                                     std::to_string(info));
    }

    if (m_requested > 0) {
        if (m_found < m_requested)
            throw std::runtime_error("solve_modes: solver returned fewer modes than requested");
        const double top = w[m_requested - 1] / (k * k);
        if (top >= edge_threshold)
            throw std::invalid_argument(
                "solve_modes: requested mode count exceeds modes trapped by the window "
                "(E_" + std::to_string(m_requested - 1) + " = " + std::to_string(top) + ")");
    }

    ModeBasis basis;
    basis.k = k;
    basis.grid = grid;
    basis.threshold = (m_requested == 0) ? chan_threshold : edge_threshold;
    basis.M = (m_requested == 0) ? m_found : m_requested;

    if (basis.M == 0) {
        basis.psi.resize(n, 0);
        basis.E.resize(0);
        return basis;
    }

    // Pass 2: eigenvectors for the lowest M.
    {
        std::vector<double> d(diag), e(offd);
        std::vector<lapack_int> isuppz(2 * basis.M);
        basis.psi.resize(n, basis.M);
        int m_got = 0;
        lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', n, d.data(), e.data(),
                                         0.0, 0.0, 1, basis.M, 0.0, &m_got, w.data(),
                                         basis.psi.data(), n, isuppz.data());
        if (info != 0 || m_got != basis.M)
            throw std::runtime_error("solve_modes: eigenvector pass failed, info=" +
                                     std::to_string(info));
    }

    basis.E.resize(basis.M);
    for (int m = 0; m < basis.M; ++m)
        basis.E(m) = w[m] / (k * k);

    // Renormalize under the trapezoid weights and fix signs.
    for (int m = 0; m < basis.M; ++m) {
        auto col = basis.psi.col(m);
        const double nrm2 = (grid->w.array() * col.array().square()).sum();
        col /= std::sqrt(nrm2);
        orient_mode(*grid, wg, basis.E(m), col);
    }
    return basis;
}

Eigen::VectorXcd project(const ModeBasis& basis, const Eigen::VectorXcd& field) {
    if (field.size() != basis.grid->size())
        throw std::invalid_argument("project: field length does not match basis grid");
    return basis.psi.transpose() * (basis.grid->w.array() * field.array()).matrix();
}

CouplingTensor::CouplingTensor(const ModeBasis& basis, const WaveguideParams& wg,
                               const InternalWaveParams& iw)
    : basis_(basis), wg_(wg), iw_(iw), kl_(iw.kl_grid()),
      overlaps_(iw.j_max), built_(iw.j_max, 0) {
    if (basis_.M == 0)
        throw std::invalid_argument("CouplingTensor: empty mode basis");
}

const Eigen::MatrixXd& CouplingTensor::mode_overlap(int j) {
    if (j < 1 || j > iw_.j_max)
        throw std::invalid_argument("CouplingTensor: mode index outside [1, j_max]");
    std::lock_guard<std::mutex> lock(build_mutex_);
    if (!built_[j - 1]) {
        const auto& grid = *basis_.grid;
        Eigen::VectorXd fw(grid.size());
        for (int i = 0; i < grid.size(); ++i)
            fw(i) = grid.w(i) * iw_mode_profile(wg_, iw_, j, grid.z(i));
        Eigen::MatrixXd weighted = fw.asDiagonal() * basis_.psi;
        overlaps_[j - 1].noalias() = basis_.psi.transpose() * weighted;
        built_[j - 1] = 1;
    }
    return overlaps_[j - 1];
}

double CouplingTensor::element(int j, int l, int m, int n) {
    if (l < 0 || l >= iw_.n_kl)
        throw std::invalid_argument("CouplingTensor: wavenumber index out of range");
    if (m < 0 || m >= basis_.M || n < 0 || n >= basis_.M)
        throw std::invalid_argument("CouplingTensor: mode index out of range");
    return iw_spectral_weight(wg_, iw_, j, kl_(l)) * mode_overlap(j)(m, n);
}

Eigen::MatrixXd CouplingTensor::block(int j, int l, int m0, int m1, int n0, int n1) {
    if (l < 0 || l >= iw_.n_kl)
        throw std::invalid_argument("CouplingTensor: wavenumber index out of range");
    if (m0 < 0 || m1 > basis_.M || n0 < 0 || n1 > basis_.M || m0 >= m1 || n0 >= n1)
        throw std::invalid_argument("CouplingTensor: invalid block extents");
    return iw_spectral_weight(wg_, iw_, j, kl_(l)) *
           mode_overlap(j).block(m0, n0, m1 - m0, n1 - n0);
}

} // namespace tfrmt
