#include "tfrmt/modes.hpp"

#include <doctest.h>

#include <cmath>

using namespace tfrmt;

namespace {

std::shared_ptr<const DepthGrid> default_grid(int n) {
    WaveguideParams wg;
    return DepthGrid::make(wg.z_min, wg.z_max, n);
}

} // namespace

TEST_CASE("ground state matches the harmonic-oscillator value within 1%") {
    // Near the axis the channel is quadratic, V ~ (gamma/B)(z - z_a)^2, so
    // E_0 ~ omega/(2k) with omega = sqrt(2 gamma / B). Anharmonic corrections
    // are a few tenths of a percent at 75 Hz.
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    const ModeBasis basis = solve_modes(k, wg, default_grid(16384), 0);
    REQUIRE(basis.M > 10);
    const double e0_harmonic = 2.3871656935321793e-04;
    CHECK(std::abs(basis.E(0) / e0_harmonic - 1.0) < 0.01);

    // level spacing near the bottom is also harmonic to ~1%
    CHECK(std::abs((basis.E(1) - basis.E(0)) / (2.0 * e0_harmonic) - 1.0) < 0.02);
}

TEST_CASE("modes are orthonormal under the grid inner product") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(8192);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    const Eigen::MatrixXd gram =
        basis.psi.transpose() * grid->w.asDiagonal() * basis.psi;
    const Eigen::MatrixXd dev = gram - Eigen::MatrixXd::Identity(basis.M, basis.M);
    CHECK(dev.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("eigenpairs satisfy the discrete equation") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 40.0 / wg.c0;
    auto grid = default_grid(4096);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    REQUIRE(basis.M > 4);

    const int n = static_cast<int>(grid->z.size());
    const double idz2 = 1.0 / (grid->dz * grid->dz);
    for (int m : {0, basis.M / 2, basis.M - 1}) {
        double worst = 0.0;
        for (int i = 1; i + 1 < n; ++i) {
            const double lap = (basis.psi(i - 1, m) - 2.0 * basis.psi(i, m) +
                                basis.psi(i + 1, m)) * idz2;
            const double res = -0.5 * lap / (k * k) +
                               munk_potential(wg, grid->z(i)) * basis.psi(i, m) -
                               basis.E(m) * basis.psi(i, m);
            worst = std::max(worst, std::abs(res));
        }
        CHECK(worst < 1e-9 * k);
    }
}

TEST_CASE("mode m has m interior sign changes") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    const ModeBasis basis = solve_modes(k, wg, default_grid(8192), 0);
    for (int m = 0; m < std::min(basis.M, 12); ++m) {
        int crossings = 0;
        double prev = 0.0;
        for (int i = 0; i < basis.psi.rows(); ++i) {
            const double v = basis.psi(i, m);
            if (std::abs(v) < 1e-12) continue;
            if (prev != 0.0 && v * prev < 0.0) ++crossings;
            prev = v;
        }
        CHECK(crossings == m);
    }
}

TEST_CASE("automatic mode count stops at the channel threshold") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(8192);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    const double v_surface = munk_potential(wg, 0.0);
    CHECK(basis.threshold == doctest::Approx(v_surface).epsilon(1e-12));
    CHECK(basis.E(basis.M - 1) < v_surface);

    // one extra requested mode must lie at or above the threshold
    const ModeBasis more = solve_modes(k, wg, grid, basis.M + 1);
    REQUIRE(more.M == basis.M + 1);
    CHECK(more.E(basis.M) >= v_surface);
    // and the shared part agrees
    CHECK((more.E.head(basis.M) - basis.E).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("eigenvalues are grid-converged at depth-resolution extremes") {
    // low frequency stresses the solver least in k but the window is fixed,
    // so halving dz twice from an already fine grid must leave E unchanged
    // to the discretization order
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 25.0 / wg.c0;
    const ModeBasis coarse = solve_modes(k, wg, default_grid(1 << 18), 8);
    const ModeBasis fine = solve_modes(k, wg, default_grid(1 << 19), 8);
    REQUIRE(coarse.M == 8);
    REQUIRE(fine.M == 8);
    for (int m = 0; m < 8; ++m)
        CHECK(std::abs(coarse.E(m) - fine.E(m)) < 5e-8 * fine.E(m) + 1e-14);
}

TEST_CASE("projection inverts synthesis on the basis") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    const ModeBasis basis = solve_modes(k, wg, default_grid(4096), 0);
    REQUIRE(basis.M > 6);
    Eigen::VectorXcd field = basis.psi.col(5).cast<std::complex<double>>();
    Eigen::VectorXcd a = project(basis, field);
    a(5) -= 1.0;
    CHECK(a.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("coupling overlaps match direct quadrature") {
    WaveguideParams wg;
    InternalWaveParams iw;
    iw.j_max = 4;
    iw.n_kl = 8;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(2048);
    const ModeBasis basis = solve_modes(k, wg, grid, 10);
    CouplingTensor ct(basis, wg, iw);

    const Eigen::MatrixXd& w2 = ct.mode_overlap(2);
    CHECK(w2.rows() == 10);
    CHECK((w2 - w2.transpose()).cwiseAbs().maxCoeff() < 1e-14);

    // direct trapezoid for a couple of entries
    for (auto [m, n] : {std::pair{0, 1}, std::pair{3, 7}}) {
        double acc = 0.0;
        for (int i = 0; i < grid->z.size(); ++i)
            acc += grid->w(i) * iw_mode_profile(wg, iw, 2, grid->z(i)) *
                   basis.psi(i, m) * basis.psi(i, n);
        CHECK(w2(m, n) == doctest::Approx(acc).epsilon(1e-12).scale(1e-10));
    }

    // element = spectral weight x overlap
    const Eigen::VectorXd kl = iw.kl_grid();
    CHECK(ct.element(2, 3, 0, 1) ==
          doctest::Approx(iw_spectral_weight(wg, iw, 2, kl(3)) * w2(0, 1)).epsilon(1e-13));

    const Eigen::MatrixXd blk = ct.block(2, 3, 0, 4, 2, 6);
    CHECK(blk(1, 0) == doctest::Approx(ct.element(2, 3, 1, 2)).epsilon(1e-13));
}
