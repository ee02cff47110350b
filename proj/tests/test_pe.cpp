#include "tfrmt/pe.hpp"

#include "tfrmt/timefront.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>

using namespace tfrmt;

namespace {

std::shared_ptr<const DepthGrid> default_grid(int n) {
    WaveguideParams wg;
    return DepthGrid::make(wg.z_min, wg.z_max, n);
}

double trapz_norm(const DepthGrid& grid, const Eigen::VectorXcd& f) {
    return f.cwiseAbs2().dot(grid.w);
}

} // namespace

TEST_CASE("a trapped mode advances by its eigenphase in one step") {
    // The kinetic factor carries the dispersion of the same finite-difference
    // Laplacian the mode solver diagonalizes, so the only error left in one
    // step is the V0/kinetic splitting commutator, O(dr^3) per step. Higher
    // modes see larger commutators through their larger spatial extent.
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(4096);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    REQUIRE(basis.M > 10);

    PEConfig pc;
    SplitStepPropagator prop(grid, k, wg, pc, nullptr);

    auto step_error = [&](int m) {
        Eigen::VectorXcd f = basis.psi.col(m).cast<std::complex<double>>();
        prop.step(f, 0.0);
        const std::complex<double> phase =
            std::polar(1.0, -k * basis.E(m) * pc.dr);
        return (f - phase * basis.psi.col(m).cast<std::complex<double>>())
            .cwiseAbs()
            .maxCoeff();
    };

    CHECK(step_error(0) < 1e-7);
    CHECK(step_error(3) < 5e-7);
    CHECK(step_error(basis.M - 1) < 3e-6);
}

TEST_CASE("propagation conserves the norm of a trapped mode") {
    // Mode 0 at 75 Hz has ~17 sigma of clearance to the sponge, so both
    // factors of each step are exactly unimodular on its support.
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(4096);
    const ModeBasis basis = solve_modes(k, wg, grid, 1);

    PEConfig pc;
    SplitStepPropagator prop(grid, k, wg, pc, nullptr);
    PEResult res = prop.propagate(basis.psi.col(0).cast<std::complex<double>>(),
                                  0.0, 100.0 * pc.dr);
    CHECK(res.steps == 100);
    CHECK(std::abs(trapz_norm(*grid, res.field) - 1.0) < 1e-12);
    CHECK(std::abs(res.absorbed_fraction) < 1e-12);
    CHECK_FALSE(res.absorber_warning);
}

TEST_CASE("splitting error shrinks quadratically with the range step") {
    // Against a reference at dr/8, second order predicts error factors of
    // (16 - 1/4)/(4 - 1/4) = 4.2 and (4 - 1/4)/(1 - 1/4) = 5.0 between
    // successive halvings.
    WaveguideParams wg;
    InternalWaveParams iw;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(4096);
    const IWRealization rz = sample_iw_realization(99, iw);
    const PerturbationField pert(grid, wg, iw, rz);

    SourceSpec src;
    const Eigen::VectorXcd f0 = source_profile(src, *grid).cast<std::complex<double>>();
    auto run = [&](double dr) {
        PEConfig pc;
        pc.dr = dr;
        SplitStepPropagator prop(grid, k, wg, pc, &pert);
        return prop.propagate(f0, 0.0, 2.0).field;
    };

    const Eigen::VectorXcd ref = run(0.0005);
    const double e4 = (run(0.004) - ref).cwiseAbs().maxCoeff();
    const double e2 = (run(0.002) - ref).cwiseAbs().maxCoeff();
    const double e1 = (run(0.001) - ref).cwiseAbs().maxCoeff();

    CHECK(e2 < 2e-7);
    CHECK(e4 / e2 == doctest::Approx(4.2).epsilon(0.1));
    CHECK(e2 / e1 == doctest::Approx(5.0).epsilon(0.12));
}

TEST_CASE("marching in two legs equals one march") {
    // The potential is sampled at absolute midpoint ranges, so splitting a
    // march cannot change any step.
    WaveguideParams wg;
    InternalWaveParams iw;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(2048);
    const IWRealization rz = sample_iw_realization(7, iw);
    const PerturbationField pert(grid, wg, iw, rz);

    PEConfig pc;
    SplitStepPropagator prop(grid, k, wg, pc, &pert);
    SourceSpec src;
    const Eigen::VectorXcd f0 = source_profile(src, *grid).cast<std::complex<double>>();

    const Eigen::VectorXcd whole = prop.propagate(f0, 0.0, 4.0).field;
    const Eigen::VectorXcd legs =
        prop.propagate(prop.propagate(f0, 0.0, 2.0).field, 2.0, 4.0).field;
    CHECK((whole - legs).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("propagate rejects intervals that are not whole steps") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(512);
    PEConfig pc;
    SplitStepPropagator prop(grid, k, wg, pc, nullptr);
    Eigen::VectorXcd f = Eigen::VectorXcd::Zero(grid->size());
    CHECK_THROWS_AS(prop.propagate(f, 0.0, 1.5 * pc.dr), std::invalid_argument);
    CHECK_THROWS_AS(prop.propagate(f, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("mode-space extraction at zero perturbation is near-diagonal") {
    // Residual off-diagonals and diagonal phase error are both splitting
    // error, second order in dr; the defect itself sits orders below because
    // the split map stays unitary away from the sponge.
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(4096);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);

    PEConfig pc;
    const double range = 5.0;
    const UnitaryPropagator up = extract_unitary(basis, wg, pc, range, nullptr, 1.0);

    CHECK(up.origin == "free");
    CHECK(up.k == basis.k);
    CHECK(up.r == range);
    CHECK(up.defect < 1e-8);
    CHECK(up.defect == doctest::Approx(unitarity_defect(up.U)).epsilon(1e-12));

    double offmax = 0.0, phase_err = 0.0, mag_err = 0.0;
    for (int m = 0; m < basis.M; ++m) {
        for (int n = 0; n < basis.M; ++n)
            if (m != n) offmax = std::max(offmax, std::abs(up.U(m, n)));
        const std::complex<double> rot =
            up.U(m, m) * std::polar(1.0, k * basis.E(m) * range);
        phase_err = std::max(phase_err, std::abs(std::arg(rot)));
        mag_err = std::max(mag_err, std::abs(std::abs(up.U(m, m)) - 1.0));
    }
    CHECK(offmax < 1e-4);
    CHECK(phase_err < 1e-4);
    CHECK(mag_err < 1e-8);

    // the defect gate trips when asked for more than the march delivers
    CHECK_THROWS_AS(extract_unitary(basis, wg, pc, range, nullptr, 1e-12),
                    std::runtime_error);
}

TEST_CASE("the sponge drains energy parked inside it") {
    WaveguideParams wg;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    auto grid = default_grid(2048);

    SourceSpec src;
    src.z_src = 9.2;  // inside the lower absorber band
    PEConfig pc;
    SplitStepPropagator prop(grid, k, wg, pc, nullptr);
    PEResult res = prop.propagate(source_profile(src, *grid).cast<std::complex<double>>(),
                                  0.0, 1.0);
    CHECK(res.steps == 40);
    CHECK(res.absorbed_fraction > 0.5);
    CHECK(res.absorber_warning);
}

TEST_CASE("a perturbation field on a mismatched grid is rejected") {
    WaveguideParams wg;
    InternalWaveParams iw;
    iw.j_max = 2;
    iw.n_kl = 4;
    const double k = 2.0 * M_PI * 75.0 / wg.c0;
    const IWRealization rz = sample_iw_realization(1, iw);
    const PerturbationField pert(default_grid(512), wg, iw, rz);
    PEConfig pc;
    CHECK_THROWS_AS(SplitStepPropagator(default_grid(1024), k, wg, pc, &pert),
                    std::invalid_argument);
}
