#include "tfrmt/pe.hpp"

#include "tfrmt/environment.hpp"
#include "tfrmt/rng.hpp"
#include "tfrmt/timefront.hpp"

#include <benchmark/benchmark.h>

namespace {

// One split step on an nz-point grid, with and without the scattering field.
void bm_pe_step(benchmark::State& state, bool perturbed) {
    const int nz = static_cast<int>(state.range(0));
    tfrmt::WaveguideParams wg;
    tfrmt::InternalWaveParams iw;
    auto grid = tfrmt::DepthGrid::make(wg.z_min, wg.z_max, nz);

    tfrmt::SourceSpec src;
    const double k = src.k0(wg);
    std::unique_ptr<tfrmt::PerturbationField> pert;
    if (perturbed)
        pert = std::make_unique<tfrmt::PerturbationField>(
            grid, wg, iw, tfrmt::sample_iw_realization(1, iw));

    tfrmt::PEConfig cfg;
    tfrmt::SplitStepPropagator prop(grid, k, wg, cfg, pert.get());
    Eigen::VectorXcd psi = tfrmt::source_profile(src, *grid).cast<std::complex<double>>();

    double r = 0.0;
    for (auto _ : state) {
        prop.step(psi, r);
        r += cfg.dr;
        benchmark::DoNotOptimize(psi.data());
    }
    state.SetItemsProcessed(state.iterations());
}

} // namespace

BENCHMARK_CAPTURE(bm_pe_step, free, false)->Arg(4096)->Arg(8192);
BENCHMARK_CAPTURE(bm_pe_step, scattering, true)->Arg(4096)->Arg(8192)->Arg(16384);

BENCHMARK_MAIN();
