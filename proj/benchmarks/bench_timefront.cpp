#include "tfrmt/timefront.hpp"

#include "tfrmt/config.hpp"
#include "tfrmt/experiment.hpp"

#include <benchmark/benchmark.h>

namespace {

// Full synthesis at ensemble scale: K wavenumbers onto a (z, tau) grid.
void bm_synthesize(benchmark::State& state) {
    const int nk = static_cast<int>(state.range(0));
    tfrmt::ExperimentConfig cfg;
    cfg.numerics.nz = 4096;
    cfg.outputs.z_stride = 8;

    tfrmt::BasisTable bt = tfrmt::build_basis_table(cfg, nk, false, 1);
    const std::vector<Eigen::VectorXcd> b = tfrmt::free_amplitudes(bt, 50.0);

    for (auto _ : state) {
        auto tg = tfrmt::synthesize(bt.slices, bt.kg, bt.z_out, b, cfg.source,
                                    cfg.waveguide, 50.0);
        benchmark::DoNotOptimize(tg.phi.data());
    }
}

} // namespace

BENCHMARK(bm_synthesize)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
