#include "tfrmt/rmt.hpp"

#include "tfrmt/environment.hpp"
#include "tfrmt/modes.hpp"
#include "tfrmt/timefront.hpp"

#include <benchmark/benchmark.h>

namespace {

struct Setup {
    tfrmt::WaveguideParams wg;
    tfrmt::InternalWaveParams iw;
    tfrmt::ModeBasis basis;
    tfrmt::VarianceProfile vp;

    explicit Setup(int nz) {
        tfrmt::SourceSpec src;
        auto grid = tfrmt::DepthGrid::make(wg.z_min, wg.z_max, nz);
        basis = tfrmt::solve_modes(src.k0(wg), wg, grid, 0);
        vp = tfrmt::variance_profile(basis, wg, iw, 50.0);
    }
};

Setup& shared_setup() {
    static Setup s(4096);
    return s;
}

void bm_variance_profile(benchmark::State& state) {
    Setup& s = shared_setup();
    for (auto _ : state) {
        auto vp = tfrmt::variance_profile(s.basis, s.wg, s.iw, 50.0);
        benchmark::DoNotOptimize(vp.s.data());
    }
}

void bm_draw_block(benchmark::State& state) {
    Setup& s = shared_setup();
    std::uint64_t seed = 1;
    for (auto _ : state) {
        Eigen::MatrixXcd a = tfrmt::hermitian_draw(s.vp.s, seed++);
        Eigen::MatrixXcd u = tfrmt::cayley_block(a, s.basis.E, s.basis.k, 50.0);
        benchmark::DoNotOptimize(u.data());
    }
    state.SetItemsProcessed(state.iterations());
}

void bm_draw_member_250km(benchmark::State& state) {
    Setup& s = shared_setup();
    tfrmt::RMTConfig cfg;
    int member = 0;
    for (auto _ : state) {
        auto u = tfrmt::draw_member(s.basis, s.vp, cfg, 250.0, 7, member++);
        benchmark::DoNotOptimize(u.U.data());
    }
    state.SetItemsProcessed(state.iterations());
}

} // namespace

BENCHMARK(bm_variance_profile)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_draw_block)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_draw_member_250km)->Unit(benchmark::kMillisecond);
