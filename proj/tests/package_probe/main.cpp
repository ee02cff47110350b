// Smoke test for the installed package: built against an install prefix, not
// the build tree. Exercises the exported link closure (Eigen, Threads, the
// LAPACK-backed mode solver) and the flat-installed json header, and crosses
// the library boundary with heap-owning Eigen objects both ways.
#include "tfrmt/environment.hpp"
#include "tfrmt/gridfile.hpp"
#include "tfrmt/modes.hpp"

#include <cstdio>

int main() {
    tfrmt::WaveguideParams wg;
    auto grid = tfrmt::DepthGrid::make(wg.z_min, wg.z_max, 1024);
    auto modes = tfrmt::solve_modes(316.2677, wg, grid);
    if (modes.E.size() == 0) {
        std::puts("no trapped modes");
        return 1;
    }

    tfrmt::gridfile::Archive ar;
    ar.kind = "probe";
    ar.meta["modes"] = int(modes.E.size());
    ar.add("E", modes.E);
    ar.add("psi0", Eigen::VectorXd(modes.psi.col(0)));
    if (!ar.has("E") || ar.real_vec("E").size() != modes.E.size()) {
        std::puts("archive round trip failed");
        return 1;
    }

    std::printf("trapped modes: %d\n", int(modes.E.size()));
    return 0;
}
