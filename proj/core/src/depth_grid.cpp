#include "tfrmt/depth_grid.hpp"

#include <cmath>
#include <stdexcept>

namespace tfrmt {

std::shared_ptr<const DepthGrid> DepthGrid::make(double z_min, double z_max, int n) {
    if (!(z_max > z_min))
        throw std::invalid_argument("DepthGrid: z_max must exceed z_min");
    if (n < 16)
        throw std::invalid_argument("DepthGrid: need at least 16 points");

    auto g = std::make_shared<DepthGrid>();
    g->dz = (z_max - z_min) / (n - 1);
    g->z = Eigen::VectorXd::LinSpaced(n, z_min, z_max);
    g->w = Eigen::VectorXd::Constant(n, g->dz);
    g->w(0) *= 0.5;
    g->w(n - 1) *= 0.5;
    return g;
}

int DepthGrid::nearest(double zq) const {
    const double t = (zq - z(0)) / dz;
    long i = std::lround(t);
    if (i < 0) i = 0;
    if (i >= z.size()) i = z.size() - 1;
    return static_cast<int>(i);
}

} // namespace tfrmt
