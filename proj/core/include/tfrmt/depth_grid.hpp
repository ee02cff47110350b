#pragma once

#include <Eigen/Dense>
#include <memory>

namespace tfrmt {

// Uniform vertical grid over the computational depth window. z is positive
// downward in km; negative z extends the window above the nominal surface so
// that steep-angle energy sees an absorber instead of a hard wall.
//
// Quadrature weights are trapezoid weights; every depth integral in the
// project (normalization, projections, coupling elements) uses these.
struct DepthGrid {
    Eigen::VectorXd z;  // km, ascending, uniform
    Eigen::VectorXd w;  // trapezoid weights, km
    double dz = 0.0;    // km

    int size() const { return static_cast<int>(z.size()); }
    double z_min() const { return z(0); }
    double z_max() const { return z(z.size() - 1); }

    static std::shared_ptr<const DepthGrid> make(double z_min, double z_max, int n);

    // Index of the grid point nearest to depth zq.
    int nearest(double zq) const;
};

} // namespace tfrmt
