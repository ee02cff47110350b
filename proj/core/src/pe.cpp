#include "tfrmt/pe.hpp"

#include "fft_lock.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>

namespace tfrmt {

namespace {

// Unit complex rotation by a small angle without a sincos call. The
// perturbation phase per half step is k |eps V1| dr/2 ~ 1e-2 rad, so a short
// Maclaurin pair is exact to ~1e-15 there; the rare large values inside the
// sponge fall back to the library call.
inline std::complex<double> small_rot(double th) {
    if (std::abs(th) > 0.03)
        return {std::cos(th), std::sin(th)};
    const double t2 = th * th;
    const double c = 1.0 + t2 * (-0.5 + t2 * (1.0 / 24.0 + t2 * (-1.0 / 720.0)));
    const double s = th * (1.0 + t2 * (-1.0 / 6.0 + t2 * (1.0 / 120.0 + t2 * (-1.0 / 5040.0))));
    return {c, s};
}

} // namespace

struct SplitStepPropagator::Fft {
    int n = 0;
    fftw_complex* buf = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    // scratch reused by step(); sized lazily
    mutable Eigen::VectorXd pert_profile;

    explicit Fft(int n_) : n(n_) {
        buf = fftw_alloc_complex(static_cast<size_t>(n));
        if (!buf) throw std::bad_alloc();
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        fwd = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!fwd || !bwd) throw std::runtime_error("fftw plan creation failed");
    }
    ~Fft() {
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
        fftw_free(buf);
    }
};

SplitStepPropagator::SplitStepPropagator(std::shared_ptr<const DepthGrid> grid, double k,
                                         const WaveguideParams& wg, const PEConfig& cfg,
                                         const PerturbationField* pert)
    : grid_(std::move(grid)), k_(k), cfg_(cfg), pert_(pert) {
    if (!grid_) throw std::invalid_argument("pe: null grid");
    if (k_ <= 0.0) throw std::invalid_argument("pe: wavenumber must be positive");
    if (cfg_.dr <= 0.0) throw std::invalid_argument("pe: range step must be positive");
    if (pert_ && &pert_->grid() != grid_.get() && pert_->grid().z.size() != grid_->z.size())
        throw std::invalid_argument("pe: perturbation field lives on a different grid");

    const int n = static_cast<int>(grid_->z.size());
    const double span = grid_->z(n - 1) - grid_->z(0);
    if (cfg_.absorber_width * 2.0 >= span)
        throw std::invalid_argument("pe: absorber covers the whole window");

    // Static half-step factor: background phase and sponge decay.
    static_half_.resize(n);
    for (int i = 0; i < n; ++i) {
        const double z = grid_->z(i);
        const double v0 = munk_potential(wg, z);
        double sponge = 0.0;
        const double d_lo = z - grid_->z(0);
        const double d_hi = grid_->z(n - 1) - z;
        const double wd = cfg_.absorber_width;
        if (d_lo < wd) {
            const double t = std::sin(0.5 * M_PI * (1.0 - d_lo / wd));
            sponge = cfg_.absorber_strength * t * t;
        } else if (d_hi < wd) {
            const double t = std::sin(0.5 * M_PI * (1.0 - d_hi / wd));
            sponge = cfg_.absorber_strength * t * t;
        }
        // V -> V0 - i alpha s(z): exp(-i k V dr/2) = exp(-i k V0 dr/2) exp(-k alpha s dr/2)
        const double decay = std::exp(-k_ * sponge * 0.5 * cfg_.dr);
        static_half_(i) = std::polar(decay, -k_ * v0 * 0.5 * cfg_.dr);
    }

    // Kinetic factor at the discrete Laplacian dispersion, fftw layout,
    // with the 1/n round-trip normalization folded in.
    kinetic_.resize(n);
    const double dz = grid_->dz;
    for (int q = 0; q < n; ++q) {
        const double theta = 2.0 * M_PI * static_cast<double>(q) / static_cast<double>(n);
        const double sym = (2.0 - 2.0 * std::cos(theta)) / (dz * dz);
        kinetic_(q) = std::polar(1.0 / static_cast<double>(n), -sym * 0.5 * cfg_.dr / k_);
    }

    fft_ = std::make_unique<Fft>(n);
}

SplitStepPropagator::~SplitStepPropagator() = default;

void SplitStepPropagator::step(Eigen::Ref<Eigen::VectorXcd> field, double r) const {
    const int n = fft_->n;
    if (field.size() != n) throw std::invalid_argument("pe: field size mismatch");

    auto* buf = reinterpret_cast<std::complex<double>*>(fft_->buf);
    const double r_mid = r + 0.5 * cfg_.dr;

    if (pert_) {
        Eigen::VectorXd& dv = fft_->pert_profile;
        if (dv.size() != n) dv.resize(n);
        dv.setZero();
        pert_->add_profile(r_mid, dv);
        const double scale = -k_ * 0.5 * cfg_.dr;
        for (int i = 0; i < n; ++i)
            buf[i] = field(i) * static_half_(i) * small_rot(scale * dv(i));
        fftw_execute(fft_->fwd);
        for (int i = 0; i < n; ++i) buf[i] *= kinetic_(i);
        fftw_execute(fft_->bwd);
        for (int i = 0; i < n; ++i)
            field(i) = buf[i] * static_half_(i) * small_rot(scale * dv(i));
    } else {
        for (int i = 0; i < n; ++i) buf[i] = field(i) * static_half_(i);
        fftw_execute(fft_->fwd);
        for (int i = 0; i < n; ++i) buf[i] *= kinetic_(i);
        fftw_execute(fft_->bwd);
        for (int i = 0; i < n; ++i) field(i) = buf[i] * static_half_(i);
    }
}

PEResult SplitStepPropagator::propagate(Eigen::VectorXcd field, double r0, double r1) const {
    if (r1 < r0) throw std::invalid_argument("pe: backward march not supported");
    const double span = r1 - r0;
    const long long nsteps = std::llround(span / cfg_.dr);
    if (std::abs(static_cast<double>(nsteps) * cfg_.dr - span) > 1e-9 * std::max(1.0, span))
        throw std::invalid_argument("pe: range interval is not a whole number of steps");

    const double norm_in = grid_->dz * field.squaredNorm();
    for (long long s = 0; s < nsteps; ++s)
        step(field, r0 + static_cast<double>(s) * cfg_.dr);
    const double norm_out = grid_->dz * field.squaredNorm();

    PEResult out;
    out.field = std::move(field);
    out.steps = static_cast<int>(nsteps);
    out.absorbed_fraction = (norm_in > 0.0) ? 1.0 - norm_out / norm_in : 0.0;
    out.absorber_warning = out.absorbed_fraction > 1e-2;
    return out;
}

double unitarity_defect(const Eigen::MatrixXcd& U) {
    const Eigen::MatrixXcd G = U * U.adjoint();
    const Eigen::Index m = G.rows();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::complex<double> want = (i == j) ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(G(i, j) - want));
        }
    return worst;
}

UnitaryPropagator extract_unitary(const ModeBasis& basis, const WaveguideParams& wg,
                                  const PEConfig& cfg, double range,
                                  const PerturbationField* pert, double tol) {
    if (basis.M <= 0) throw std::invalid_argument("extract_unitary: empty mode basis");
    if (range <= 0.0) throw std::invalid_argument("extract_unitary: range must be positive");
    if (tol <= 0.0) tol = cfg.unitarity_tol;

    SplitStepPropagator prop(basis.grid, basis.k, wg, cfg, pert);

    const int M = basis.M;
    UnitaryPropagator up;
    up.U.resize(M, M);
    up.k = basis.k;
    up.r = range;
    up.blocks = 1;
    up.origin = pert ? "pe" : "free";
    up.seed = pert ? pert->seed() : 0;

    for (int ncol = 0; ncol < M; ++ncol) {
        Eigen::VectorXcd f = basis.psi.col(ncol).cast<std::complex<double>>();
        PEResult res = prop.propagate(std::move(f), 0.0, range);
        up.U.col(ncol) = project(basis, res.field);
    }

    up.defect = unitarity_defect(up.U);
    if (up.defect > tol)
        throw std::runtime_error("extract_unitary: unitarity defect " +
                                 std::to_string(up.defect) + " exceeds tolerance " +
                                 std::to_string(tol));
    return up;
}

} // namespace tfrmt
