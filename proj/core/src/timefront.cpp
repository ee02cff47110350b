#include "tfrmt/timefront.hpp"

#include "fft_lock.hpp"

#include <fftw3.h>

#include <cmath>
#include <stdexcept>

namespace tfrmt {

double KGrid::weight(double kv) const {
    const double u = (kv - k0) / sigma_k;
    return std::exp(-0.5 * u * u);
}

double KGrid::quad_weight(int i) const {
    return (i == 0 || i == size() - 1) ? 0.5 : 1.0;
}

KGrid make_k_grid(const SourceSpec& src, const WaveguideParams& wg, int nk,
                  double span_sigmas) {
    if (nk < 4) throw std::invalid_argument("k grid: need at least 4 samples");
    if (span_sigmas <= 0.0) throw std::invalid_argument("k grid: span must be positive");
    if (!(src.f0 > 3.0 * src.sigma_f))
        throw std::invalid_argument("k grid: f0 must exceed 3 sigma_f");

    const double k0 = src.k0(wg);
    const double sk = src.sigma_k(wg);
    double k_lo = k0 - span_sigmas * sk;
    const double k_hi = k0 + span_sigmas * sk;
    if (k_lo < -1e-12 * k0)
        throw std::invalid_argument("k grid: window reaches negative wavenumbers");
    if (k_lo < 0.0) k_lo = 0.0;

    // Spectral mass outside the window, as a fraction of the full Gaussian.
    const double clipped = 0.5 * std::erfc(span_sigmas / std::sqrt(2.0)) * 2.0;
    if (clipped > 1e-4)
        throw std::invalid_argument("k grid: window clips " + std::to_string(clipped) +
                                    " of the spectral mass (limit 1e-4)");

    KGrid kg;
    kg.k0 = k0;
    kg.sigma_k = sk;
    kg.dk = (k_hi - k_lo) / static_cast<double>(nk - 1);
    kg.k.resize(nk);
    for (int i = 0; i < nk; ++i) kg.k(i) = k_lo + kg.dk * static_cast<double>(i);
    return kg;
}

Eigen::VectorXd source_profile(const SourceSpec& src, const DepthGrid& grid) {
    if (src.w_src < 3.0 * grid.dz)
        throw std::invalid_argument("source width is not resolvable on the depth grid");
    const int n = static_cast<int>(grid.z.size());
    if (src.z_src < grid.z(0) || src.z_src > grid.z(n - 1))
        throw std::invalid_argument("source depth outside the depth window");

    const double c = std::pow(2.0 / (M_PI * src.w_src * src.w_src), 0.25);
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) {
        const double u = (grid.z(i) - src.z_src) / src.w_src;
        g(i) = c * std::exp(-u * u);
    }
    return g;
}

SourceWeights source_weights(const SourceSpec& src, const ModeBasis& basis) {
    SourceWeights out;
    if (basis.M == 0) {
        out.a.resize(0);
        out.spillover = 1.0;
        out.warning = true;
        return out;
    }
    const Eigen::VectorXd g = source_profile(src, *basis.grid);
    const Eigen::VectorXd ar = basis.psi.transpose() * basis.grid->w.cwiseProduct(g);
    out.a = ar.cast<std::complex<double>>();
    out.spillover = 1.0 - ar.squaredNorm();
    out.warning = out.spillover > 1e-2;
    return out;
}

namespace {

Eigen::VectorXd reduced_time_grid(int nk, double dk, double c0, double tau_center) {
    const double dt = 2.0 * M_PI / (static_cast<double>(nk) * c0 * dk);
    Eigen::VectorXd tau(nk);
    for (int j = 0; j < nk; ++j)
        tau(j) = tau_center + dt * static_cast<double>(j - nk / 2);
    return tau;
}

} // namespace

TimefrontGrid synthesize(const std::vector<BasisSlice>& family, const KGrid& kg,
                         const Eigen::VectorXd& z_out,
                         const std::vector<Eigen::VectorXcd>& amplitudes,
                         const SourceSpec& src, const WaveguideParams& wg, double r,
                         const SynthesisConfig& cfg) {
    const int nk = kg.size();
    if (static_cast<int>(family.size()) != nk || static_cast<int>(amplitudes.size()) != nk)
        throw std::invalid_argument("synthesize: family/amplitudes must match the k grid");
    if (r <= 0.0) throw std::invalid_argument("synthesize: range must be positive");
    const int nz = static_cast<int>(z_out.size());
    if (nz <= 0) throw std::invalid_argument("synthesize: empty output depth grid");

    const double c = 1.0 / std::sqrt(2.0 * M_PI * kg.sigma_k * kg.sigma_k * r);
    const double dt = 2.0 * M_PI / (static_cast<double>(nk) * wg.c0 * kg.dk);

    // Column p of f: dk theta_p w(k_p) sum_m b_m psi_m(z), with the
    // (-1)^p dft alignment factor and the window-center phase folded in.
    Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(nz, nk);
    double energy = 0.0;
    for (int p = 0; p < nk; ++p) {
        const BasisSlice& sl = family[p];
        const int m = static_cast<int>(sl.E.size());
        if (static_cast<int>(amplitudes[p].size()) != m)
            throw std::invalid_argument("synthesize: amplitude/basis size mismatch at a k sample");
        const double wq = kg.dk * kg.quad_weight(p) * kg.weight(kg.k(p));
        energy += wq * wq * amplitudes[p].squaredNorm();
        if (m == 0) continue;
        if (sl.psi_out.rows() != nz || sl.psi_out.cols() != m)
            throw std::invalid_argument("synthesize: slice mode table has wrong shape");
        const double sgn = (p % 2 == 0) ? 1.0 : -1.0;
        const std::complex<double> pref =
            sgn * wq *
            std::polar(1.0, -static_cast<double>(p) * kg.dk * wg.c0 * cfg.tau_center);
        f.col(p) = pref * (sl.psi_out * amplitudes[p]);
    }
    energy *= dt * static_cast<double>(nk) * c * c;

    // Row-wise dft over k.
    fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(nk));
    if (!buf) throw std::bad_alloc();
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        plan = fftw_plan_dft_1d(nk, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    if (!plan) {
        fftw_free(buf);
        throw std::runtime_error("synthesize: fftw plan creation failed");
    }

    TimefrontGrid tg;
    tg.phi.resize(nz, nk);
    tg.z = z_out;
    tg.tau = reduced_time_grid(nk, kg.dk, wg.c0, cfg.tau_center);
    tg.r = r;
    tg.tau_center = cfg.tau_center;
    tg.energy = energy;
    tg.source = src;
    tg.kgrid = kg;

    Eigen::VectorXcd outer(nk);
    for (int j = 0; j < nk; ++j)
        outer(j) = c * std::polar(1.0, -kg.k(0) * wg.c0 * tg.tau(j));

    auto* cbuf = reinterpret_cast<std::complex<double>*>(buf);
    for (int iz = 0; iz < nz; ++iz) {
        for (int p = 0; p < nk; ++p) cbuf[p] = f(iz, p);
        fftw_execute(plan);
        for (int j = 0; j < nk; ++j) tg.phi(iz, j) = outer(j) * cbuf[j];
    }

    {
        std::lock_guard<std::mutex> lock(detail::fft_plan_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return tg;
}

IntensityGrid average_intensity(const std::vector<TimefrontGrid>& members) {
    if (members.empty())
        throw std::invalid_argument("average_intensity: no members");
    const TimefrontGrid& first = members.front();
    const Eigen::Index nz = first.phi.rows();
    const Eigen::Index nt = first.phi.cols();

    IntensityGrid out;
    out.I = Eigen::MatrixXd::Zero(nz, nt);
    out.I2 = Eigen::MatrixXd::Zero(nz, nt);
    out.z = first.z;
    out.tau = first.tau;
    out.r = first.r;
    out.members = static_cast<int>(members.size());
    out.origin = first.origin;

    for (const TimefrontGrid& m : members) {
        if (m.phi.rows() != nz || m.phi.cols() != nt ||
            (m.z - first.z).cwiseAbs().maxCoeff() > 1e-12 ||
            (m.tau - first.tau).cwiseAbs().maxCoeff() > 1e-12 ||
            std::abs(m.r - first.r) > 1e-9)
            throw std::invalid_argument("average_intensity: mismatched member axes");
        if (m.origin != out.origin) out.origin = "mixed";
        const Eigen::MatrixXd ii = m.phi.cwiseAbs2();
        out.I += ii;
        out.I2 += ii.cwiseAbs2();
    }
    out.I /= static_cast<double>(out.members);
    out.I2 /= static_cast<double>(out.members);
    return out;
}

IntensityGrid mixing_front(const std::vector<BasisSlice>& family, const KGrid& kg,
                           const Eigen::VectorXd& z_out, const SourceSpec& src,
                           const WaveguideParams& wg, double r_b,
                           const SynthesisConfig& cfg, int tau_stride) {
    const int nk = kg.size();
    if (static_cast<int>(family.size()) != nk)
        throw std::invalid_argument("mixing_front: family must match the k grid");
    if (std::abs(kg.k0 - src.k0(wg)) > 1e-9 * kg.k0)
        throw std::invalid_argument("mixing_front: k grid was built for a different source");
    if (r_b <= 0.0) throw std::invalid_argument("mixing_front: block range must be positive");
    if (tau_stride < 1) throw std::invalid_argument("mixing_front: bad tau stride");
    const int nz = static_cast<int>(z_out.size());

    int m_max = 0;
    for (const BasisSlice& sl : family) {
        const int m = static_cast<int>(sl.E.size());
        if (m == 0) continue;
        if (sl.psi_out.rows() != nz || sl.psi_out.cols() != m || sl.a.size() != m ||
            sl.s.rows() != m || sl.s.cols() != m)
            throw std::invalid_argument("mixing_front: slice missing modes, weights, or sigmas");
        m_max = std::max(m_max, m);
    }

    const Eigen::VectorXd tau_full = reduced_time_grid(nk, kg.dk, wg.c0, cfg.tau_center);
    const int nt = (nk + tau_stride - 1) / tau_stride;
    Eigen::VectorXd tau(nt);
    for (int j = 0; j < nt; ++j) tau(j) = tau_full(j * tau_stride);

    // Phase matrix over the full wavenumber (no dft alignment trick here;
    // the tau grid is arbitrary).
    Eigen::MatrixXcd ph(nk, nt);
    for (int p = 0; p < nk; ++p)
        for (int j = 0; j < nt; ++j)
            ph(p, j) = std::polar(1.0, -kg.k(p) * wg.c0 * tau(j));

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(nz, nt);
    Eigen::MatrixXcd psi_m(nz, nk);
    Eigen::VectorXcd base(nk);
    Eigen::VectorXcd coef(nk);
    Eigen::MatrixXcd scaled(nz, nk);
    Eigen::MatrixXcd g(nz, nt);

    for (int m = 0; m < m_max; ++m) {
        psi_m.setZero();
        base.setZero();
        for (int p = 0; p < nk; ++p) {
            const BasisSlice& sl = family[p];
            if (m >= sl.E.size()) continue;
            psi_m.col(p) = sl.psi_out.col(m).cast<std::complex<double>>();
            base(p) = kg.dk * kg.quad_weight(p) * kg.weight(kg.k(p)) *
                      std::polar(1.0, -kg.k(p) * r_b * sl.E(m));
        }
        for (int n = 0; n < m_max; ++n) {
            coef.setZero();
            bool any = false;
            for (int p = 0; p < nk; ++p) {
                const BasisSlice& sl = family[p];
                const int mp = static_cast<int>(sl.E.size());
                if (m >= mp || n >= mp) continue;
                const std::complex<double> cv = base(p) * (2.0 * sl.s(m, n)) * sl.a(n);
                coef(p) = cv;
                any = any || std::norm(cv) > 0.0;
            }
            if (!any) continue;
            scaled = psi_m * coef.asDiagonal();
            g.noalias() = scaled * ph;
            acc += g.cwiseAbs2();
        }
    }

    IntensityGrid out;
    out.I = acc / (2.0 * M_PI * kg.sigma_k * kg.sigma_k * r_b);
    out.I2 = Eigen::MatrixXd::Zero(nz, nt);
    out.z = z_out;
    out.tau = tau;
    out.r = r_b;
    out.members = 0;
    out.origin = "mixing";
    return out;
}

} // namespace tfrmt
