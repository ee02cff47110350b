#include "tfrmt/rmt.hpp"

#include "tfrmt/rng.hpp"

#include <Eigen/LU>
#include <cmath>
#include <stdexcept>

namespace tfrmt {

namespace {

inline double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

} // namespace

VarianceProfile variance_profile(const ModeBasis& basis, const WaveguideParams& wg,
                                 const InternalWaveParams& iw, double r_b) {
    if (basis.M <= 0) throw std::invalid_argument("variance_profile: empty mode basis");
    if (r_b <= 0.0) throw std::invalid_argument("variance_profile: block range must be positive");

    const int M = basis.M;
    const int jmax = iw.j_max;
    const int nl = iw.n_kl;
    const Eigen::VectorXd kl = iw.kl_grid();

    CouplingTensor ct(basis, wg, iw);

    // Upper triangle (m <= n) flattened; W^j is symmetric so this is lossless.
    const int npair = M * (M + 1) / 2;
    Eigen::MatrixXd wsq(jmax, npair);
    for (int j = 1; j <= jmax; ++j) {
        const Eigen::MatrixXd& w = ct.mode_overlap(j);
        int p = 0;
        for (int m = 0; m < M; ++m)
            for (int n = m; n < M; ++n, ++p) wsq(j - 1, p) = w(m, n) * w(m, n);
    }

    // h_j^2(k_l), then the j-sum for every (l, pair) in one product.
    Eigen::MatrixXd h2(nl, jmax);
    for (int l = 0; l < nl; ++l)
        for (int j = 1; j <= jmax; ++j) {
            const double h = iw_spectral_weight(wg, iw, j, kl(l));
            h2(l, j - 1) = h * h;
        }
    const Eigen::MatrixXd g = h2 * wsq;  // nl x npair

    VarianceProfile vp;
    vp.k = basis.k;
    vp.r_b = r_b;
    vp.s.resize(M, M);

    const double pref = basis.k * basis.k * r_b * r_b / 16.0;
    int p = 0;
    for (int m = 0; m < M; ++m)
        for (int n = m; n < M; ++n, ++p) {
            const double beat = basis.k * (basis.E(m) - basis.E(n));
            double acc = 0.0;
            for (int l = 0; l < nl; ++l) {
                const double sp = sinc(0.5 * (beat + kl(l)) * r_b);
                const double sm = sinc(0.5 * (beat - kl(l)) * r_b);
                acc += (sp * sp + sm * sm) * g(l, p);
            }
            const double s = std::sqrt(pref * acc);
            vp.s(m, n) = s;
            vp.s(n, m) = s;
        }
    return vp;
}

Eigen::MatrixXcd hermitian_draw(const Eigen::MatrixXd& s, std::uint64_t seed) {
    const int M = static_cast<int>(s.rows());
    if (s.cols() != M) throw std::invalid_argument("hermitian_draw: s must be square");

    const double inv_rt2 = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXcd a(M, M);
    for (int m = 0; m < M; ++m) {
        {
            rng::Stream st(rng::derive(seed, static_cast<std::uint64_t>(m),
                                       static_cast<std::uint64_t>(m)));
            a(m, m) = s(m, m) * st.gauss();
        }
        for (int n = m + 1; n < M; ++n) {
            rng::Stream st(rng::derive(seed, static_cast<std::uint64_t>(m),
                                       static_cast<std::uint64_t>(n)));
            const double x = st.gauss();
            const double y = st.gauss();
            const std::complex<double> w(x * inv_rt2, y * inv_rt2);
            a(m, n) = s(m, n) * w;
            a(n, m) = std::conj(a(m, n));
        }
    }
    return a;
}

Eigen::MatrixXcd cayley_block(const Eigen::MatrixXcd& A, const Eigen::VectorXd& E,
                              double k, double r_b) {
    const int M = static_cast<int>(A.rows());
    if (A.cols() != M) throw std::invalid_argument("cayley_block: A must be square");
    if (E.size() != M) throw std::invalid_argument("cayley_block: eigenvalue count mismatch");

    const std::complex<double> iu(0.0, 1.0);
    Eigen::MatrixXcd plus = Eigen::MatrixXcd::Identity(M, M) + iu * A;
    Eigen::MatrixXcd minus = Eigen::MatrixXcd::Identity(M, M) - iu * A;
    Eigen::MatrixXcd u = Eigen::PartialPivLU<Eigen::MatrixXcd>(plus).solve(minus);
    for (int m = 0; m < M; ++m)
        u.row(m) *= std::polar(1.0, -k * E(m) * r_b);
    return u;
}

std::uint64_t member_block_seed(std::uint64_t ensemble_seed, int member, int block,
                                const RMTConfig& cfg, int k_index) {
    std::uint64_t base = rng::derive(ensemble_seed, static_cast<std::uint64_t>(member),
                                     static_cast<std::uint64_t>(block));
    if (!cfg.k_coherent)
        base = rng::derive(base, 0x6b696478ull, static_cast<std::uint64_t>(k_index));
    return base;
}

UnitaryPropagator draw_member(const Eigen::VectorXd& E, const VarianceProfile& vp,
                              const RMTConfig& cfg, double range,
                              std::uint64_t ensemble_seed, int member, int k_index) {
    if (vp.s.rows() != E.size())
        throw std::invalid_argument("draw_member: variance profile does not match basis");
    if (cfg.block_range <= 0.0)
        throw std::invalid_argument("draw_member: block range must be positive");
    const long long nb = std::llround(range / cfg.block_range);
    if (nb < 1 || std::abs(static_cast<double>(nb) * cfg.block_range - range) > 1e-9 * range)
        throw std::invalid_argument("draw_member: range is not a whole number of blocks");

    const int M = static_cast<int>(E.size());
    UnitaryPropagator up;
    up.k = vp.k;
    up.r = range;
    up.blocks = static_cast<int>(nb);
    up.origin = "rmt";
    up.seed = ensemble_seed;
    up.U = Eigen::MatrixXcd::Identity(M, M);

    for (int b = 0; b < static_cast<int>(nb); ++b) {
        const std::uint64_t bs = member_block_seed(ensemble_seed, member, b, cfg, k_index);
        const Eigen::MatrixXcd a = hermitian_draw(vp.s, bs);
        up.U = cayley_block(a, E, vp.k, vp.r_b) * up.U;
    }
    up.defect = unitarity_defect(up.U);
    return up;
}

} // namespace tfrmt
