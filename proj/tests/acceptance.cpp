// Acceptance gate: one line per criterion, PASS or FAIL with the measured
// numbers. Exit status is the count of failed criteria. An optional argument
// list selects individual criteria by number, e.g. `acceptance 3 7`.
#include "tfrmt/experiment.hpp"
#include "tfrmt/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

using namespace tfrmt;

namespace {

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double median(const Eigen::VectorXd& v) {
    std::vector<double> tmp(v.data(), v.data() + v.size());
    const auto mid = tmp.begin() + tmp.size() / 2;
    std::nth_element(tmp.begin(), mid, tmp.end());
    return *mid;
}

std::shared_ptr<const DepthGrid> make_grid(const WaveguideParams& wg, int nz) {
    return DepthGrid::make(wg.z_min, wg.z_max, nz);
}

// --------------------------------------------------------------------------
// 1. Unitarity of every propagator the two paths produce at 50 km, 75 Hz.
// --------------------------------------------------------------------------
bool criterion1() {
    const double t0 = now();
    WaveguideParams wg;
    InternalWaveParams iw;
    SourceSpec src;
    const double k = src.k0(wg);
    auto grid = make_grid(wg, 8192);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    PEConfig pcfg;

    const double free_defect = extract_unitary(basis, wg, pcfg, 50.0, nullptr, 1.0).defect;

    double pert_defect = 0.0;
    for (int i = 0; i < 3; ++i) {
        const IWRealization rz = sample_iw_realization(rng::derive(7041776ull, 1, i), iw);
        const PerturbationField pert(grid, wg, iw, rz);
        pert_defect = std::max(pert_defect,
                               extract_unitary(basis, wg, pcfg, 50.0, &pert, 1.0).defect);
    }

    const VarianceProfile vp = variance_profile(basis, wg, iw, 50.0);
    const RMTConfig rcfg;
    double rmt_defect = 0.0;
    for (int blocks : {1, 10, 30, 60})
        for (int i = 0; i < 3; ++i)
            rmt_defect = std::max(
                rmt_defect,
                draw_member(basis.E, vp, rcfg, 50.0 * blocks, 7041776ull, i, 0).defect);

    const bool pass = free_defect < 1e-6 && pert_defect < 1e-6 && rmt_defect < 1e-10;
    std::printf("C1 %s - unitarity at 50 km: unperturbed extraction defect %.2e (gate 1e-6), "
                "perturbed extraction worst defect %.2e (gate 1e-6; scattering past the "
                "trapped mode set leaves the basis), ensemble members to 60 blocks worst "
                "defect %.2e (gate 1e-10) [%.0f s]\n",
                pass ? "PASS" : "FAIL", free_defect, pert_defect, rmt_defect, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 2. With the perturbation off, extraction reproduces the free diagonal.
// --------------------------------------------------------------------------
bool criterion2() {
    const double t0 = now();
    WaveguideParams wg;
    SourceSpec src;
    const double k = src.k0(wg);
    const ModeBasis basis = solve_modes(k, wg, make_grid(wg, 8192), 0);
    PEConfig pcfg;
    pcfg.dr = 0.002;
    const double r = 50.0;
    const UnitaryPropagator up = extract_unitary(basis, wg, pcfg, r, nullptr, 1.0);
    Eigen::MatrixXcd dev = up.U;
    for (int m = 0; m < basis.M; ++m)
        dev(m, m) -= std::polar(1.0, -k * basis.E(m) * r);
    const double err = dev.cwiseAbs().maxCoeff();
    const bool pass = err < 1e-5;
    std::printf("C2 %s - unperturbed extraction at 50 km, dr=2 m: "
                "max |U - diag(e^{-ikEr})| = %.2e (gate 1e-5) [%.0f s]\n",
                pass ? "PASS" : "FAIL", err, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 3. Sample variance of extracted elements against the analytic 4 s^2.
// --------------------------------------------------------------------------
bool criterion3() {
    const double t0 = now();
    WaveguideParams wg;
    InternalWaveParams iw;
    SourceSpec src;
    const double k = src.k0(wg);
    auto grid = make_grid(wg, 8192);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    const int M = basis.M;
    const VarianceProfile vp = variance_profile(basis, wg, iw, 50.0);
    const Eigen::MatrixXd four_s2 = 4.0 * vp.s.cwiseAbs2();

    PEConfig pcfg;
    const int N = 50;
    Eigen::MatrixXcd mean = Eigen::MatrixXcd::Zero(M, M);
    Eigen::MatrixXd msq = Eigen::MatrixXd::Zero(M, M);
    for (int i = 0; i < N; ++i) {
        const IWRealization rz = sample_iw_realization(rng::derive(7041776ull, 1, i), iw);
        const PerturbationField pert(grid, wg, iw, rz);
        const Eigen::MatrixXcd u = extract_unitary(basis, wg, pcfg, 50.0, &pert, 1.0).U;
        mean += u;
        msq += u.cwiseAbs2();
    }
    mean /= N;
    const Eigen::MatrixXd var =
        (msq / N - mean.cwiseAbs2()) * (double(N) / (N - 1));

    double mean_lo = 1e300, mean_hi = 0.0;
    bool bands_ok = true;
    for (int d = 1; d <= 10; ++d) {
        double acc = 0.0;
        int n = 0;
        for (int m = 5; m < M / 2 && m + d < M; ++m) {
            acc += var(m, m + d) / four_s2(m, m + d);
            ++n;
        }
        const double band_mean = acc / n;
        mean_lo = std::min(mean_lo, band_mean);
        mean_hi = std::max(mean_hi, band_mean);
        if (band_mean < 0.5 || band_mean > 2.0) bands_ok = false;
    }

    const Eigen::VectorXd prof = band_profile(var, 10);
    Eigen::VectorXd lx(10), ly(10);
    for (int d = 1; d <= 10; ++d) {
        lx(d - 1) = std::log10(double(d));
        ly(d - 1) = std::log10(std::max(prof(d), 1e-300));
    }
    const LineFit fit = fit_line(lx, ly);
    const bool pass = bands_ok && fit.slope < 0.0 && fit.r2 > 0.8;
    std::printf("C3 %s - element variance over %d perturbed extractions at 50 km: per-band "
                "mean ratio to 4s^2 in [%.2f, %.2f] (gate [0.5, 2], offsets 1..10), band "
                "profile log-log slope %.2f (gate <0) with R2=%.3f (gate >0.8) [%.0f s]\n",
                pass ? "PASS" : "FAIL", N, mean_lo, mean_hi, fit.slope, fit.r2, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 4. Timefront energy is the same for every member of either kind.
// --------------------------------------------------------------------------
bool criterion4() {
    const double t0 = now();
    ExperimentConfig cfg;
    cfg.numerics.nz = 4096;
    cfg.outputs.z_stride = 1;
    const double r = 50.0;

    BasisTable bt;
    const auto b_pe = pe_member_amplitudes(cfg, bt, 8, 10, r, 1, true);
    const auto b_rmt = rmt_member_amplitudes(cfg, bt, 10, r, 1);

    const auto quad_energy = [&](const TimefrontGrid& tg) {
        const double dt = tg.tau(1) - tg.tau(0);
        double e = 0.0;
        for (int j = 0; j < tg.phi.cols(); ++j)
            e += bt.grid->w.dot(tg.phi.col(j).cwiseAbs2());
        return e * dt;
    };

    const double e0 =
        quad_energy(member_timefront(cfg, bt, free_amplitudes(bt, r), r, "free", 0, -1));
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double ep = quad_energy(
            member_timefront(cfg, bt, b_pe[i], r, "pe", cfg.ensemble.seed, i));
        const double er = quad_energy(
            member_timefront(cfg, bt, b_rmt[i], r, "rmt", cfg.ensemble.seed, i));
        worst = std::max({worst, std::abs(ep / e0 - 1.0), std::abs(er / e0 - 1.0)});
    }
    const bool pass = worst < 1e-4;
    std::printf("C4 %s - depth-time energy over 10 propagated + 10 ensemble members at "
                "50 km: max |E/E0 - 1| = %.2e (gate 1e-4) [%.0f s]\n",
                pass ? "PASS" : "FAIL", worst, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 5. Average-intensity branch structure at 50 km, both methods, 100 members.
// --------------------------------------------------------------------------
bool criterion5() {
    const double t0 = now();
    ExperimentConfig cfg;
    cfg.numerics.nz = 8192;
    cfg.outputs.z_stride = 16;
    const double r = 50.0;
    const int nk = 64, members = 100;

    BasisTable bt;
    const auto b_pe = pe_member_amplitudes(cfg, bt, nk, members, r, 1, true);
    const auto b_rmt = rmt_member_amplitudes(cfg, bt, members, r, 1);

    std::vector<TimefrontGrid> tf;
    tf.reserve(members);
    for (int i = 0; i < members; ++i)
        tf.push_back(member_timefront(cfg, bt, b_pe[i], r, "pe", cfg.ensemble.seed, i));
    const IntensityGrid ipe = average_intensity(tf);
    tf.clear();
    for (int i = 0; i < members; ++i)
        tf.push_back(member_timefront(cfg, bt, b_rmt[i], r, "rmt", cfg.ensemble.seed, i));
    const IntensityGrid irmt = average_intensity(tf);

    const double dt = ipe.tau(1) - ipe.tau(0);
    bool peaks_ok = true;
    double bg_pe = 0.0, bg_rmt = 0.0;
    std::string offsets;
    for (double zs : {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}) {
        const int i = nearest_index(ipe.z, zs);
        const Eigen::VectorXd tp = ipe.I.row(i).transpose();
        const Eigen::VectorXd tr = irmt.I.row(i).transpose();
        int jp = 0, jr = 0;
        tp.maxCoeff(&jp);
        tr.maxCoeff(&jr);
        const int cells = std::abs(jp - jr);
        offsets += (offsets.empty() ? "" : ",") + std::to_string(cells);
        if (cells > 1) peaks_ok = false;
        bg_pe += median(tp);
        bg_rmt += median(tr);
    }
    bg_pe /= 6.0;
    bg_rmt /= 6.0;

    const bool bg_ok = bg_pe > 0.0 && bg_rmt >= bg_pe;
    const bool pass = peaks_ok && bg_ok;
    std::printf("C5 %s - 50 km averages over %d members each: dominant-arrival offsets "
                "{%s} cells of dt=%.1f ms at depths 0.5..3.0 km (gate <=1), inter-branch "
                "background ensemble/propagated = %.3f (gate >=1, both nonzero) [%.0f s]\n",
                pass ? "PASS" : "FAIL", members, offsets.c_str(), 1e3 * dt,
                bg_rmt / bg_pe, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 6. Finale geometry of the 1000 km ensemble average.
// --------------------------------------------------------------------------
bool criterion6() {
    const double t0 = now();
    ExperimentConfig cfg;
    cfg.numerics.nz = 8192;
    cfg.source.sigma_f = 9.375;
    cfg.outputs.z_stride = 16;
    cfg.tau_center = -1.0;
    const double r = 1000.0;
    const int nk = 256, members = 20;

    BasisTable bt = build_basis_table(cfg, nk, true, 1);
    const auto b_rmt = rmt_member_amplitudes(cfg, bt, members, r, 1);
    std::vector<TimefrontGrid> tf;
    tf.reserve(members);
    for (int i = 0; i < members; ++i)
        tf.push_back(member_timefront(cfg, bt, b_rmt[i], r, "rmt", cfg.ensemble.seed, i));
    const IntensityGrid avg = average_intensity(tf);
    tf.clear();

    int iz = 0, jt = 0;
    avg.I.maxCoeff(&iz, &jt);
    const double z_pk = avg.z(iz), tau_pk = avg.tau(jt);

    const int i0 = nearest_index(avg.z, 1.5);
    const int i1 = nearest_index(avg.z, 3.0);
    const double depth_slope =
        log_slope(avg.z, Eigen::VectorXd(avg.I.col(jt)), i0, i1 + 1);

    const int j0 = nearest_index(avg.tau, tau_pk + 0.05);
    const int j1 = nearest_index(avg.tau, tau_pk + 0.6);
    const double time_slope =
        log_slope(avg.tau, Eigen::VectorXd(avg.I.row(iz).transpose()), j0, j1 + 1);

    // single propagated realization for reference (reported, not gated)
    BasisTable bt_pe;
    const auto b_pe = pe_member_amplitudes(cfg, bt_pe, nk, 1, r, 1, false);
    const TimefrontGrid ref =
        member_timefront(cfg, bt_pe, b_pe[0], r, "pe", cfg.ensemble.seed, 0);
    int izr = 0, jtr = 0;
    Eigen::MatrixXd iref = ref.phi.cwiseAbs2();
    iref.maxCoeff(&izr, &jtr);

    const bool pass = std::abs(z_pk - 1.0) <= 0.35 && std::abs(tau_pk) <= 0.1 &&
                      depth_slope < 0.0 && time_slope < 0.0;
    std::printf("C6 %s - 1000 km ensemble average (%d members): peak at z=%.2f km "
                "(gate |z-1|<=0.35), tau=%.3f s (gate |tau|<=0.1), depth slope %.2f "
                "over 1.5..3 km (gate <0), time slope %.2f past the peak (gate <0); "
                "propagated reference peak at z=%.2f km, tau=%.3f s [%.0f s]\n",
                pass ? "PASS" : "FAIL", members, z_pk, tau_pk, depth_slope, time_slope,
                ref.z(izr), ref.tau(jtr), now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 7. Analytic mixing front against a brute-force single-block ensemble.
// --------------------------------------------------------------------------
bool criterion7() {
    const double t0 = now();
    ExperimentConfig cfg;
    cfg.numerics.nz = 4096;
    cfg.outputs.z_stride = 32;
    cfg.internal_waves.strength_scale = 0.05;
    const int nk = 32, members = 1000, tau_stride = 4;
    const double rb = cfg.ensemble.block_range;

    BasisTable bt = build_basis_table(cfg, nk, true, 1);
    const SynthesisConfig sc;
    const IntensityGrid dI = mixing_front(bt.slices, bt.kg, bt.z_out, cfg.source,
                                          cfg.waveguide, rb, sc, tau_stride);
    const TimefrontGrid tg0 =
        member_timefront(cfg, bt, free_amplitudes(bt, rb), rb, "free", 0, -1);
    const Eigen::MatrixXd I0 = tg0.phi.cwiseAbs2();

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(I0.rows(), I0.cols());
    Eigen::MatrixXd acc2 = acc;
    RMTConfig rcfg;
    rcfg.block_range = rb;
    rcfg.k_coherent = cfg.ensemble.k_coherent;
    std::vector<Eigen::VectorXcd> b(bt.slices.size());
    for (int i = 0; i < members; ++i) {
        for (size_t ik = 0; ik < bt.slices.size(); ++ik) {
            const BasisSlice& sl = bt.slices[ik];
            if (sl.E.size() == 0) {
                b[ik] = Eigen::VectorXcd();
                continue;
            }
            VarianceProfile vp;
            vp.k = sl.k;
            vp.r_b = rb;
            vp.s = sl.s;
            b[ik] = draw_member(sl.E, vp, rcfg, rb, cfg.ensemble.seed, i, int(ik)).U * sl.a;
        }
        const TimefrontGrid tg =
            member_timefront(cfg, bt, b, rb, "rmt", cfg.ensemble.seed, i);
        const Eigen::MatrixXd ii = tg.phi.cwiseAbs2();
        acc += ii;
        acc2 += ii.cwiseAbs2();
    }
    acc /= members;
    acc2 /= members;

    int nviol = 0, n = 0;
    double worst = 0.0;
    for (int j = 0; j < dI.tau.size(); ++j) {
        const int jf = j * tau_stride;
        for (int i = 0; i < dI.z.size(); ++i) {
            const double bf = acc(i, jf) - I0(i, jf);
            const double se = std::sqrt(
                std::max(0.0, acc2(i, jf) - acc(i, jf) * acc(i, jf)) / members);
            const double zsc = se > 0.0 ? (bf - dI.I(i, j)) / se : 0.0;
            worst = std::max(worst, std::abs(zsc));
            if (std::abs(zsc) > 3.0) ++nviol;
            ++n;
        }
    }

    const int jt = nearest_index(dI.tau, 0.0);
    const int i0 = nearest_index(dI.z, cfg.waveguide.z_axis + 0.5);
    const int i1 = nearest_index(dI.z, cfg.waveguide.z_axis + 2.5);
    Eigen::VectorXd corrected = I0.col(jt * tau_stride);
    for (int i = 0; i < dI.z.size(); ++i) corrected(i) += dI.I(i, jt);
    const double slope0 =
        log_slope(dI.z, Eigen::VectorXd(I0.col(jt * tau_stride)), i0, i1);
    const double slope_c = log_slope(dI.z, corrected, i0, i1);

    const bool pass = nviol == 0 && dI.I.minCoeff() >= 0.0 && slope_c > slope0;
    std::printf("C7 %s - analytic scattering front vs %d-member brute force at 0.05 "
                "strength: %d/%d coarse cells beyond 3 standard errors (gate 0, worst "
                "|z|=%.2f), min dI=%.1e (gate >=0), depth decay at tau=0 corrected %.2f "
                "vs unperturbed %.2f (gate: shallower) [%.0f s]\n",
                pass ? "PASS" : "FAIL", members, nviol, n, worst, dI.I.minCoeff(),
                slope_c, slope0, now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 8. Ensemble member generation beats propagation by >= 10x at 250 km.
// --------------------------------------------------------------------------
bool criterion8() {
    const double t0 = now();
    ExperimentConfig cfg;
    cfg.numerics.nz = 8192;
    cfg.outputs.z_stride = 16;
    const double r = 250.0;
    const int nk = 16;

    double pe_seconds = 0.0;
    BasisTable bt_pe;
    pe_member_amplitudes(cfg, bt_pe, nk, 1, r, 1, false, &pe_seconds);

    BasisTable bt = build_basis_table(cfg, nk, true, 1);
    const double t1 = now();
    const auto b_rmt = rmt_member_amplitudes(cfg, bt, 1, r, 1);
    const double rmt_seconds = now() - t1;

    int m_mid = 0;
    for (const auto& sl : bt.slices) m_mid = std::max(m_mid, int(sl.E.size()));
    const double ratio = pe_seconds / rmt_seconds;
    const bool pass = ratio >= 10.0;
    std::printf("C8 %s - member cost at 250 km, %d wavenumbers, M up to %d: propagation "
                "%.2f s vs ensemble draw %.4f s, ratio %.0f (gate >=10) [%.0f s]\n",
                pass ? "PASS" : "FAIL", nk, m_mid, pe_seconds, rmt_seconds, ratio,
                now() - t0);
    return pass;
}

// --------------------------------------------------------------------------
// 9. Mode solver oracle: harmonic ground state and orthonormality.
// --------------------------------------------------------------------------
bool criterion9() {
    const double t0 = now();
    WaveguideParams wg;
    SourceSpec src;
    const double k = src.k0(wg);

    const ModeBasis fine = solve_modes(k, wg, make_grid(wg, 16384), 0);
    const double e0_harmonic = 2.3871656935321793e-04;
    const double e0_err = std::abs(fine.E(0) / e0_harmonic - 1.0);

    const auto grid = make_grid(wg, 8192);
    const ModeBasis basis = solve_modes(k, wg, grid, 0);
    const Eigen::MatrixXd gram =
        basis.psi.transpose() * grid->w.asDiagonal() * basis.psi;
    const double ortho =
        (gram - Eigen::MatrixXd::Identity(basis.M, basis.M)).cwiseAbs().maxCoeff();

    const bool pass = e0_err < 0.01 && ortho < 1e-8;
    std::printf("C9 %s - mode solver: ground state %.3f%% from the harmonic value "
                "(gate 1%%), orthonormality defect %.1e (gate 1e-8) [%.0f s]\n",
                pass ? "PASS" : "FAIL", 100.0 * e0_err, ortho, now() - t0);
    return pass;
}

} // namespace

int main(int argc, char** argv) {
    setvbuf(stdout, nullptr, _IOLBF, 0);
    bool (*criteria[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                            criterion6, criterion7, criterion8, criterion9};
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > 9) {
            std::fprintf(stderr, "usage: %s [criterion 1..9]...\n", argv[0]);
            return 64;
        }
        which.push_back(n);
    }
    if (which.empty())
        for (int n = 1; n <= 9; ++n) which.push_back(n);

    int failures = 0;
    for (int n : which)
        if (!criteria[n - 1]()) ++failures;
    return failures;
}
