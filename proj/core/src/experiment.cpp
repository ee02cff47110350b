#include "tfrmt/experiment.hpp"

#include "tfrmt/parallel.hpp"
#include "tfrmt/rng.hpp"
#include "tfrmt/version.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace tfrmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::shared_ptr<const DepthGrid> make_grid(const ExperimentConfig& cfg) {
    return DepthGrid::make(cfg.waveguide.z_min, cfg.waveguide.z_max, cfg.numerics.nz);
}

Eigen::VectorXd decimate_axis(const Eigen::VectorXd& z, int stride) {
    const int n = static_cast<int>(z.size());
    const int m = (n + stride - 1) / stride;
    Eigen::VectorXd out(m);
    for (int i = 0; i < m; ++i) out(i) = z(i * stride);
    return out;
}

Eigen::MatrixXd decimate_rows(const Eigen::MatrixXd& a, int stride) {
    const int n = static_cast<int>(a.rows());
    const int m = (n + stride - 1) / stride;
    Eigen::MatrixXd out(m, a.cols());
    for (int i = 0; i < m; ++i) out.row(i) = a.row(i * stride);
    return out;
}

void cap_modes(ModeBasis& basis, int mode_count) {
    if (mode_count > 0 && basis.M > mode_count) {
        basis.psi = basis.psi.leftCols(mode_count).eval();
        basis.E = basis.E.head(mode_count).eval();
        basis.M = mode_count;
    }
}

std::uint64_t pe_member_seed(std::uint64_t master, int member) {
    // Tag 1: frozen internal-wave realizations (shared by iw-field and the
    // propagated-member commands, so member 0 is the same ocean everywhere).
    return rng::derive(master, 1, static_cast<std::uint64_t>(member));
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void atomic_add(std::atomic<double>& a, double v) {
    double cur = a.load();
    while (!a.compare_exchange_weak(cur, cur + v)) {
    }
}

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Basis table and amplitude families
// ---------------------------------------------------------------------------

BasisTable build_basis_table(const ExperimentConfig& cfg, int nk, bool need_sigma,
                             int workers, const SliceCallback& with_basis) {
    BasisTable bt;
    bt.grid = make_grid(cfg);
    bt.kg = make_k_grid(cfg.source, cfg.waveguide, nk, cfg.numerics.span_sigmas);
    bt.z_out = decimate_axis(bt.grid->z, cfg.outputs.z_stride);
    bt.slices.assign(static_cast<size_t>(nk), BasisSlice{});

    std::vector<char> spill(static_cast<size_t>(nk), 0);
    parallel_for(nk, workers, [&](int ik) {
        const double k = bt.kg.k(ik);
        BasisSlice sl;
        sl.k = k;
        if (k > 0.0) {
            ModeBasis basis = solve_modes(k, cfg.waveguide, bt.grid, 0);
            cap_modes(basis, cfg.numerics.mode_count);
            if (basis.M > 0) {
                const SourceWeights sw = source_weights(cfg.source, basis);
                spill[static_cast<size_t>(ik)] = sw.warning ? 1 : 0;
                sl.E = basis.E;
                sl.a = sw.a;
                sl.psi_out = decimate_rows(basis.psi, cfg.outputs.z_stride);
                if (need_sigma)
                    sl.s = variance_profile(basis, cfg.waveguide, cfg.internal_waves,
                                            cfg.ensemble.block_range)
                               .s;
            }
            if (with_basis) with_basis(ik, basis);
        } else if (with_basis) {
            ModeBasis empty;
            empty.k = k;
            empty.grid = bt.grid;
            empty.M = 0;
            with_basis(ik, empty);
        }
        bt.slices[static_cast<size_t>(ik)] = std::move(sl);
    });

    for (char c : spill) bt.spillover_warning = bt.spillover_warning || c != 0;
    return bt;
}

std::vector<std::vector<Eigen::VectorXcd>> pe_member_amplitudes(
    const ExperimentConfig& cfg, BasisTable& table_out, int nk, int members, double range,
    int workers, bool need_sigma, double* propagation_seconds) {
    const bool perturbed =
        cfg.internal_waves.strength_scale > 0.0 && cfg.internal_waves.energy > 0.0;
    auto grid = make_grid(cfg);
    std::vector<std::unique_ptr<PerturbationField>> fields(static_cast<size_t>(members));
    if (perturbed) {
        for (int i = 0; i < members; ++i) {
            const IWRealization rz =
                sample_iw_realization(pe_member_seed(cfg.ensemble.seed, i), cfg.internal_waves);
            fields[static_cast<size_t>(i)] = std::make_unique<PerturbationField>(
                grid, cfg.waveguide, cfg.internal_waves, rz);
        }
    }

    std::vector<std::vector<Eigen::VectorXcd>> b(
        static_cast<size_t>(members), std::vector<Eigen::VectorXcd>(static_cast<size_t>(nk)));
    std::atomic<double> prop_time{0.0};

    auto cb = [&](int ik, const ModeBasis& basis) {
        if (basis.M == 0) return;  // slots stay empty, matching the empty slice
        const Eigen::VectorXcd g =
            source_profile(cfg.source, *basis.grid).cast<std::complex<double>>();
        for (int i = 0; i < members; ++i) {
            SplitStepPropagator prop(basis.grid, basis.k, cfg.waveguide, cfg.pe,
                                     fields[static_cast<size_t>(i)].get());
            const double t0 = now_seconds();
            PEResult res = prop.propagate(g, 0.0, range);
            atomic_add(prop_time, now_seconds() - t0);
            b[static_cast<size_t>(i)][static_cast<size_t>(ik)] = project(basis, res.field);
        }
    };
    table_out = build_basis_table(cfg, nk, need_sigma, workers, cb);
    if (propagation_seconds) *propagation_seconds = prop_time.load();
    return b;
}

std::vector<std::vector<Eigen::VectorXcd>> rmt_member_amplitudes(
    const ExperimentConfig& cfg, const BasisTable& bt, int members, double range,
    int workers) {
    const int nk = bt.kg.size();
    for (const BasisSlice& sl : bt.slices)
        if (sl.E.size() > 0 && sl.s.rows() != sl.E.size())
            throw std::invalid_argument("rmt amplitudes: basis table lacks coupling sigmas");

    RMTConfig rcfg;
    rcfg.block_range = cfg.ensemble.block_range;
    rcfg.k_coherent = cfg.ensemble.k_coherent;

    std::vector<std::vector<Eigen::VectorXcd>> b(
        static_cast<size_t>(members), std::vector<Eigen::VectorXcd>(static_cast<size_t>(nk)));
    parallel_for(members, workers, [&](int i) {
        for (int ik = 0; ik < nk; ++ik) {
            const BasisSlice& sl = bt.slices[static_cast<size_t>(ik)];
            if (sl.E.size() == 0) continue;
            VarianceProfile vp;
            vp.k = sl.k;
            vp.r_b = cfg.ensemble.block_range;
            vp.s = sl.s;
            const UnitaryPropagator u =
                draw_member(sl.E, vp, rcfg, range, cfg.ensemble.seed, i, ik);
            b[static_cast<size_t>(i)][static_cast<size_t>(ik)] = u.U * sl.a;
        }
    });
    return b;
}

std::vector<Eigen::VectorXcd> free_amplitudes(const BasisTable& bt, double range) {
    std::vector<Eigen::VectorXcd> b(bt.slices.size());
    for (size_t ik = 0; ik < bt.slices.size(); ++ik) {
        const BasisSlice& sl = bt.slices[ik];
        const int m = static_cast<int>(sl.E.size());
        if (m == 0) continue;
        Eigen::VectorXcd v(m);
        for (int i = 0; i < m; ++i) v(i) = std::polar(1.0, -sl.k * sl.E(i) * range) * sl.a(i);
        b[ik] = std::move(v);
    }
    return b;
}

TimefrontGrid member_timefront(const ExperimentConfig& cfg, const BasisTable& bt,
                               const std::vector<Eigen::VectorXcd>& b, double range,
                               const std::string& origin, std::uint64_t seed, int member) {
    for (size_t ik = 0; ik < bt.slices.size(); ++ik)
        if (b[ik].size() == 0 && bt.slices[ik].E.size() > 0)
            throw std::invalid_argument("member_timefront: missing amplitudes at a k sample");
    SynthesisConfig sc;
    sc.tau_center = cfg.tau_center;
    TimefrontGrid tg =
        synthesize(bt.slices, bt.kg, bt.z_out, b, cfg.source, cfg.waveguide, range, sc);
    tg.origin = origin;
    tg.seed = seed;
    tg.member = member;
    return tg;
}

// ---------------------------------------------------------------------------
// Analysis helpers
// ---------------------------------------------------------------------------

int nearest_index(const Eigen::VectorXd& axis, double value, double* offset) {
    if (axis.size() == 0) throw std::invalid_argument("nearest_index: empty axis");
    int best = 0;
    double bd = std::abs(value - axis(0));
    for (int i = 1; i < axis.size(); ++i) {
        const double d = std::abs(value - axis(i));
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    if (offset) *offset = value - axis(best);
    return best;
}

LineFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const int n = static_cast<int>(x.size());
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need 2+ paired samples");
    const double mx = x.mean();
    const double my = y.mean();
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = x(i) - mx;
        const double dy = y(i) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    LineFit f;
    if (sxx <= 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

double log_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int i0, int i1) {
    if (i0 < 0 || i1 > x.size() || i1 - i0 < 2)
        throw std::invalid_argument("log_slope: bad sample window");
    Eigen::VectorXd xs(i1 - i0), ys(i1 - i0);
    for (int i = i0; i < i1; ++i) {
        xs(i - i0) = x(i);
        ys(i - i0) = std::log10(std::max(y(i), 1e-300));
    }
    return fit_line(xs, ys).slope;
}

std::vector<int> peak_indices(const Eigen::VectorXd& trace, double rel_floor, int min_sep) {
    const int n = static_cast<int>(trace.size());
    std::vector<int> cand;
    if (n < 3) return cand;
    const double floor_v = rel_floor * trace.maxCoeff();
    for (int i = 1; i + 1 < n; ++i)
        if (trace(i) >= floor_v && trace(i) > trace(i - 1) && trace(i) >= trace(i + 1))
            cand.push_back(i);
    // keep taller peaks first, drop any within min_sep of an accepted one
    std::sort(cand.begin(), cand.end(),
              [&](int a, int b) { return trace(a) > trace(b); });
    std::vector<int> kept;
    for (int i : cand) {
        bool ok = true;
        for (int j : kept)
            if (std::abs(i - j) < min_sep) {
                ok = false;
                break;
            }
        if (ok) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

int xcorr_lag(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int max_lag) {
    const int n = static_cast<int>(a.size());
    if (b.size() != n || n < 2) throw std::invalid_argument("xcorr_lag: need equal-length traces");
    const Eigen::VectorXd da = a.array() - a.mean();
    const Eigen::VectorXd db = b.array() - b.mean();
    int best_lag = 0;
    double best = -1e300;
    for (int lag = -max_lag; lag <= max_lag; ++lag) {
        double acc = 0.0;
        int count = 0;
        for (int t = 0; t < n; ++t) {
            const int s = t - lag;
            if (s < 0 || s >= n) continue;
            acc += da(t) * db(s);
            ++count;
        }
        if (count == 0) continue;
        acc /= static_cast<double>(count);
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    return best_lag;
}

Eigen::VectorXd band_profile(const Eigen::MatrixXd& x, int dmax) {
    const int m = static_cast<int>(x.rows());
    if (x.cols() != m || m == 0) throw std::invalid_argument("band_profile: square matrix required");
    const int dtop = std::min(dmax, m - 1);
    Eigen::VectorXd out(dtop + 1);
    for (int d = 0; d <= dtop; ++d) {
        double acc = 0.0;
        for (int i = 0; i + d < m; ++i) acc += x(i, i + d);
        out(d) = acc / static_cast<double>(m - d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

Eigen::MatrixXd to_db(const Eigen::MatrixXd& intensity, double floor_db) {
    const double peak = intensity.maxCoeff();
    Eigen::MatrixXd out(intensity.rows(), intensity.cols());
    if (peak <= 0.0) {
        out.setConstant(floor_db);
        return out;
    }
    for (Eigen::Index i = 0; i < intensity.rows(); ++i)
        for (Eigen::Index j = 0; j < intensity.cols(); ++j) {
            const double v = intensity(i, j) / peak;
            out(i, j) = (v > 0.0) ? std::max(10.0 * std::log10(v), floor_db) : floor_db;
        }
    return out;
}

void write_traces_csv(const std::filesystem::path& path, const IntensityGrid& ig,
                      const std::vector<double>& depths) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    std::vector<int> rows;
    for (double d : depths) {
        double off = 0.0;
        const int i = nearest_index(ig.z, d, &off);
        rows.push_back(i);
        os << "# depth " << format_g(d) << " km -> sample z=" << format_g(ig.z(i))
           << " km (offset " << format_g(off) << ")\n";
    }
    os << "tau_s";
    for (size_t c = 0; c < rows.size(); ++c) os << ",I_z" << format_g(depths[c]);
    for (size_t c = 0; c < rows.size(); ++c) os << ",dB_z" << format_g(depths[c]);
    os << "\n";
    const double peak = ig.I.maxCoeff();
    for (int j = 0; j < ig.tau.size(); ++j) {
        os << format_g(ig.tau(j));
        for (int r : rows) os << "," << format_g(ig.I(r, j));
        for (int r : rows) {
            const double v = (peak > 0.0) ? ig.I(r, j) / peak : 0.0;
            os << "," << format_g(v > 0.0 ? std::max(10.0 * std::log10(v), -300.0) : -300.0);
        }
        os << "\n";
    }
    if (!os.flush()) throw std::runtime_error("write failed: " + path.string());
}

void write_depth_profile_csv(const std::filesystem::path& path,
                             const std::vector<const IntensityGrid*>& grids,
                             const std::vector<std::string>& labels, double tau) {
    if (grids.empty() || grids.size() != labels.size())
        throw std::invalid_argument("depth profile: grids/labels mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    std::vector<int> cols;
    for (const IntensityGrid* g : grids) {
        double off = 0.0;
        cols.push_back(nearest_index(g->tau, tau, &off));
    }
    os << "# profiles at tau=" << format_g(tau) << " s (nearest sample per grid)\n";
    os << "z_km";
    for (const std::string& l : labels) os << ",I_" << l;
    os << "\n";
    const Eigen::VectorXd& z = grids[0]->z;
    for (int i = 0; i < z.size(); ++i) {
        os << format_g(z(i));
        for (size_t gidx = 0; gidx < grids.size(); ++gidx) {
            if (grids[gidx]->z.size() != z.size())
                throw std::invalid_argument("depth profile: grids on different z axes");
            os << "," << format_g(grids[gidx]->I(i, cols[gidx]));
        }
        os << "\n";
    }
    if (!os.flush()) throw std::runtime_error("write failed: " + path.string());
}

void write_band_profile_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& labels,
                            const std::vector<Eigen::VectorXd>& profiles) {
    if (labels.size() != profiles.size() || profiles.empty())
        throw std::invalid_argument("band profile: labels/profiles mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "band_offset";
    for (const std::string& l : labels) os << "," << l;
    os << "\n";
    Eigen::Index n = profiles[0].size();
    for (const Eigen::VectorXd& p : profiles) n = std::min(n, p.size());
    for (Eigen::Index d = 0; d < n; ++d) {
        os << d;
        for (const Eigen::VectorXd& p : profiles) os << "," << format_g(p(d));
        os << "\n";
    }
    if (!os.flush()) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Run context
// ---------------------------------------------------------------------------

std::filesystem::path RunContext::out(const std::string& name) {
    fs::path p = dir / name;
    outputs.push_back(p);
    return p;
}

void RunContext::warn(const std::string& message) {
    warnings.push_back(message);
    log("warning: " + message);
}

void RunContext::log(const std::string& message) const {
    if (!quiet) std::cerr << "[tfrmt] " << message << "\n";
}

void RunContext::write_manifest() {
    json man;
    man["command"] = command;
    if (!method.empty()) man["method"] = method;
    man["config"] = to_json(cfg);
    man["config_hash"] = config_hash(cfg);
    man["version"] = version_string;
    json outs = json::array();
    for (const fs::path& p : outputs) outs.push_back(p.filename().string());
    man["outputs"] = outs;
    std::vector<std::string> w = warnings;
    std::sort(w.begin(), w.end());
    man["warnings"] = w;
    man["details"] = details;

    const fs::path p = out("manifest.json");
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << man.dump(2) << "\n";
    if (!os.flush()) throw std::runtime_error("write failed: " + p.string());
}

void RunContext::cleanup_outputs() {
    for (const fs::path& p : outputs) {
        std::error_code ec;
        fs::remove(p, ec);
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

// Basis, weights, and coupling sigmas at a single wavenumber.
struct SingleK {
    std::shared_ptr<const DepthGrid> grid;
    ModeBasis basis;
    SourceWeights weights;
    VarianceProfile vp;
};

SingleK single_k_setup(const ExperimentConfig& cfg, bool need_sigma) {
    SingleK s;
    s.grid = make_grid(cfg);
    s.basis = solve_modes(cfg.source.k0(cfg.waveguide), cfg.waveguide, s.grid, 0);
    cap_modes(s.basis, cfg.numerics.mode_count);
    if (s.basis.M == 0) throw std::runtime_error("no trapped modes at the center wavenumber");
    s.weights = source_weights(cfg.source, s.basis);
    if (need_sigma)
        s.vp = variance_profile(s.basis, cfg.waveguide, cfg.internal_waves,
                                cfg.ensemble.block_range);
    return s;
}

void require_blocks(const ExperimentConfig& cfg, double range) {
    const double rb = cfg.ensemble.block_range;
    const long long nb = std::llround(range / rb);
    if (nb < 1 || std::abs(static_cast<double>(nb) * rb - range) > 1e-9 * range)
        throw ConfigError("run.range: must be a whole number of ensemble blocks (" +
                          format_g(rb) + " km each) for ensemble propagation");
}

void save_db_companion(RunContext& rc, const std::string& name, const IntensityGrid& ig) {
    if (!rc.cfg.outputs.db_grid) return;
    gridfile::Archive ar;
    ar.kind = "db";
    ar.meta = {{"r", ig.r}, {"origin", ig.origin}, {"config_hash", config_hash(rc.cfg)}};
    ar.add("db", Eigen::MatrixXd(to_db(ig.I)));
    ar.add("z", ig.z);
    ar.add("tau", ig.tau);
    ar.save(rc.out(name));
}

const std::vector<double> kTraceDepths = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};

std::vector<double> depths_in_window(const ExperimentConfig& cfg) {
    std::vector<double> out;
    for (double d : kTraceDepths)
        if (d > cfg.waveguide.z_min && d < cfg.waveguide.z_max) out.push_back(d);
    return out;
}

// Complex element mean and variance accumulated over ensemble members.
struct ElementStats {
    Eigen::MatrixXcd mean;
    Eigen::MatrixXd mean_sq;
    int count = 0;

    void init(int m) {
        mean = Eigen::MatrixXcd::Zero(m, m);
        mean_sq = Eigen::MatrixXd::Zero(m, m);
        count = 0;
    }
    void add(const Eigen::MatrixXcd& u) {
        mean += u;
        mean_sq += u.cwiseAbs2();
        ++count;
    }
    Eigen::MatrixXd variance() const {
        const double n = static_cast<double>(count);
        return (mean_sq / n - (mean / n).cwiseAbs2()) * (n / std::max(1.0, n - 1.0));
    }
};

} // namespace

void cmd_modes(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    SingleK s = single_k_setup(cfg, false);
    rc.log("solved " + std::to_string(s.basis.M) + " modes at k0");

    gridfile::Archive ar;
    ar.kind = "modes";
    ar.meta = {{"k", s.basis.k},
               {"m", s.basis.M},
               {"threshold", s.basis.threshold},
               {"spillover", s.weights.spillover},
               {"config_hash", config_hash(cfg)}};
    ar.add("psi", Eigen::MatrixXd(decimate_rows(s.basis.psi, cfg.outputs.z_stride)));
    ar.add("E", s.basis.E);
    ar.add("z", Eigen::VectorXd(decimate_axis(s.grid->z, cfg.outputs.z_stride)));
    ar.add("a", s.weights.a);
    ar.save(rc.out("modes.grid"));

    if (cfg.outputs.csv) {
        std::ofstream os(rc.out("modes.csv"));
        os << "m,E\n";
        for (int m = 0; m < s.basis.M; ++m)
            os << m << "," << format_g(s.basis.E(m)) << "\n";
    }
    if (s.weights.warning)
        rc.warn("source spills " + format_g(s.weights.spillover) + " outside the trapped set");
    rc.details["modes"] = s.basis.M;
    rc.details["k0"] = s.basis.k;
    rc.details["E0"] = s.basis.E(0);
    rc.write_manifest();
}

void cmd_iw_field(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    auto grid = make_grid(cfg);
    const std::uint64_t seed = pe_member_seed(cfg.ensemble.seed, 0);
    const IWRealization rz = sample_iw_realization(seed, cfg.internal_waves);
    const PerturbationField field(grid, cfg.waveguide, cfg.internal_waves, rz);

    const int nr = std::max(2, std::min(2048, static_cast<int>(cfg.range / cfg.pe.dr) + 1));
    const double dr_out = cfg.range / static_cast<double>(nr - 1);
    Eigen::VectorXd r(nr);
    const int nz_out = static_cast<int>((grid->z.size() + cfg.outputs.z_stride - 1) /
                                        cfg.outputs.z_stride);
    Eigen::MatrixXd samples(nz_out, nr);
    for (int ir = 0; ir < nr; ++ir) {
        r(ir) = dr_out * static_cast<double>(ir);
        const Eigen::VectorXd full = field.profile(r(ir));
        for (int i = 0; i < nz_out; ++i) samples(i, ir) = full(i * cfg.outputs.z_stride);
    }

    gridfile::Archive ar;
    ar.kind = "field";
    ar.meta = {{"seed", seed}, {"member", 0}, {"config_hash", config_hash(cfg)}};
    ar.add("v1", samples);
    ar.add("z", Eigen::VectorXd(decimate_axis(grid->z, cfg.outputs.z_stride)));
    ar.add("r", r);
    ar.save(rc.out("iw_field.grid"));

    if (cfg.outputs.csv) {
        const Eigen::VectorXd z_out = decimate_axis(grid->z, cfg.outputs.z_stride);
        std::ofstream os(rc.out("iw_rms.csv"));
        os << "z_km,rms\n";
        for (int i = 0; i < nz_out; ++i) {
            const double ms = samples.row(i).squaredNorm() / static_cast<double>(nr);
            os << format_g(z_out(i)) << "," << format_g(std::sqrt(ms)) << "\n";
        }
    }
    rc.details["seed"] = seed;
    rc.details["range_samples"] = nr;
    rc.write_manifest();
}

void cmd_pe_unitary(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    const bool perturbed =
        cfg.internal_waves.strength_scale > 0.0 && cfg.internal_waves.energy > 0.0;
    SingleK s = single_k_setup(cfg, false);

    std::unique_ptr<PerturbationField> pert;
    std::uint64_t seed = 0;
    if (perturbed) {
        seed = pe_member_seed(cfg.ensemble.seed, 0);
        pert = std::make_unique<PerturbationField>(
            s.grid, cfg.waveguide, cfg.internal_waves, sample_iw_realization(seed, cfg.internal_waves));
    }
    // The defect gate stays strict for the unperturbed run; with scattering on,
    // truncation to a finite mode set leaks at the band edge, so the gate is
    // opened and the measured defect is reported instead.
    const double tol = perturbed ? 1.0 : cfg.pe.unitarity_tol;
    rc.log("extracting " + std::to_string(s.basis.M) + " columns over " +
           format_g(cfg.range) + " km");
    UnitaryPropagator u = extract_unitary(s.basis, cfg.waveguide, cfg.pe, cfg.range,
                                          pert.get(), tol);
    if (perturbed && u.defect > cfg.pe.unitarity_tol)
        rc.warn("unitarity defect " + format_g(u.defect) + " above " +
                format_g(cfg.pe.unitarity_tol) + " (finite mode-set truncation)");

    gridfile::save_unitary(rc.out("unitary.grid"), u, {{"config_hash", config_hash(cfg)}});
    if (cfg.outputs.csv) {
        const Eigen::VectorXd prof = band_profile(u.U.cwiseAbs2(), 25);
        write_band_profile_csv(rc.out("unitary_band.csv"), {"mean_sq"}, {prof});
    }
    rc.details["modes"] = s.basis.M;
    rc.details["defect"] = u.defect;
    rc.details["seed"] = seed;
    rc.write_manifest();
}

void cmd_rmt_ensemble(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    require_blocks(cfg, cfg.range);
    SingleK s = single_k_setup(cfg, true);
    const int members = cfg.ensemble.members;

    RMTConfig rcfg;
    rcfg.block_range = cfg.ensemble.block_range;
    rcfg.k_coherent = cfg.ensemble.k_coherent;

    rc.log("drawing " + std::to_string(members) + " members at M=" +
           std::to_string(s.basis.M));
    std::vector<Eigen::MatrixXcd> us(static_cast<size_t>(members));
    parallel_for(members, rc.workers, [&](int i) {
        us[static_cast<size_t>(i)] =
            draw_member(s.basis.E, s.vp, rcfg, cfg.range, cfg.ensemble.seed, i, 0).U;
    });

    ElementStats stats;
    stats.init(s.basis.M);
    double worst_defect = 0.0;
    for (int i = 0; i < members; ++i) {
        stats.add(us[static_cast<size_t>(i)]);
        worst_defect = std::max(worst_defect, unitarity_defect(us[static_cast<size_t>(i)]));
    }

    gridfile::save_variance(rc.out("variance.grid"), s.vp,
                            {{"config_hash", config_hash(cfg)}});
    gridfile::save_unitary(rc.out("member0.grid"),
                           draw_member(s.basis.E, s.vp, rcfg, cfg.range, cfg.ensemble.seed, 0, 0),
                           {{"config_hash", config_hash(cfg)}});
    {
        gridfile::Archive ar;
        ar.kind = "ensemble-stats";
        ar.meta = {{"members", members},
                   {"k", s.basis.k},
                   {"r", cfg.range},
                   {"worst_defect", worst_defect},
                   {"config_hash", config_hash(cfg)}};
        ar.add("var", Eigen::MatrixXd(stats.variance()));
        ar.add("mean", Eigen::MatrixXcd(stats.mean / static_cast<double>(members)));
        ar.save(rc.out("ensemble_stats.grid"));
    }
    if (cfg.outputs.csv) {
        const Eigen::MatrixXd four_s2 = 4.0 * s.vp.s.cwiseAbs2();
        write_band_profile_csv(rc.out("ensemble_band.csv"), {"sample_var", "analytic_4s2"},
                               {band_profile(stats.variance(), 25), band_profile(four_s2, 25)});
    }
    rc.details["modes"] = s.basis.M;
    rc.details["members"] = members;
    rc.details["worst_defect"] = worst_defect;
    rc.write_manifest();
}

void cmd_timefront(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    const std::string method = rc.method.empty() ? "pe" : rc.method;
    const int nk = (method == "pe") ? cfg.numerics.nk_pe : cfg.numerics.nk_rmt;

    BasisTable bt;
    std::vector<Eigen::VectorXcd> b;
    std::uint64_t seed = 0;
    if (method == "pe") {
        auto all = pe_member_amplitudes(cfg, bt, nk, 1, cfg.range, rc.workers, false);
        b = std::move(all[0]);
        seed = pe_member_seed(cfg.ensemble.seed, 0);
    } else if (method == "rmt") {
        require_blocks(cfg, cfg.range);
        bt = build_basis_table(cfg, nk, true, rc.workers);
        b = std::move(rmt_member_amplitudes(cfg, bt, 1, cfg.range, rc.workers)[0]);
        seed = cfg.ensemble.seed;
    } else if (method == "free") {
        bt = build_basis_table(cfg, nk, false, rc.workers);
        b = free_amplitudes(bt, cfg.range);
    } else {
        throw ConfigError("method: expected pe, rmt, or free");
    }
    if (bt.spillover_warning)
        rc.warn("source spills more than 1% outside the trapped set at low wavenumbers");

    TimefrontGrid tg = member_timefront(cfg, bt, b, cfg.range, method, seed, 0);
    gridfile::save_timefront(rc.out("timefront.grid"), tg,
                             {{"config_hash", config_hash(cfg)}});

    IntensityGrid ig;
    ig.I = tg.phi.cwiseAbs2();
    ig.I2 = ig.I.cwiseAbs2();
    ig.z = tg.z;
    ig.tau = tg.tau;
    ig.r = tg.r;
    ig.members = 1;
    ig.origin = tg.origin;
    save_db_companion(rc, "timefront_db.grid", ig);
    if (cfg.outputs.csv) write_traces_csv(rc.out("traces.csv"), ig, depths_in_window(cfg));

    rc.details["energy"] = tg.energy;
    rc.details["modes_max"] = [&] {
        Eigen::Index m = 0;
        for (const BasisSlice& sl : bt.slices) m = std::max(m, sl.E.size());
        return static_cast<int>(m);
    }();
    rc.write_manifest();
}

void cmd_average(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    const std::string method = rc.method.empty() ? "rmt" : rc.method;
    const int nk = (method == "pe") ? cfg.numerics.nk_pe : cfg.numerics.nk_rmt;
    const int members = cfg.ensemble.members;

    BasisTable bt;
    std::vector<std::vector<Eigen::VectorXcd>> b;
    if (method == "pe") {
        b = pe_member_amplitudes(cfg, bt, nk, members, cfg.range, rc.workers, false);
    } else if (method == "rmt") {
        require_blocks(cfg, cfg.range);
        bt = build_basis_table(cfg, nk, true, rc.workers);
        b = rmt_member_amplitudes(cfg, bt, members, cfg.range, rc.workers);
    } else {
        throw ConfigError("method: expected pe or rmt");
    }
    if (bt.spillover_warning)
        rc.warn("source spills more than 1% outside the trapped set at low wavenumbers");

    rc.log("synthesizing " + std::to_string(members) + " member timefronts");
    IntensityGrid ig;
    std::vector<double> energies;
    for (int i = 0; i < members; ++i) {
        const std::uint64_t seed =
            (method == "pe") ? pe_member_seed(cfg.ensemble.seed, i) : cfg.ensemble.seed;
        const TimefrontGrid tg =
            member_timefront(cfg, bt, b[static_cast<size_t>(i)], cfg.range, method, seed, i);
        energies.push_back(tg.energy);
        const Eigen::MatrixXd ii = tg.phi.cwiseAbs2();
        if (i == 0) {
            ig.I = Eigen::MatrixXd::Zero(ii.rows(), ii.cols());
            ig.I2 = ig.I;
            ig.z = tg.z;
            ig.tau = tg.tau;
            ig.r = tg.r;
            ig.origin = method;
        }
        ig.I += ii;
        ig.I2 += ii.cwiseAbs2();
    }
    ig.I /= static_cast<double>(members);
    ig.I2 /= static_cast<double>(members);
    ig.members = members;

    gridfile::save_intensity(rc.out("intensity.grid"), ig,
                             {{"config_hash", config_hash(cfg)}});
    save_db_companion(rc, "intensity_db.grid", ig);
    if (cfg.outputs.csv) write_traces_csv(rc.out("traces.csv"), ig, depths_in_window(cfg));

    rc.details["members"] = members;
    rc.details["energy_first"] = energies.front();
    double emin = energies.front(), emax = energies.front();
    for (double e : energies) {
        emin = std::min(emin, e);
        emax = std::max(emax, e);
    }
    rc.details["energy_rel_spread"] = (emax - emin) / emax;
    rc.write_manifest();
}

void cmd_mixing_front(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    if (std::abs(cfg.range - cfg.ensemble.block_range) > 1e-9 * cfg.range)
        throw ConfigError("run.range: the mixing front is defined over a single block; "
                          "range must equal ensemble.block_range");

    BasisTable bt = build_basis_table(cfg, cfg.numerics.nk_rmt, true, rc.workers);
    if (bt.spillover_warning)
        rc.warn("source spills more than 1% outside the trapped set at low wavenumbers");

    SynthesisConfig sc;
    sc.tau_center = cfg.tau_center;
    rc.log("evaluating the analytic front");
    IntensityGrid front = mixing_front(bt.slices, bt.kg, bt.z_out, cfg.source, cfg.waveguide,
                                       cfg.ensemble.block_range, sc, cfg.outputs.tau_stride);

    // Unperturbed reference on the same (subsampled) time grid.
    const TimefrontGrid tg0 = member_timefront(cfg, bt, free_amplitudes(bt, cfg.range),
                                               cfg.range, "free", 0, -1);
    IntensityGrid ref;
    ref.z = front.z;
    ref.tau = front.tau;
    ref.r = cfg.range;
    ref.members = 1;
    ref.origin = "free";
    ref.I.resize(front.I.rows(), front.I.cols());
    for (int j = 0; j < front.tau.size(); ++j)
        ref.I.col(j) = tg0.phi.col(j * cfg.outputs.tau_stride).cwiseAbs2();
    ref.I2 = ref.I.cwiseAbs2();

    IntensityGrid corrected = ref;
    corrected.I += front.I;
    corrected.origin = "corrected";

    gridfile::save_intensity(rc.out("mixing_front.grid"), front,
                             {{"config_hash", config_hash(cfg)}});
    gridfile::save_intensity(rc.out("unperturbed.grid"), ref,
                             {{"config_hash", config_hash(cfg)}});
    save_db_companion(rc, "mixing_front_db.grid", front);
    if (cfg.outputs.csv)
        write_depth_profile_csv(rc.out("finale_profiles.csv"),
                                {&ref, &corrected, &front},
                                {"unperturbed", "corrected", "front"}, 0.0);

    // Depth decay below the axis at the nominal arrival time.
    const int jt = nearest_index(front.tau, 0.0);
    const int i0 = nearest_index(front.z, cfg.waveguide.z_axis + 0.5);
    const int i1 = nearest_index(front.z, cfg.waveguide.z_axis + 2.5);
    if (i1 - i0 >= 2) {
        const double slope_ref = log_slope(ref.z, ref.I.col(jt), i0, i1);
        const double slope_cor = log_slope(corrected.z, corrected.I.col(jt), i0, i1);
        rc.details["depth_slope_unperturbed"] = slope_ref;
        rc.details["depth_slope_corrected"] = slope_cor;
    }
    rc.details["front_peak"] = front.I.maxCoeff();
    rc.write_manifest();
}

void cmd_compare(RunContext& rc) {
    const ExperimentConfig& cfg = rc.cfg;
    require_blocks(cfg, cfg.range);
    const int members = cfg.ensemble.members;

    json report;
    json runtime;

    // --- element statistics at the band center -----------------------------
    SingleK s = single_k_setup(cfg, true);
    const int M = s.basis.M;
    rc.log("element statistics at k0: " + std::to_string(members) + " propagated members, M=" +
           std::to_string(M));

    ElementStats pe_stats, rmt_stats;
    pe_stats.init(M);
    rmt_stats.init(M);
    double rmt_seconds = 0.0;
    double worst_defect = 0.0;

    std::vector<Eigen::MatrixXcd> pe_u(static_cast<size_t>(members));
    std::atomic<double> pe_extract_time{0.0};
    parallel_for(members, rc.workers, [&](int i) {
        const IWRealization rz = sample_iw_realization(pe_member_seed(cfg.ensemble.seed, i),
                                                       cfg.internal_waves);
        const PerturbationField pert(s.grid, cfg.waveguide, cfg.internal_waves, rz);
        const double t0 = now_seconds();
        pe_u[static_cast<size_t>(i)] =
            extract_unitary(s.basis, cfg.waveguide, cfg.pe, cfg.range, &pert, 1.0).U;
        atomic_add(pe_extract_time, now_seconds() - t0);
    });
    const double pe_seconds = pe_extract_time.load() / static_cast<double>(members);
    for (int i = 0; i < members; ++i) {
        pe_stats.add(pe_u[static_cast<size_t>(i)]);
        worst_defect = std::max(worst_defect, unitarity_defect(pe_u[static_cast<size_t>(i)]));
    }
    pe_u.clear();
    pe_u.shrink_to_fit();

    RMTConfig rcfg;
    rcfg.block_range = cfg.ensemble.block_range;
    rcfg.k_coherent = cfg.ensemble.k_coherent;
    {
        const double t0 = now_seconds();
        for (int i = 0; i < members; ++i)
            rmt_stats.add(draw_member(s.basis.E, s.vp, rcfg, cfg.range, cfg.ensemble.seed, i, 0).U);
        rmt_seconds = (now_seconds() - t0) / static_cast<double>(members);
    }

    const Eigen::MatrixXd pe_var = pe_stats.variance();
    const Eigen::MatrixXd rmt_var = rmt_stats.variance();
    const Eigen::MatrixXd four_s2 = 4.0 * s.vp.s.cwiseAbs2();

    // Ratio table against the analytic prediction over the perturbative band.
    const int m_lo = 5;
    const int m_hi = M / 2;
    json ratio_rows = json::array();
    for (int d = 1; d <= std::min(10, M - 1); ++d) {
        double acc_pe = 0.0, acc_rmt = 0.0, acc2_pe = 0.0;
        int cnt = 0;
        for (int m = m_lo; m < m_hi; ++m) {
            const int n = m + d;
            if (n >= M) break;
            if (four_s2(m, n) <= 0.0) continue;
            const double rp = pe_var(m, n) / four_s2(m, n);
            acc_pe += rp;
            acc2_pe += rp * rp;
            acc_rmt += rmt_var(m, n) / four_s2(m, n);
            ++cnt;
        }
        if (cnt == 0) continue;
        const double mean_pe = acc_pe / cnt;
        const double se_pe = (cnt > 1)
            ? std::sqrt(std::max(0.0, acc2_pe / cnt - mean_pe * mean_pe) / (cnt - 1))
            : mean_pe * std::sqrt(2.0 / std::max(1, members - 1));
        ratio_rows.push_back({{"band_offset", d},
                              {"pe_over_analytic", mean_pe},
                              {"pe_ratio_se", se_pe},
                              {"rmt_over_analytic", acc_rmt / cnt},
                              {"elements", cnt}});
    }
    report["variance_ratio"] = ratio_rows;
    report["worst_pe_defect"] = worst_defect;

    // Power-law shape of the measured band profile.
    {
        const Eigen::VectorXd prof = band_profile(pe_var, std::min(10, M - 1));
        const int nd = static_cast<int>(prof.size()) - 1;
        Eigen::VectorXd lx(nd), ly(nd);
        for (int d = 1; d <= nd; ++d) {
            lx(d - 1) = std::log10(static_cast<double>(d));
            ly(d - 1) = std::log10(std::max(prof(d), 1e-300));
        }
        const LineFit f = fit_line(lx, ly);
        report["band_decay"] = {{"slope", f.slope}, {"r2", f.r2}};
    }

    if (cfg.outputs.csv)
        write_band_profile_csv(rc.out("variance_band.csv"),
                               {"pe_var", "rmt_var", "analytic_4s2"},
                               {band_profile(pe_var, 25), band_profile(rmt_var, 25),
                                band_profile(four_s2, 25)});

    // --- timefront statistics ----------------------------------------------
    rc.log("timefront ensembles: " + std::to_string(members) + " members per path");
    BasisTable bt;
    double pe_prop_seconds = 0.0;
    const auto b_pe = pe_member_amplitudes(cfg, bt, cfg.numerics.nk_pe, members, cfg.range,
                                           rc.workers, true, &pe_prop_seconds);
    const double t_rmt0 = now_seconds();
    const auto b_rmt = rmt_member_amplitudes(cfg, bt, members, cfg.range, rc.workers);
    const double rmt_amp_seconds = now_seconds() - t_rmt0;

    auto accumulate = [&](const std::vector<std::vector<Eigen::VectorXcd>>& b,
                          const std::string& origin) {
        IntensityGrid ig;
        for (int i = 0; i < members; ++i) {
            const TimefrontGrid tg =
                member_timefront(cfg, bt, b[static_cast<size_t>(i)], cfg.range, origin,
                                 cfg.ensemble.seed, i);
            const Eigen::MatrixXd ii = tg.phi.cwiseAbs2();
            if (i == 0) {
                ig.I = Eigen::MatrixXd::Zero(ii.rows(), ii.cols());
                ig.I2 = ig.I;
                ig.z = tg.z;
                ig.tau = tg.tau;
                ig.r = tg.r;
                ig.origin = origin;
            }
            ig.I += ii;
            ig.I2 += ii.cwiseAbs2();
        }
        ig.I /= static_cast<double>(members);
        ig.I2 /= static_cast<double>(members);
        ig.members = members;
        return ig;
    };
    const IntensityGrid ig_pe = accumulate(b_pe, "pe");
    const IntensityGrid ig_rmt = accumulate(b_rmt, "rmt");

    gridfile::save_intensity(rc.out("pe_intensity.grid"), ig_pe,
                             {{"config_hash", config_hash(cfg)}});
    gridfile::save_intensity(rc.out("rmt_intensity.grid"), ig_rmt,
                             {{"config_hash", config_hash(cfg)}});

    const double dt = ig_pe.tau(1) - ig_pe.tau(0);
    json branch_rows = json::array();
    for (double depth : depths_in_window(cfg)) {
        const int iz = nearest_index(ig_pe.z, depth);
        const Eigen::VectorXd tr_pe = ig_pe.I.row(iz);
        const Eigen::VectorXd tr_rmt = ig_rmt.I.row(iz);
        const int lag = xcorr_lag(tr_pe, tr_rmt, static_cast<int>(tr_pe.size()) / 4);
        const std::vector<int> pk_pe = peak_indices(tr_pe, 0.05, 3);
        const std::vector<int> pk_rmt = peak_indices(tr_rmt, 0.05, 3);
        int matched = 0;
        double worst = 0.0;
        for (int ip : pk_pe) {
            int bestd = 1 << 30;
            for (int irp : pk_rmt) bestd = std::min(bestd, std::abs(ip - irp));
            if (bestd <= 1) ++matched;
            worst = std::max(worst, static_cast<double>(bestd));
        }
        branch_rows.push_back({{"depth", depth},
                               {"xcorr_lag_samples", lag},
                               {"xcorr_lag_seconds", lag * dt},
                               {"pe_peaks", pk_pe.size()},
                               {"rmt_peaks", pk_rmt.size()},
                               {"peaks_matched_within_dt", matched},
                               {"worst_peak_offset_samples", worst}});
    }
    report["branches"] = branch_rows;
    report["time_resolution_seconds"] = dt;

    // Finale decay slopes: depth below the axis at tau=0, time past the peak
    // at the axis depth.
    auto finale = [&](const IntensityGrid& ig) {
        json out;
        const int jt = nearest_index(ig.tau, 0.0);
        const int i0 = nearest_index(ig.z, cfg.waveguide.z_axis + 0.5);
        const int i1 = nearest_index(ig.z, cfg.waveguide.z_axis + 2.5);
        out["depth_slope"] = log_slope(ig.z, ig.I.col(jt), i0, i1);
        const int iz = nearest_index(ig.z, cfg.waveguide.z_axis);
        const Eigen::VectorXd tr = ig.I.row(iz);
        int jpk = 0;
        tr.maxCoeff(&jpk);
        const int jend = static_cast<int>(tr.size());
        if (jend - jpk >= 4) out["time_slope"] = log_slope(ig.tau, tr, jpk, jend);
        return out;
    };
    report["finale_pe"] = finale(ig_pe);
    report["finale_rmt"] = finale(ig_rmt);

    // Background between branches: pooled median intensity, a robust floor
    // estimate insensitive to the branch peaks themselves.
    auto background = [&](const IntensityGrid& ig) {
        std::vector<double> v;
        const int iz0 = nearest_index(ig.z, cfg.waveguide.z_axis);
        for (int j = 0; j < ig.tau.size(); ++j) v.push_back(ig.I(iz0, j));
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    report["background_pe"] = background(ig_pe);
    report["background_rmt"] = background(ig_rmt);

    runtime["pe_member_extraction_seconds"] = pe_seconds;
    runtime["rmt_member_seconds"] = rmt_seconds;
    runtime["pe_propagation_seconds_total"] = pe_prop_seconds;
    runtime["pe_member_timefront_seconds"] = pe_prop_seconds / members;
    runtime["rmt_member_timefront_seconds"] = rmt_amp_seconds / members;
    runtime["speedup_timefront"] =
        (rmt_amp_seconds > 0.0) ? pe_prop_seconds / rmt_amp_seconds : 0.0;

    json full;
    full["deterministic"] = report;
    full["runtime"] = runtime;
    {
        std::ofstream os(rc.out("compare.json"));
        if (!os) throw std::runtime_error("cannot write compare.json");
        os << full.dump(2) << "\n";
    }
    rc.details["modes"] = M;
    rc.details["members"] = members;
    rc.write_manifest();
}

} // namespace tfrmt
