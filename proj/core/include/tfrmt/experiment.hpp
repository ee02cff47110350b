#pragma once

#include "tfrmt/config.hpp"
#include "tfrmt/gridfile.hpp"
#include "tfrmt/modes.hpp"
#include "tfrmt/pe.hpp"
#include "tfrmt/rmt.hpp"
#include "tfrmt/timefront.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace tfrmt {

// ---------------------------------------------------------------------------
// Basis families over the wavenumber grid
// ---------------------------------------------------------------------------

struct BasisTable {
    KGrid kg;
    std::shared_ptr<const DepthGrid> grid;  // full computational grid
    Eigen::VectorXd z_out;                  // decimated output depths
    std::vector<BasisSlice> slices;         // one per k sample
    bool spillover_warning = false;
};

// Called once per k sample with the full-resolution basis before it is
// discarded (slices keep only decimated mode shapes). May run on worker
// threads; write only to slot ik of any shared output.
using SliceCallback = std::function<void(int ik, const ModeBasis& basis)>;

// Solve modes, source weights, and (optionally) coupling sigmas at every
// wavenumber of an nk-sample grid. Samples with no trapped modes produce
// empty slices that contribute nothing downstream.
BasisTable build_basis_table(const ExperimentConfig& cfg, int nk, bool need_sigma,
                             int workers, const SliceCallback& with_basis = {});

// ---------------------------------------------------------------------------
// Member amplitude families b(k) = U(k) a(k)
// ---------------------------------------------------------------------------

// Propagate the source through frozen internal-wave fields, one per member
// seed, at every wavenumber: result[i][ik] has length M(ik). This is fused
// into the basis build (one mode solve per k); cost is members * nk full
// range marches.
std::vector<std::vector<Eigen::VectorXcd>> pe_member_amplitudes(
    const ExperimentConfig& cfg, BasisTable& table_out, int nk, int members, double range,
    int workers, bool need_sigma = false, double* propagation_seconds = nullptr);

// Ensemble path over an already built table (slices must carry sigmas).
std::vector<std::vector<Eigen::VectorXcd>> rmt_member_amplitudes(
    const ExperimentConfig& cfg, const BasisTable& bt, int members, double range,
    int workers);

// Unperturbed amplitudes b_m(k) = exp(-i k E_m r) a_m(k).
std::vector<Eigen::VectorXcd> free_amplitudes(const BasisTable& bt, double range);

// Synthesis wrapper stamping origin/seed/member metadata.
TimefrontGrid member_timefront(const ExperimentConfig& cfg, const BasisTable& bt,
                               const std::vector<Eigen::VectorXcd>& b, double range,
                               const std::string& origin, std::uint64_t seed, int member);

// ---------------------------------------------------------------------------
// Analysis helpers
// ---------------------------------------------------------------------------

// Nearest sample of a monotone axis; optionally reports value - axis[i].
int nearest_index(const Eigen::VectorXd& axis, double value, double* offset = nullptr);

// Least-squares slope of log10(y) against x over samples [i0, i1).
// Nonpositive y samples are floored at 1e-300.
double log_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y, int i0, int i1);

// Local maxima above rel_floor * max(trace), at least min_sep samples apart
// (keeping the taller of two close peaks).
std::vector<int> peak_indices(const Eigen::VectorXd& trace, double rel_floor, int min_sep);

// Lag in [-max_lag, max_lag] maximizing the cross-correlation of
// mean-removed traces (b shifted by the returned lag best matches a).
int xcorr_lag(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int max_lag);

// Mean of x(m, m+d) over valid m, for d = 0..dmax: the band profile of a
// matrix statistic.
Eigen::VectorXd band_profile(const Eigen::MatrixXd& x, int dmax);

// Linear fit of y against x returning {intercept, slope, r_squared}.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
};
LineFit fit_line(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

Eigen::MatrixXd to_db(const Eigen::MatrixXd& intensity, double floor_db = -300.0);

void write_traces_csv(const std::filesystem::path& path, const IntensityGrid& ig,
                      const std::vector<double>& depths);

void write_depth_profile_csv(const std::filesystem::path& path,
                             const std::vector<const IntensityGrid*>& grids,
                             const std::vector<std::string>& labels, double tau);

void write_band_profile_csv(const std::filesystem::path& path,
                            const std::vector<std::string>& labels,
                            const std::vector<Eigen::VectorXd>& profiles);

// ---------------------------------------------------------------------------
// Command runners
// ---------------------------------------------------------------------------

struct RunContext {
    ExperimentConfig cfg;
    std::string command;
    std::string method;  // "pe", "rmt", or "free" where applicable
    std::filesystem::path dir;
    int workers = 1;
    bool quiet = false;

    std::vector<std::filesystem::path> outputs;
    std::vector<std::string> warnings;
    nlohmann::json details = nlohmann::json::object();

    // dir/name, recorded for the manifest and for failure cleanup.
    std::filesystem::path out(const std::string& name);
    void warn(const std::string& message);
    void log(const std::string& message) const;
    // manifest.json: command, config echo + hash, versions, outputs,
    // warnings, details. Deliberately carries no timestamps or durations so
    // reruns are bit-identical.
    void write_manifest();
    // Remove every recorded output (failure path).
    void cleanup_outputs();
};

void cmd_modes(RunContext& rc);
void cmd_iw_field(RunContext& rc);
void cmd_pe_unitary(RunContext& rc);
void cmd_rmt_ensemble(RunContext& rc);
void cmd_timefront(RunContext& rc);
void cmd_average(RunContext& rc);
void cmd_mixing_front(RunContext& rc);
void cmd_compare(RunContext& rc);

} // namespace tfrmt
