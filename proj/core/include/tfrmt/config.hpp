#pragma once

#include "tfrmt/environment.hpp"
#include "tfrmt/pe.hpp"
#include "tfrmt/rmt.hpp"
#include "tfrmt/timefront.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace tfrmt {

// Invalid or inconsistent configuration. The message always names the
// offending field path, e.g. "numerics.dr: must be positive".
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnsembleSpec {
    std::uint64_t seed = 7041776;
    int members = 100;
    double block_range = 50.0;  // r_b, km
    bool k_coherent = true;
};

struct OutputSpec {
    std::string directory = "out";
    int z_stride = 16;    // output depth decimation of the computational grid
    int tau_stride = 1;   // extra time decimation for the analytic front
    bool csv = true;      // emit trace/profile CSVs
    bool db_grid = true;  // emit dB-magnitude companions for intensity grids
};

struct NumericsSpec {
    int nz = 8192;            // depth samples over [z_min, z_max]
    int nk_pe = 128;          // wavenumber samples for propagated runs
    int nk_rmt = 512;         // wavenumber samples for ensemble-only runs
    double span_sigmas = 4.0; // half-width of the k window in units of sigma_k
    int mode_count = 0;       // 0 = all trapped modes; >0 caps the basis size
};

struct ExperimentConfig {
    int schema = 1;
    WaveguideParams waveguide;
    InternalWaveParams internal_waves;
    SourceSpec source;
    PEConfig pe;
    NumericsSpec numerics;
    EnsembleSpec ensemble;
    double range = 50.0;       // km
    double tau_center = 0.0;   // s
    OutputSpec outputs;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Consistency checks beyond per-field parsing; throws ConfigError.
void validate(const ExperimentConfig& cfg);

// 64-bit FNV-1a over the canonical compact JSON dump, as 16 hex digits.
// Stamped into every output so artifacts can be traced to their settings.
std::string config_hash(const ExperimentConfig& cfg);

} // namespace tfrmt
