#include "tfrmt/config.hpp"

#include <fstream>
#include <sstream>

namespace tfrmt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
}

const json& section(const json& j, const std::string& name) {
    static const json empty = json::object();
    if (!j.contains(name)) return empty;
    if (!j.at(name).is_object()) fail(name, "expected an object");
    return j.at(name);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
}

double num(const json& j, const std::string& path, const char* key, double def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

int integer(const json& j, const std::string& path, const char* key, int def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<int>();
}

std::uint64_t u64(const json& j, const std::string& path, const char* key, std::uint64_t def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number_unsigned() && !v.is_number_integer())
        fail(path + "." + key, "expected an unsigned integer");
    if (v.is_number_integer() && v.get<std::int64_t>() < 0)
        fail(path + "." + key, "expected an unsigned integer");
    return v.get<std::uint64_t>();
}

bool boolean(const json& j, const std::string& path, const char* key, bool def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(path + "." + key, "expected a boolean");
    return v.get<bool>();
}

std::string str(const json& j, const std::string& path, const char* key,
                const std::string& def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

void require_positive(double v, const std::string& path) {
    if (!(v > 0.0)) fail(path, "must be positive");
}

} // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
    json j;
    j["schema"] = c.schema;
    j["waveguide"] = {{"c0", c.waveguide.c0},       {"z_axis", c.waveguide.z_axis},
                      {"B", c.waveguide.B},         {"gamma", c.waveguide.gamma},
                      {"H", c.waveguide.H},         {"z_min", c.waveguide.z_min},
                      {"z_max", c.waveguide.z_max}};
    j["internal_waves"] = {{"energy", c.internal_waves.energy},
                           {"n0", c.internal_waves.n0},
                           {"f_inertial", c.internal_waves.f_inertial},
                           {"j_star", c.internal_waves.j_star},
                           {"j_max", c.internal_waves.j_max},
                           {"g", c.internal_waves.g},
                           {"n_kl", c.internal_waves.n_kl},
                           {"kl_min", c.internal_waves.kl_min},
                           {"kl_max", c.internal_waves.kl_max},
                           {"strength_scale", c.internal_waves.strength_scale}};
    j["source"] = {{"f0", c.source.f0},
                   {"sigma_f", c.source.sigma_f},
                   {"z_src", c.source.z_src},
                   {"w_src", c.source.w_src}};
    j["pe"] = {{"dr", c.pe.dr},
               {"absorber_width", c.pe.absorber_width},
               {"absorber_strength", c.pe.absorber_strength},
               {"unitarity_tol", c.pe.unitarity_tol}};
    j["numerics"] = {{"nz", c.numerics.nz},
                     {"nk_pe", c.numerics.nk_pe},
                     {"nk_rmt", c.numerics.nk_rmt},
                     {"span_sigmas", c.numerics.span_sigmas},
                     {"mode_count", c.numerics.mode_count}};
    j["ensemble"] = {{"seed", c.ensemble.seed},
                     {"members", c.ensemble.members},
                     {"block_range", c.ensemble.block_range},
                     {"k_coherent", c.ensemble.k_coherent}};
    j["run"] = {{"range", c.range}, {"tau_center", c.tau_center}};
    j["outputs"] = {{"directory", c.outputs.directory},
                    {"z_stride", c.outputs.z_stride},
                    {"tau_stride", c.outputs.tau_stride},
                    {"csv", c.outputs.csv},
                    {"db_grid", c.outputs.db_grid}};
    return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    check_keys(j, "", {"schema", "waveguide", "internal_waves", "source", "pe", "numerics",
                       "ensemble", "run", "outputs"});

    ExperimentConfig c;
    if (j.contains("schema")) {
        if (!j.at("schema").is_number_integer()) fail("schema", "expected an integer");
        c.schema = j.at("schema").get<int>();
        if (c.schema != 1) fail("schema", "unsupported version " + std::to_string(c.schema));
    }

    {
        const json& s = section(j, "waveguide");
        const std::string p = "waveguide";
        check_keys(s, p, {"c0", "z_axis", "B", "gamma", "H", "z_min", "z_max"});
        c.waveguide.c0 = num(s, p, "c0", c.waveguide.c0);
        c.waveguide.z_axis = num(s, p, "z_axis", c.waveguide.z_axis);
        c.waveguide.B = num(s, p, "B", c.waveguide.B);
        c.waveguide.gamma = num(s, p, "gamma", c.waveguide.gamma);
        c.waveguide.H = num(s, p, "H", c.waveguide.H);
        c.waveguide.z_min = num(s, p, "z_min", c.waveguide.z_min);
        c.waveguide.z_max = num(s, p, "z_max", c.waveguide.z_max);
    }
    {
        const json& s = section(j, "internal_waves");
        const std::string p = "internal_waves";
        check_keys(s, p, {"energy", "n0", "f_inertial", "j_star", "j_max", "g", "n_kl",
                          "kl_min", "kl_max", "strength_scale"});
        c.internal_waves.energy = num(s, p, "energy", c.internal_waves.energy);
        c.internal_waves.n0 = num(s, p, "n0", c.internal_waves.n0);
        c.internal_waves.f_inertial = num(s, p, "f_inertial", c.internal_waves.f_inertial);
        c.internal_waves.j_star = integer(s, p, "j_star", c.internal_waves.j_star);
        c.internal_waves.j_max = integer(s, p, "j_max", c.internal_waves.j_max);
        c.internal_waves.g = num(s, p, "g", c.internal_waves.g);
        c.internal_waves.n_kl = integer(s, p, "n_kl", c.internal_waves.n_kl);
        c.internal_waves.kl_min = num(s, p, "kl_min", c.internal_waves.kl_min);
        c.internal_waves.kl_max = num(s, p, "kl_max", c.internal_waves.kl_max);
        c.internal_waves.strength_scale =
            num(s, p, "strength_scale", c.internal_waves.strength_scale);
    }
    {
        const json& s = section(j, "source");
        const std::string p = "source";
        check_keys(s, p, {"f0", "sigma_f", "z_src", "w_src"});
        c.source.f0 = num(s, p, "f0", c.source.f0);
        c.source.sigma_f = num(s, p, "sigma_f", c.source.sigma_f);
        c.source.z_src = num(s, p, "z_src", c.source.z_src);
        c.source.w_src = num(s, p, "w_src", c.source.w_src);
    }
    {
        const json& s = section(j, "pe");
        const std::string p = "pe";
        check_keys(s, p, {"dr", "absorber_width", "absorber_strength", "unitarity_tol"});
        c.pe.dr = num(s, p, "dr", c.pe.dr);
        c.pe.absorber_width = num(s, p, "absorber_width", c.pe.absorber_width);
        c.pe.absorber_strength = num(s, p, "absorber_strength", c.pe.absorber_strength);
        c.pe.unitarity_tol = num(s, p, "unitarity_tol", c.pe.unitarity_tol);
    }
    {
        const json& s = section(j, "numerics");
        const std::string p = "numerics";
        check_keys(s, p, {"nz", "nk_pe", "nk_rmt", "span_sigmas", "mode_count"});
        c.numerics.nz = integer(s, p, "nz", c.numerics.nz);
        c.numerics.nk_pe = integer(s, p, "nk_pe", c.numerics.nk_pe);
        c.numerics.nk_rmt = integer(s, p, "nk_rmt", c.numerics.nk_rmt);
        c.numerics.span_sigmas = num(s, p, "span_sigmas", c.numerics.span_sigmas);
        c.numerics.mode_count = integer(s, p, "mode_count", c.numerics.mode_count);
    }
    {
        const json& s = section(j, "ensemble");
        const std::string p = "ensemble";
        check_keys(s, p, {"seed", "members", "block_range", "k_coherent"});
        c.ensemble.seed = u64(s, p, "seed", c.ensemble.seed);
        c.ensemble.members = integer(s, p, "members", c.ensemble.members);
        c.ensemble.block_range = num(s, p, "block_range", c.ensemble.block_range);
        c.ensemble.k_coherent = boolean(s, p, "k_coherent", c.ensemble.k_coherent);
    }
    {
        const json& s = section(j, "run");
        const std::string p = "run";
        check_keys(s, p, {"range", "tau_center"});
        c.range = num(s, p, "range", c.range);
        c.tau_center = num(s, p, "tau_center", c.tau_center);
    }
    {
        const json& s = section(j, "outputs");
        const std::string p = "outputs";
        check_keys(s, p, {"directory", "z_stride", "tau_stride", "csv", "db_grid"});
        c.outputs.directory = str(s, p, "directory", c.outputs.directory);
        c.outputs.z_stride = integer(s, p, "z_stride", c.outputs.z_stride);
        c.outputs.tau_stride = integer(s, p, "tau_stride", c.outputs.tau_stride);
        c.outputs.csv = boolean(s, p, "csv", c.outputs.csv);
        c.outputs.db_grid = boolean(s, p, "db_grid", c.outputs.db_grid);
    }

    validate(c);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: " + path.string() + " is not valid JSON");
    return config_from_json(j);
}

void validate(const ExperimentConfig& c) {
    require_positive(c.waveguide.c0, "waveguide.c0");
    require_positive(c.waveguide.B, "waveguide.B");
    require_positive(c.waveguide.gamma, "waveguide.gamma");
    require_positive(c.waveguide.H, "waveguide.H");
    if (!(c.waveguide.z_max > c.waveguide.z_min)) fail("waveguide.z_max", "must exceed z_min");
    if (c.waveguide.z_axis <= c.waveguide.z_min || c.waveguide.z_axis >= c.waveguide.z_max)
        fail("waveguide.z_axis", "must lie inside the depth window");

    if (c.internal_waves.energy < 0.0) fail("internal_waves.energy", "must be nonnegative");
    require_positive(c.internal_waves.n0, "internal_waves.n0");
    require_positive(c.internal_waves.f_inertial, "internal_waves.f_inertial");
    if (c.internal_waves.f_inertial >= c.internal_waves.n0)
        fail("internal_waves.f_inertial", "must be below n0");
    if (c.internal_waves.j_star < 1) fail("internal_waves.j_star", "must be at least 1");
    if (c.internal_waves.j_max < 1) fail("internal_waves.j_max", "must be at least 1");
    require_positive(c.internal_waves.g, "internal_waves.g");
    if (c.internal_waves.n_kl < 1) fail("internal_waves.n_kl", "must be at least 1");
    require_positive(c.internal_waves.kl_min, "internal_waves.kl_min");
    if (!(c.internal_waves.kl_max > c.internal_waves.kl_min))
        fail("internal_waves.kl_max", "must exceed kl_min");
    if (c.internal_waves.strength_scale < 0.0)
        fail("internal_waves.strength_scale", "must be nonnegative");

    require_positive(c.source.f0, "source.f0");
    require_positive(c.source.sigma_f, "source.sigma_f");
    if (!(c.source.f0 > 3.0 * c.source.sigma_f))
        fail("source.f0", "must exceed 3 sigma_f to keep negative wavenumbers negligible");
    require_positive(c.source.w_src, "source.w_src");
    if (c.source.z_src <= c.waveguide.z_min || c.source.z_src >= c.waveguide.z_max)
        fail("source.z_src", "must lie inside the depth window");

    require_positive(c.pe.dr, "pe.dr");
    require_positive(c.pe.absorber_width, "pe.absorber_width");
    if (2.0 * c.pe.absorber_width >= c.waveguide.z_max - c.waveguide.z_min)
        fail("pe.absorber_width", "absorbers cover the whole depth window");
    if (c.pe.absorber_strength < 0.0) fail("pe.absorber_strength", "must be nonnegative");
    require_positive(c.pe.unitarity_tol, "pe.unitarity_tol");

    if (c.numerics.nz < 16) fail("numerics.nz", "must be at least 16");
    if (c.numerics.nk_pe < 4) fail("numerics.nk_pe", "must be at least 4");
    if (c.numerics.nk_rmt < 4) fail("numerics.nk_rmt", "must be at least 4");
    require_positive(c.numerics.span_sigmas, "numerics.span_sigmas");
    if (c.numerics.mode_count < 0) fail("numerics.mode_count", "must be nonnegative");

    const double dz = (c.waveguide.z_max - c.waveguide.z_min) / (c.numerics.nz - 1);
    if (c.source.w_src < 3.0 * dz)
        fail("source.w_src", "not resolvable on the depth grid (needs at least 3 dz)");

    if (c.ensemble.members < 1) fail("ensemble.members", "must be at least 1");
    require_positive(c.ensemble.block_range, "ensemble.block_range");

    require_positive(c.range, "run.range");
    if (c.outputs.directory.empty()) fail("outputs.directory", "must not be empty");
    if (c.outputs.z_stride < 1) fail("outputs.z_stride", "must be at least 1");
    if (c.outputs.tau_stride < 1) fail("outputs.tau_stride", "must be at least 1");
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string text = to_json(cfg).dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char b : text) {
        h ^= b;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex;
    for (int i = 15; i >= 0; --i) os << ((h >> (4 * i)) & 0xf);
    return os.str();
}

} // namespace tfrmt
