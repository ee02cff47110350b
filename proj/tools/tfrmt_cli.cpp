#include "tfrmt/experiment.hpp"
#include "tfrmt/parallel.hpp"
#include "tfrmt/version.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int members = 0;
    double range = 0.0;
    double epsilon_scale = 1.0;
    double tau_center = 0.0;
    int workers = 0;
    bool quiet = false;
    std::string method;
};

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config_path, "JSON experiment config (defaults used if omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master ensemble seed");
    sub->add_option("--members", opt.members, "ensemble member count")->check(CLI::PositiveNumber);
    sub->add_option("--range", opt.range, "propagation range in km")->check(CLI::PositiveNumber);
    sub->add_option("--epsilon-scale,--epsilon", opt.epsilon_scale,
                    "multiplier applied to the internal-wave strength");
    sub->add_option("--tau-center", opt.tau_center, "center of the reduced-time window (s)");
    sub->add_option("--workers", opt.workers,
                    "worker threads (default: TFRMT_WORKERS or all cores)");
    sub->add_option("--out", opt.out_dir, "output directory (overrides config)");
    sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep-ocean timefronts: split-step propagation vs banded unitary ensembles"};
    app.set_version_flag("--version", std::string(tfrmt::version_string));
    app.require_subcommand(1);

    Options opt;
    CLI::App* modes = app.add_subcommand("modes", "trapped-mode table at the center wavenumber");
    CLI::App* iwf = app.add_subcommand("iw-field", "one frozen internal-wave realization on the (z, r) grid");
    CLI::App* peu = app.add_subcommand("pe-unitary", "one-step propagator extracted column by column");
    CLI::App* rme = app.add_subcommand("rmt-ensemble", "ensemble statistics of drawn propagators at the center wavenumber");
    CLI::App* tf = app.add_subcommand("timefront", "single-member timefront on the (z, tau) grid");
    CLI::App* avg = app.add_subcommand("average", "ensemble-averaged intensity on the (z, tau) grid");
    CLI::App* mix = app.add_subcommand("mixing-front", "analytic average intensity change over one block");
    CLI::App* cmp = app.add_subcommand("compare", "propagated vs drawn ensembles: variances, branches, finale decay");
    for (CLI::App* sub : {modes, iwf, peu, rme, tf, avg, mix, cmp}) add_common(sub, opt);
    tf->add_option("--method", opt.method, "pe (default), rmt, or free");
    avg->add_option("--method", opt.method, "rmt (default) or pe");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    CLI::App* sub = app.get_subcommands().front();

    tfrmt::RunContext rc;
    try {
        tfrmt::ExperimentConfig cfg;
        if (sub->count("--config")) cfg = tfrmt::load_config(opt.config_path);
        if (sub->count("--seed")) cfg.ensemble.seed = opt.seed;
        if (sub->count("--members")) cfg.ensemble.members = opt.members;
        if (sub->count("--range")) cfg.range = opt.range;
        if (sub->count("--tau-center")) cfg.tau_center = opt.tau_center;
        if (sub->count("--epsilon-scale")) {
            if (opt.epsilon_scale < 0.0)
                throw tfrmt::ConfigError("epsilon-scale: must be nonnegative");
            cfg.internal_waves.strength_scale *= opt.epsilon_scale;
        }
        if (sub->count("--out")) cfg.outputs.directory = opt.out_dir;
        tfrmt::validate(cfg);

        rc.cfg = cfg;
        rc.command = sub->get_name();
        rc.method = opt.method;
        rc.dir = cfg.outputs.directory;
        rc.workers = tfrmt::resolve_workers(opt.workers);
        rc.quiet = opt.quiet;
        fs::create_directories(rc.dir);
    } catch (const tfrmt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        const std::string name = sub->get_name();
        if (name == "modes") tfrmt::cmd_modes(rc);
        else if (name == "iw-field") tfrmt::cmd_iw_field(rc);
        else if (name == "pe-unitary") tfrmt::cmd_pe_unitary(rc);
        else if (name == "rmt-ensemble") tfrmt::cmd_rmt_ensemble(rc);
        else if (name == "timefront") tfrmt::cmd_timefront(rc);
        else if (name == "average") tfrmt::cmd_average(rc);
        else if (name == "mixing-front") tfrmt::cmd_mixing_front(rc);
        else if (name == "compare") tfrmt::cmd_compare(rc);
    } catch (const tfrmt::ConfigError& e) {
        rc.cleanup_outputs();
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        rc.cleanup_outputs();
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cout << rc.command << ": wrote " << rc.outputs.size() << " files to "
              << rc.dir.string() << "\n";
    return 0;
}
