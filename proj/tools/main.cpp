#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specshape/commands.hpp"
#include "specshape/errors.hpp"
#include "specshape/version.hpp"

using namespace specshape;

namespace {

struct GlobalFlags {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    std::string checkpoint_path;
    std::vector<std::string> overrides;
    std::uint64_t seed_value = 0;
    CLI::Option* seed_opt = nullptr;
    int jobs = 1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, GlobalFlags& f, bool needs_data, bool needs_checkpoint) {
    cmd->add_option("--config", f.config_path, "JSON config file merged over defaults");
    cmd->add_option("--out", f.out_dir, "output directory")->required();
    cmd->add_option("--set", f.overrides,
                    "config override key.path=value (repeatable)");
    f.seed_opt = cmd->add_option("--seed", f.seed_value, "override config seed");
    cmd->add_flag("--quiet", f.quiet, "suppress progress output");
    if (needs_data)
        cmd->add_option("--data", f.data_dir, "dataset directory")->required();
    if (needs_checkpoint)
        cmd->add_option("--checkpoint", f.checkpoint_path, "checkpoint JSON file")
            ->required();
}

CommandArgs make_args(const std::string& command, const GlobalFlags& f) {
    std::optional<std::uint64_t> seed;
    if (f.seed_opt != nullptr && f.seed_opt->count() > 0) seed = f.seed_value;
    CommandArgs a;
    a.config = build_config(command, f.config_path, f.overrides, seed);
    a.out_dir = f.out_dir;
    a.data_dir = f.data_dir;
    a.checkpoint_path = f.checkpoint_path;
    a.jobs = f.jobs;
    a.quiet = f.quiet;
    return a;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive spectral filters on graphs"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    GlobalFlags gen_f, fit_f, tr_f, ev_f;

    CLI::App* gen = app.add_subcommand(
        "generate", "sample a graph and a supervised filtering dataset");
    add_common(gen, gen_f, false, false);

    CLI::App* fit = app.add_subcommand("fit", "train a filter bank on a dataset");
    add_common(fit, fit_f, true, false);
    int fit_k = 0;
    CLI::Option* fit_k_opt =
        fit->add_option("--k", fit_k, "number of shaping components");

    CLI::App* tr = app.add_subcommand(
        "transfer", "pretrain, adapt across graphs, and summarize improvement");
    add_common(tr, tr_f, false, false);
    tr->add_option("--jobs", tr_f.jobs, "parallel trial workers")
        ->check(CLI::Range(1, 256));

    CLI::App* ev = app.add_subcommand(
        "eval", "evaluate a checkpoint on a dataset (exact or polynomial path)");
    add_common(ev, ev_f, true, true);
    std::string ev_mode;
    CLI::Option* ev_mode_opt = ev->add_option("--mode", ev_mode, "exact or chebyshev");
    int ev_degree = 0;
    CLI::Option* ev_degree_opt =
        ev->add_option("--degree", ev_degree, "polynomial degree for chebyshev mode");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    // Flag-style shortcuts become config overrides once parsing has bound them.
    if (fit_k_opt->count() > 0)
        fit_f.overrides.push_back("k=" + std::to_string(fit_k));
    if (ev_mode_opt->count() > 0) ev_f.overrides.push_back("mode=" + ev_mode);
    if (ev_degree_opt->count() > 0)
        ev_f.overrides.push_back("degree=" + std::to_string(ev_degree));

    try {
        if (gen->parsed()) run_generate(make_args("generate", gen_f));
        if (fit->parsed()) run_fit(make_args("fit", fit_f));
        if (tr->parsed()) run_transfer(make_args("transfer", tr_f));
        if (ev->parsed()) run_eval(make_args("eval", ev_f));
        return 0;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CapabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DegenerateInputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
