#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "timfg/config.hpp"
#include "timfg/errors.hpp"
#include "timfg/runner.hpp"

namespace {

/// Flags shared by every solving subcommand; each one overrides the
/// corresponding config-file key when given on the command line.
void add_common_flags(CLI::App* cmd, std::string& config_path, timfg::RunConfig& cfg) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    cmd->add_option("--out", cfg.out_dir, "output directory for CSV artifacts");
    cmd->add_option("--model", cfg.model_name, "catalog model name");
    cmd->add_option("--horizon", cfg.horizon, "time horizon");
    cmd->add_option("--n-time", cfg.n_time, "number of time steps");
    cmd->add_option("--n-space", cfg.n_space, "number of space steps");
    cmd->add_option("--n-action", cfg.n_action, "number of action steps");
    cmd->add_option("--x-lo", cfg.x_lo, "left edge of the state box");
    cmd->add_option("--x-hi", cfg.x_hi, "right edge of the state box");
    cmd->add_option("--lambda", cfg.lambda, "entropy regularization weight");
    cmd->add_option("--tol", cfg.tol, "fixed-point stopping tolerance");
    cmd->add_option("--max-iters", cfg.max_iters, "iteration cap per solve");
    cmd->add_option("--seed", cfg.seed, "base seed for all sampling");
    cmd->add_option("--threads", cfg.threads,
                    "worker threads (0 = TIMFG_THREADS env, then hardware count)");
    cmd->add_flag("--allow-nonconverged", cfg.allow_nonconverged,
                  "exit 0 even when the fixed point does not converge");
}

/// Re-parses so config-file values load first and explicit flags win.
timfg::RunConfig resolve(CLI::App* cmd, const std::string& config_path,
                         const timfg::RunConfig& parsed) {
    if (config_path.empty()) return parsed;
    timfg::RunConfig cfg = timfg::load_config(config_path);
    const auto keep = [&](const char* flag, auto member) {
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        if (opt != nullptr && opt->count() > 0) cfg.*member = parsed.*member;
    };
    keep("--out", &timfg::RunConfig::out_dir);
    keep("--model", &timfg::RunConfig::model_name);
    keep("--horizon", &timfg::RunConfig::horizon);
    keep("--n-time", &timfg::RunConfig::n_time);
    keep("--n-space", &timfg::RunConfig::n_space);
    keep("--n-action", &timfg::RunConfig::n_action);
    keep("--x-lo", &timfg::RunConfig::x_lo);
    keep("--x-hi", &timfg::RunConfig::x_hi);
    keep("--lambda", &timfg::RunConfig::lambda);
    keep("--tol", &timfg::RunConfig::tol);
    keep("--max-iters", &timfg::RunConfig::max_iters);
    keep("--seed", &timfg::RunConfig::seed);
    keep("--threads", &timfg::RunConfig::threads);
    keep("--lambda0", &timfg::RunConfig::lambda0);
    keep("--halvings", &timfg::RunConfig::halvings);
    keep("--n-particles", &timfg::RunConfig::n_particles);
    keep("--n-paths", &timfg::RunConfig::n_paths);
    keep("--nu-mean", &timfg::RunConfig::nu_mean);
    keep("--nu-std", &timfg::RunConfig::nu_std);
    if (cmd->count("--allow-nonconverged") > 0) cfg.allow_nonconverged = parsed.allow_nonconverged;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropy-regularized equilibrium solver for time-inconsistent"
                 " mean-field models on a 1-D state box"};
    app.require_subcommand(1);

    timfg::RunConfig cfg;
    std::string config_path;

    CLI::App* pia = app.add_subcommand("pia", "solve the equilibrium fixed point");
    add_common_flags(pia, config_path, cfg);
    pia->add_option("--nu-mean", cfg.nu_mean, "initial density mean");
    pia->add_option("--nu-std", cfg.nu_std, "initial density standard deviation");

    CLI::App* vanish = app.add_subcommand("vanish", "solve along a halving regularization schedule");
    add_common_flags(vanish, config_path, cfg);
    vanish->add_option("--lambda0", cfg.lambda0, "schedule start weight");
    vanish->add_option("--halvings", cfg.halvings, "number of halvings after lambda0");
    vanish->add_option("--nu-mean", cfg.nu_mean, "initial density mean");
    vanish->add_option("--nu-std", cfg.nu_std, "initial density standard deviation");

    CLI::App* verify = app.add_subcommand("verify", "solve, then audit the solution");
    add_common_flags(verify, config_path, cfg);
    verify->add_option("--nu-mean", cfg.nu_mean, "initial density mean");
    verify->add_option("--nu-std", cfg.nu_std, "initial density standard deviation");

    CLI::App* mc = app.add_subcommand("mc-check", "cross-check grid solvers by path sampling");
    add_common_flags(mc, config_path, cfg);
    mc->add_option("--n-particles", cfg.n_particles, "particles for the histogram flow");
    mc->add_option("--n-paths", cfg.n_paths, "paths per value estimate");
    mc->add_option("--nu-mean", cfg.nu_mean, "initial density mean");
    mc->add_option("--nu-std", cfg.nu_std, "initial density standard deviation");

    CLI::App* selftest = app.add_subcommand("selftest", "fast closed-form checks, no files written");

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest->parsed()) return timfg::command_selftest();
        CLI::App* active = app.get_subcommands().front();
        const timfg::RunConfig resolved = resolve(active, config_path, cfg);
        if (pia->parsed()) return timfg::command_pia(resolved);
        if (vanish->parsed()) return timfg::command_vanish(resolved);
        if (verify->parsed()) return timfg::command_verify(resolved);
        if (mc->parsed()) return timfg::command_mc_check(resolved);
    } catch (const timfg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
