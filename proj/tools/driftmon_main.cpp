// Command-line front end: single deployments, hyperparameter sweeps, risk
// certificates, and synthetic stream generation.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "driftmon/driftmon.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::optional<std::string> policy;
    int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs* args, bool config_required) {
    auto* opt = cmd->add_option("--config", args->config_path,
                                "experiment config file (key = value)");
    if (config_required) opt->required();
    cmd->add_option("--seed", args->seed,
                    "override the stream seed (and the seeds list)");
    cmd->add_option("--out-dir", args->out_dir, "output directory");
    cmd->add_option("--policy", args->policy,
                    "override the policy: pq | rr | mldemon-est | mldemon-dec");
    cmd->add_option("--jobs", args->jobs, "parallel worker count")
        ->check(CLI::PositiveNumber);
}

driftmon::ExperimentConfig load_config(const CommonArgs& args) {
    driftmon::ExperimentConfig cfg = driftmon::parse_config(args.config_path);
    if (args.seed) {
        cfg.drift.seed = *args.seed;
        cfg.seeds = {*args.seed};
    }
    if (args.policy) {
        cfg.policy = driftmon::detail::canonical_policy(*args.policy);
        cfg.policies = {cfg.policy};
    }
    return cfg;
}

int cmd_run(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const auto traj = driftmon::run_deployment(cfg);
    std::filesystem::create_directories(args.out_dir);
    const std::string path = args.out_dir + "/traj_" + cfg.policy + "_s" +
                             std::to_string(cfg.drift.seed) + ".csv";
    driftmon::write_trajectory_csv(path, traj);
    const auto& r = traj.report;
    std::cout << "policy=" << cfg.policy << " T=" << r.horizon
              << " Q=" << driftmon::detail::fmt(r.query_rate)
              << " R_mae=" << driftmon::detail::fmt(r.mae)
              << " R_hinge=" << driftmon::detail::fmt(r.hinge)
              << " R_bin=" << driftmon::detail::fmt(r.bin)
              << " L_mae=" << driftmon::detail::fmt(r.loss_mae)
              << " L_hinge=" << driftmon::detail::fmt(r.loss_hinge)
              << " truth=" << r.truth_source << '\n';
    std::cout << "wrote " << path << '\n';
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const auto cfg = load_config(args);
    driftmon::SweepOptions opt;
    opt.out_dir = args.out_dir;
    opt.jobs = args.jobs;
    const auto result = driftmon::run_sweep(cfg, opt);
    for (const auto& summary : result.policies) {
        std::cout << "policy=" << summary.policy;
        for (const auto& [key, value] : summary.auc)
            std::cout << " auc_" << key << '='
                      << driftmon::detail::fmt(value);
        std::cout << '\n';
    }
    std::cout << "wrote " << result.files.size() << " files under "
              << args.out_dir << '\n';
    return 0;
}

int cmd_gen(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const auto events = driftmon::generate(cfg.drift);
    std::filesystem::create_directories(args.out_dir);
    const std::string path = args.out_dir + "/stream.csv";
    driftmon::write_stream_csv(path, events);
    std::cout << "wrote " << path << " (" << events.size() << " events)\n";
    return 0;
}

struct CertifyArgs {
    double epsilon = 0.1;
    double delta = 1e-6;
    std::optional<std::int64_t> n;
    std::optional<double> alpha;
    double beta_cap = 0.0;
};

int cmd_certify(const CertifyArgs& args) {
    std::int64_t n;
    double alpha;
    bool hypothesis_ok = true;
    double hypothesis_bound = 0.0;
    if (args.n && args.alpha) {
        n = *args.n;
        alpha = *args.alpha;
    } else {
        const auto tc = driftmon::tolerance_constants(args.epsilon, args.delta);
        n = args.n.value_or(tc.n);
        alpha = args.alpha.value_or(tc.alpha);
        hypothesis_ok = tc.hypothesis_ok;
        hypothesis_bound = tc.hypothesis_bound;
    }
    const auto cert = driftmon::certify_risk(args.epsilon, args.delta, n,
                                             alpha, args.beta_cap);
    std::cout << "epsilon=" << driftmon::detail::fmt(cert.epsilon)
              << " delta=" << driftmon::detail::fmt(cert.delta) << " n=" << cert.n
              << " alpha=" << driftmon::detail::fmt(cert.alpha)
              << " beta_cap=" << driftmon::detail::fmt(cert.beta_cap) << '\n';
    std::cout << "bias:  psi_max + delta_conf = "
              << driftmon::detail::fmt(cert.psi_max + cert.delta_conf)
              << " (slack " << driftmon::detail::fmt(cert.bias_slack) << ")\n";
    std::cout << "tail:  2exp(-2n delta_conf^2) = "
              << driftmon::detail::fmt(cert.tail_bound) << " (slack "
              << driftmon::detail::fmt(cert.tail_slack) << ")\n";
    if (!hypothesis_ok)
        std::cout << "warning: drift bound exceeds the guarantee hypothesis "
                  << driftmon::detail::fmt(hypothesis_bound) << '\n';
    std::cout << (cert.pass ? "PASS" : "FAIL") << '\n';
    return cert.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-budgeted drift monitoring simulator"};
    app.require_subcommand(1);

    CommonArgs run_args, sweep_args, gen_args;
    CertifyArgs certify_args;

    auto* run = app.add_subcommand("run", "single deployment run");
    add_common(run, &run_args, true);
    auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep + AUC");
    add_common(sweep, &sweep_args, true);
    auto* gen = app.add_subcommand("gen", "emit a synthetic stream as CSV");
    add_common(gen, &gen_args, true);
    auto* certify =
        app.add_subcommand("certify", "check the risk-tolerance certificate");
    certify->add_option("--epsilon", certify_args.epsilon, "risk tolerance");
    certify->add_option("--delta", certify_args.delta, "drift bound");
    certify->add_option("--n", certify_args.n, "batch size override");
    certify->add_option("--alpha", certify_args.alpha,
                        "buffer multiplier override");
    certify->add_option("--beta-cap", certify_args.beta_cap,
                        "margin surplus cap (decision mode)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (gen->parsed()) return cmd_gen(gen_args);
        if (certify->parsed()) return cmd_certify(certify_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
