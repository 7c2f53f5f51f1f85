#include <CLI11.hpp>

#include "commands.hpp"

using namespace mfgdelay::cli;

int main(int argc, char** argv) {
    CLI::App app{"Mean-field games with controlled observation delay"};
    app.require_subcommand(1);

    std::string validate_cfg;
    auto* validate = app.add_subcommand("validate", "Check a configuration file");
    validate->add_option("config", validate_cfg, "Configuration JSON")->required();

    SolveOptions so;
    std::string algorithm;
    double eta = 0.0, tol = 0.0;
    int inner = 0, max_outer = 0;
    std::uint64_t seed = 0;
    auto* solve = app.add_subcommand("solve", "Compute a regularized equilibrium");
    solve->add_option("config", so.config, "Configuration JSON")->required();
    auto* o_alg = solve->add_option("--algorithm", algorithm, "fixed-prior or prior-descent")
                      ->check(CLI::IsMember({"fixed-prior", "prior-descent"}));
    auto* o_eta = solve->add_option("--eta", eta, "Regularization strength");
    auto* o_inner = solve->add_option("--inner-iters", inner, "Inner iterations per prior update");
    auto* o_tol = solve->add_option("--tol", tol, "Relative exploitability tolerance");
    auto* o_outer = solve->add_option("--max-outer", max_outer, "Outer iteration cap");
    auto* o_seed = solve->add_option("--seed", seed, "Seed for the random initial policy");
    solve->add_flag("--random-init", so.random_init, "Start from a random policy");
    solve->add_option("--out", so.out, "Output directory (default $MFGDELAY_OUT or ./out)");
    solve->add_flag("--flow-full", so.flow_full, "Also write flow_full.csv");
    solve->add_flag("--dump-q", so.dump_q, "Also write q.csv");

    ConstantsOptions co;
    auto* constants = app.add_subcommand("constants", "Report Lipschitz and contraction constants");
    constants->add_option("config", co.config, "Configuration JSON")->required();
    constants->add_option("--zeta", co.zeta, "Metric weight");
    constants->add_option("--eta-star", co.eta_star, "Reference regularization level");
    constants->add_option("--out", co.out, "Output directory");

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Estimate N-player deviation gains");
    simulate->add_option("config", sim.config, "Configuration JSON")->required();
    simulate->add_option("--policy-file", sim.policy_file, "policy.csv from a previous solve");
    simulate->add_option("--N", sim.N, "Player counts")->delimiter(',');
    simulate->add_option("--episodes", sim.episodes, "Episodes per player count")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--threads", sim.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    simulate->add_option("--out", sim.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    if (*validate) return cmd_validate(validate_cfg);
    if (*solve) {
        if (*o_alg) so.algorithm = algorithm;
        if (*o_eta) so.eta = eta;
        if (*o_inner) so.inner_iters = inner;
        if (*o_tol) so.tol = tol;
        if (*o_outer) so.max_outer = max_outer;
        if (*o_seed) so.seed = seed;
        return cmd_solve(so);
    }
    if (*constants) return cmd_constants(co);
    return cmd_simulate(sim);
}
