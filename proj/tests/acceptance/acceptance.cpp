// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "mfgdelay/nplayer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mfgdelay;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
    double extra_seconds = 0.0;  ///< time of cached solves this criterion relies on
};

// ---------------------------------------------------------------------------
// SIS equilibria shared by several criteria

constexpr std::size_t kInfected = 0, kDistancing = 1;

struct Equilibrium {
    Problem problem;
    SpaceIndex spaces;
    std::vector<double> nu0;
    SolveReport report;
    std::vector<std::vector<double>> series;
    double steady = 0.0;
    double seconds = 0.0;
};

double steady_state(const std::vector<std::vector<double>>& series) {
    const int T = static_cast<int>(series.size()) - 1;
    double s = 0.0;
    int n = 0;
    for (int t = T / 2; t <= 3 * T / 4; ++t, ++n) s += series[static_cast<std::size_t>(t)][kInfected];
    return s / n;
}

std::map<std::pair<std::string, double>, Equilibrium> cache;

const Equilibrium& equilibrium(const std::string& file, double cost) {
    const auto key = std::make_pair(file, cost);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    const auto t0 = Clock::now();
    Equilibrium e;
    e.problem = testing::with_cost(testing::load(file), cost);
    e.spaces = build_spaces(e.problem.model);
    e.nu0 = initial_measure(e.problem.model, e.spaces, e.problem.initial);
    e.report = solve(e.problem.model, e.spaces, e.nu0, e.problem.solver);
    e.series = aggregate_series(e.problem.model, e.spaces, e.report.policy, e.report.flow, e.problem.aggregates);
    e.steady = steady_state(e.series);
    e.seconds = seconds_since(t0);
    std::printf("  [solve %s c=%g: %s after %d outer, rel %.4g, steady %.4f, %.1f s]\n", file.c_str(), cost,
                e.report.converged ? "converged" : "NOT converged", e.report.trace.back().outer,
                e.report.trace.back().relative, e.steady, e.seconds);
    return cache.emplace(key, std::move(e)).first->second;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
    const auto tiny = testing::load("tiny.json");
    const auto& m = tiny.model;
    const auto sp = build_spaces(m);
    std::mt19937_64 rng(101);
    double worst = 0.0;
    int cases = 0;

    auto compare = [&](const oracle::HistoryGame& g, const std::vector<std::pair<ExtendedWindow, double>>& atoms) {
        std::vector<double> nu(sp.window_size(), 0.0);
        for (const auto& [w, p] : atoms) nu[sp.encode(w)] += p;
        const auto mdp = build_mdp(m, sp, oracle::lagged_from_sequence(g, m.T()));
        const double dp = best_response_value(mdp, observable_marginal(sp, nu));
        const double search = oracle::optimal_value(g, atoms, m.T());
        worst = std::max(worst, std::abs(dp - search));
        ++cases;
    };
    auto random_atoms = [&] {
        std::vector<std::pair<ExtendedWindow, double>> atoms;
        double s = 0.0;
        for (std::size_t w = 0; w < sp.window_size(); ++w) {
            const double p = testing::uniform01(rng);
            atoms.emplace_back(sp.decode_window(w), p);
            s += p;
        }
        for (auto& a : atoms) a.second /= s;
        return atoms;
    };

    // arbitrary measure sequences
    for (int rep = 0; rep < 20; ++rep) {
        oracle::HistoryGame g{&m, {}};
        for (int s = -m.d_max(); s <= m.T(); ++s) g.mu.push_back(testing::random_simplex(rng, m.measure_dim()));
        compare(g, random_atoms());
    }
    // the sequence induced by a population playing a random policy
    for (int rep = 0; rep < 5; ++rep) {
        const auto atoms = random_atoms();
        std::vector<double> nu(sp.window_size(), 0.0);
        for (const auto& [w, p] : atoms) nu[sp.encode(w)] += p;
        const auto pi = testing::random_policy_table(rng, m.T(), sp.y_size(), sp.n_u());
        const auto flow = propagate(m, sp, pi, nu);
        oracle::HistoryGame g{&m, {}};
        g.mu.push_back(belief_map(m, sp, flow[0]).lag[1]);
        for (int t = 0; t <= m.T(); ++t) g.mu.push_back(belief_map(m, sp, flow[t]).lag[0]);
        compare(g, atoms);
    }

    // literal enumeration of deterministic policies where it is tractable
    ModelSpec m1 = m;
    m1.horizon.T = 1;
    const auto sp1 = build_spaces(m1);
    oracle::HistoryGame g1{&m1, {}};
    for (int s = -m1.d_max(); s <= 1; ++s) g1.mu.push_back(testing::random_simplex(rng, m1.measure_dim()));
    const auto atoms1 = random_atoms();
    double brute = 0.0;
    for (const auto& info : oracle::initial_infosets(g1, atoms1)) brute += oracle::weight(info) * oracle::enumerate_policies(g1, info, 1);
    std::vector<double> nu1(sp1.window_size(), 0.0);
    for (const auto& [w, p] : atoms1) nu1[sp1.encode(w)] += p;
    const double dp1 = best_response_value(build_mdp(m1, sp1, oracle::lagged_from_sequence(g1, 1)), observable_marginal(sp1, nu1));
    const double enum_gap = std::abs(dp1 - brute);

    const bool ok = worst <= 1e-9 && enum_gap <= 1e-9;
    return {ok, fmt("%d cases at T=3, max |DP - search| = %.3g; T=1 literal enumeration gap %.3g (tol 1e-9)", cases,
                    worst, enum_gap)};
}

Outcome belief_lipschitz_check() {
    const auto sis = testing::load("sis.json");
    const auto& m = sis.model;
    const auto sp = build_spaces(m);
    const double L_M = contraction_constants(m).L_M;
    std::mt19937_64 rng(102);
    int violations = 0;
    double worst_ratio = 0.0;
    auto tv = [](std::span<const double> p, std::span<const double> q) {
        double s = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
        return 0.5 * s;
    };
    for (int rep = 0; rep < 100; ++rep) {
        const double density = rep % 3 == 0 ? 1.0 : 0.15;
        const auto a = testing::random_window_measure(rng, m, sp, density);
        auto b = testing::random_window_measure(rng, m, sp, density);
        if (rep % 2) {
            // nearby pair
            for (std::size_t w = 0; w < b.size(); ++w) b[w] = 0.9 * a[w] + 0.1 * b[w];
        }
        const auto la = belief_map(m, sp, a), lb = belief_map(m, sp, b);
        double lhs = 0.0;
        for (int k = 0; k <= m.d_max(); ++k) {
            lhs = std::max(lhs, tv(la.state[static_cast<std::size_t>(k)], lb.state[static_cast<std::size_t>(k)]));
            if (la.has(k)) lhs = std::max(lhs, tv(la.lag[static_cast<std::size_t>(k)], lb.lag[static_cast<std::size_t>(k)]));
        }
        const double rhs = tv(a, b);
        if (lhs > L_M * rhs + 1e-12) ++violations;
        if (rhs > 0.0) worst_ratio = std::max(worst_ratio, lhs / rhs);
    }
    return {violations == 0, fmt("100 pairs, %d violations; max observed ratio %.4f vs L_M = %.4f", violations,
                                 worst_ratio, L_M)};
}

Outcome q_bound_monotone() {
    std::mt19937_64 rng(103);
    int bound_viol = 0, mono_viol = 0;
    double worst = 0.0;
    long entries = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const int n_x = 2 + rep % 2, n_a = 2;
        const std::vector<std::vector<int>> delay_sets{{1, 0}, {2, 0}, {2, 1}, {3, 1, 0}};
        const auto& delays = delay_sets[static_cast<std::size_t>(rep % 4)];
        const auto mode = rep % 2 ? Interaction::Joint : Interaction::StateOnly;
        const double gamma = 0.5 + 0.45 * testing::uniform01(rng);
        const auto m = testing::random_model(rng, n_x, n_a, delays, mode, gamma, 6);
        const auto sp = build_spaces(m);
        const double q_star = contraction_constants(m).q_star;
        const auto nu0 = testing::random_window_measure(rng, m, sp);
        const auto pop = testing::random_policy_table(rng, m.T(), sp.y_size(), sp.n_u());
        const auto mdp = build_mdp(m, sp, flow_lags(m, sp, propagate(m, sp, pop, nu0), &pop));
        const auto ref = testing::random_policy_table(rng, m.T(), sp.y_size(), sp.n_u());
        std::vector<QTable> qs;
        for (double eta : {0.1, 1.0, 10.0}) qs.push_back(backward_q_regularized(mdp, eta, ref));
        for (std::size_t k = 0; k < qs.size(); ++k)
            for (double v : qs[k].values()) {
                worst = std::max(worst, std::abs(v) / q_star);
                if (std::abs(v) > q_star + 1e-9) ++bound_viol;
                ++entries;
            }
        for (std::size_t k = 1; k < qs.size(); ++k)
            for (std::size_t j = 0; j < qs[k].values().size(); ++j)
                if (qs[k].values()[j] > qs[k - 1].values()[j] + 1e-12) ++mono_viol;
    }
    return {bound_viol == 0 && mono_viol == 0,
            fmt("20 models, %ld entries; bound violations %d (max |Q|/q* = %.3f); monotonicity violations %d", entries,
                bound_viol, worst, mono_viol)};
}

Outcome contraction_certificate() {
    const auto sis = testing::load("sis.json");
    const auto& m = sis.model;
    const auto sp = build_spaces(m);
    const auto nu0 = initial_measure(m, sp, sis.initial);
    const auto c = contraction_constants(m);
    const double eta = c.eta_contractive;

    SolveConfig cfg;
    cfg.algorithm = Algorithm::FixedPrior;
    cfg.eta = eta;
    cfg.max_outer = 12;
    cfg.tol = 0.0;
    cfg.tol_step = 0.0;

    std::vector<SolveReport> runs;
    int ratio_viol = 0;
    double worst_ratio = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.random_init = true;
        cfg.seed = seed;
        runs.push_back(solve_fixed_prior(m, sp, nu0, cfg));
        const auto& tr = runs.back().trace;
        for (std::size_t k = 3; k < tr.size(); ++k) {
            // a zero step stays zero; the ratio is undefined there
            if (tr[k - 1].step == 0.0) {
                if (tr[k].step != 0.0) ++ratio_viol;
                continue;
            }
            worst_ratio = std::max(worst_ratio, tr[k].ratio);
            if (!(tr[k].ratio < 1.0)) ++ratio_viol;
        }
    }
    double spread = 0.0;
    for (std::size_t r = 1; r < runs.size(); ++r) spread = std::max(spread, delta_inf(runs[r].flow, runs[0].flow, c.zeta));
    return {ratio_viol == 0 && spread <= 1e-6,
            fmt("eta = %.6g (threshold %.6g); 5 random starts, ratio violations %d (max ratio %.3g); max delta_inf "
                "between limits %.3g (tol 1e-6)",
                eta, c.eta_threshold, ratio_viol, worst_ratio, spread)};
}

Outcome exploitability_convergence() {
    bool ok = true;
    std::string detail;
    double reused = 0.0;
    for (double cost : {0.005, 0.1}) {
        const auto& e = equilibrium("sis.json", cost);
        const auto& last = e.report.trace.back();
        const bool pd_ok = e.report.converged && last.relative < 0.01 && last.outer <= 200;

        auto cfg = e.problem.solver;
        cfg.algorithm = Algorithm::FixedPrior;
        cfg.max_outer = last.iter;
        cfg.tol = 0.0;
        cfg.tol_step = 0.0;
        const auto fp = solve_fixed_prior(e.problem.model, e.spaces, e.nu0, cfg);
        double fp_best = INFINITY;
        for (const auto& r : fp.trace) fp_best = std::min(fp_best, r.relative);
        const bool beats = fp.trace.back().relative > last.relative;
        ok = ok && pd_ok && beats;
        detail += fmt("c=%g: prior descent rel %.4g after %d outer (%d iterations); fixed prior at equal budget rel "
                      "%.4g (best %.4g); ",
                      cost, last.relative, last.outer, last.iter, fp.trace.back().relative, fp_best);
        reused += e.seconds;
    }
    // small eta without prior updates
    auto sis = testing::with_cost(testing::load("sis.json"), 0.1);
    const auto sp = build_spaces(sis.model);
    const auto nu0 = initial_measure(sis.model, sp, sis.initial);
    SolveConfig cfg;
    cfg.algorithm = Algorithm::FixedPrior;
    cfg.eta = 0.05;
    cfg.max_outer = 200;
    cfg.tol = 0.0;
    cfg.tol_step = 0.0;
    const auto small = solve_fixed_prior(sis.model, sp, nu0, cfg);
    ok = ok && small.diverged;
    detail += fmt("fixed prior eta=0.05 at c=0.1: divergence flag %s, final rel %.3g", small.diverged ? "raised" : "NOT raised",
                  small.trace.back().relative);
    return {ok, detail, reused};
}

Outcome sis_qualitative() {
    double reused = 0.0;
    std::vector<double> steady;
    for (double cost : {0.005, 0.05, 0.1}) {
        const auto& e = equilibrium("sis.json", cost);
        steady.push_back(e.steady);
        reused += e.seconds;
    }
    const bool increasing = steady[0] < steady[1] && steady[1] < steady[2];

    const auto& e = equilibrium("sis.json", 0.1);
    const auto& s = e.series;
    const int T = static_cast<int>(s.size()) - 1;
    std::vector<int> peaks;
    for (int t = 1; t < T; ++t) {
        const double x = s[static_cast<std::size_t>(t)][kInfected];
        if (x > s[static_cast<std::size_t>(t - 1)][kInfected] + 1e-12 && x >= s[static_cast<std::size_t>(t + 1)][kInfected])
            peaks.push_back(t);
    }

    // lag maximizing the cross-correlation of infection and distancing
    const int hi = 3 * T / 4;
    int best_lag = 0;
    double best = -INFINITY;
    for (int lag = 0; lag <= 10; ++lag) {
        double mi = 0.0, md = 0.0;
        int n = 0;
        for (int t = 1; t + lag <= hi; ++t, ++n) {
            mi += s[static_cast<std::size_t>(t)][kInfected];
            md += s[static_cast<std::size_t>(t + lag)][kDistancing];
        }
        mi /= n;
        md /= n;
        double num = 0.0, vi = 0.0, vd = 0.0;
        for (int t = 1; t + lag <= hi; ++t) {
            const double a = s[static_cast<std::size_t>(t)][kInfected] - mi;
            const double b = s[static_cast<std::size_t>(t + lag)][kDistancing] - md;
            num += a * b;
            vi += a * a;
            vd += b * b;
        }
        const double r = num / std::sqrt(vi * vd);
        if (r > best) {
            best = r;
            best_lag = lag;
        }
    }
    std::string where;
    for (std::size_t k = 0; k < std::min<std::size_t>(peaks.size(), 8); ++k) where += (k ? "," : "") + std::to_string(peaks[k]);
    const bool ok = increasing && peaks.size() >= 2 && std::abs(best_lag - 3) <= 1;
    return {ok,
            fmt("steady infected %.4f < %.4f < %.4f: %s; c=0.1 interior maxima %zu (t=%s); peak lag %d (corr %.3f)",
                steady[0], steady[1], steady[2], increasing ? "yes" : "no", peaks.size(), where.c_str(), best_lag, best),
            reused};
}

Outcome inverted_rewards() {
    double reused = 0.0;
    auto get = [&](const char* file, double c) -> const Equilibrium& {
        const auto& e = equilibrium(file, c);
        reused += e.seconds;
        return e;
    };
    const auto& c_lo = get("sis.json", 0.001);
    const auto& c_hi = get("sis.json", 0.05);
    const auto& i_lo = get("sis_inverted.json", 0.001);
    const auto& i_hi = get("sis_inverted.json", 0.05);
    const bool converged = c_lo.report.converged && c_hi.report.converged && i_lo.report.converged && i_hi.report.converged;
    const bool above = i_lo.steady > c_lo.steady && i_hi.steady > c_hi.steady;
    const double d_inv = std::abs(i_lo.steady - i_hi.steady), d_comp = std::abs(c_lo.steady - c_hi.steady);
    const bool flatter = d_inv < d_comp;
    return {converged && above && flatter,
            fmt("inverted %.4f / %.4f vs compliant %.4f / %.4f at c=0.001 / 0.05; spread %.4f vs %.4f; all converged: %s",
                i_lo.steady, i_hi.steady, c_lo.steady, c_hi.steady, d_inv, d_comp, converged ? "yes" : "no"),
            reused};
}

Outcome epsilon_nash() {
    const auto& e = equilibrium("sis.json", 0.05);
    const auto& m = e.problem.model;
    const auto dev = build_deviator(e.report.policy, m, e.spaces, e.nu0);
    const double mf_value = exploitability(m, e.spaces, e.report.policy, e.nu0).policy_value;

    EpisodeConfig cfg;
    cfg.episodes = 2000;
    cfg.seed = 2024;
    cfg.crowd_policy = &e.report.policy;
    cfg.deviator_policy = &dev;
    cfg.nu0 = e.nu0;
    std::vector<GapEstimate> gaps;
    std::string rows;
    for (int N : {5, 20, 100}) {
        cfg.N = N;
        gaps.push_back(simulate_nplayer(cfg, m, e.spaces));
        rows += fmt("N=%d gap %.4f +- %.4f; ", N, gaps.back().gap, gaps.back().ci95);
    }
    const bool decreasing = gaps[0].gap > gaps[1].gap && gaps[1].gap > gaps[2].gap;
    cfg.N = 200;
    const auto big = simulate_nplayer(cfg, m, e.spaces);
    const bool close = std::abs(big.mean_crowd - mf_value) <= 3 * big.stderr_crowd;
    return {decreasing && close,
            rows + fmt("strictly decreasing: %s; N=200 crowd %.4f (se %.4f) vs mean-field %.4f: %s", decreasing ? "yes" : "no",
                       big.mean_crowd, big.stderr_crowd, mf_value, close ? "within 3 se" : "outside 3 se"),
            e.seconds};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& f : fs::directory_iterator(dir)) {
        std::ifstream in(f.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[f.path().filename().string()] = ss.str();
    }
    return files;
}

Outcome determinism() {
    const fs::path root = MFGDELAY_TEST_SCRATCH;
    int mismatches = 0, runs = 0, bad_hash = 0;
    std::size_t files = 0;
    auto twice = [&](const std::string& name, const std::function<int(const std::string&)>& cmd) {
        const auto dir = root / name;
        fs::remove_all(dir);
        if (cmd(dir.string()) != cli::kOk) ++mismatches;
        const auto first = snapshot(dir);
        fs::remove_all(dir);
        if (cmd(dir.string()) != cli::kOk) ++mismatches;
        const auto second = snapshot(dir);
        if (first != second) ++mismatches;
        files += first.size();
        runs += 2;
        const auto manifest = nlohmann::json::parse(second.at("manifest.json"));
        for (const auto& a : manifest["artifacts"])
            if (cli::sha256_file((dir / a["file"].get<std::string>()).string()) != a["sha256"].get<std::string>()) ++bad_hash;
    };

    twice("solve", [](const std::string& out) {
        cli::SolveOptions o;
        o.config = testing::data_path("tiny.json");
        o.out = out;
        o.random_init = true;
        o.seed = 77;
        o.flow_full = true;
        o.dump_q = true;
        return cli::cmd_solve(o);
    });
    twice("constants", [](const std::string& out) {
        cli::ConstantsOptions o;
        o.config = testing::data_path("sis.json");
        o.out = out;
        return cli::cmd_constants(o);
    });
    const auto policy = (root / "solve" / "policy.csv").string();
    twice("simulate", [&](const std::string& out) {
        cli::SimulateOptions o;
        o.config = testing::data_path("tiny.json");
        o.out = out;
        o.policy_file = policy;
        o.N = {3, 10};
        o.episodes = 300;
        o.seed = 5;
        return cli::cmd_simulate(o);
    });
    return {mismatches == 0 && bad_hash == 0,
            fmt("solve, constants, simulate run twice each (%d runs, %zu files): %d differences, %d checksum mismatches",
                runs, files, mismatches, bad_hash)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "oracle equivalence", 10, oracle_equivalence},
        {2, "belief-map Lipschitz bound", 30, belief_lipschitz_check},
        {3, "Q bound and monotonicity in eta", 60, q_bound_monotone},
        {4, "contraction certificate", 300, contraction_certificate},
        {5, "exploitability convergence", 600, exploitability_convergence},
        {6, "SIS qualitative behaviour", 600, sis_qualitative},
        {7, "inverted rewards", 600, inverted_rewards},
        {8, "epsilon-Nash trend", 900, epsilon_nash},
        {9, "determinism", 60, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double own = seconds_since(t0);
        const double total = own + o.extra_seconds;
        const bool in_time = total < c.limit_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failed;
        std::printf("%s criterion %d (%s): %s [%.1f s incl. %.1f s of shared solves, limit %.0f s%s]\n",
                    pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), total, o.extra_seconds, c.limit_seconds,
                    in_time ? "" : ", EXCEEDED");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
