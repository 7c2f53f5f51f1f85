#include "mfgdelay/fixpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace mfgdelay {

namespace {

constexpr double kNormTol = 1e-10;
constexpr double kReferenceFloor = 1e-300;
constexpr double kStepFloor = 1e-12;
constexpr double kStallRatio = 0.999;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_slice(std::span<const double> v, int t) {
    double s = 0.0;
    for (double e : v) s += e;
    if (!(std::abs(s - 1.0) <= kNormTol)) {
        std::ostringstream msg;
        msg << "flow slice t=" << t << " sums to " << s;
        throw InvariantError(msg.str());
    }
}

}  // namespace

std::vector<double> initial_measure(const ModelSpec& model, const SpaceIndex& spaces, const InitialSpec& init) {
    std::vector<double> nu(spaces.window_size(), 0.0);
    const int d0 = spaces.d_max();
    if (init.kind == InitialSpec::Kind::Product) {
        Distribution xm = init.x_marginal;
        if (xm.empty()) xm.assign(static_cast<std::size_t>(model.n_x()), 1.0 / model.n_x());
        if (static_cast<int>(xm.size()) != model.n_x()) throw ConfigError("initial: x_marginal must cover every state");
        if (init.action_fill < 0 || init.action_fill >= model.n_a()) throw ConfigError("initial: action_fill out of range");
        double s = 0.0;
        for (double p : xm) {
            if (p < 0.0) throw ConfigError("initial: x_marginal has a negative entry");
            s += p;
        }
        if (std::abs(s - 1.0) > kNormTol) throw ConfigError("initial: x_marginal does not sum to 1");
        for (int x = 0; x < model.n_x(); ++x) {
            ExtendedWindow w{d0, {x}, std::vector<int>(static_cast<std::size_t>(d0), init.action_fill)};
            nu[spaces.encode(w)] += xm[static_cast<std::size_t>(x)];
        }
        return nu;
    }
    if (init.atoms.empty()) throw ConfigError("initial: atoms list is empty");
    const auto support = support_table(model);
    double s = 0.0;
    for (std::size_t k = 0; k < init.atoms.size(); ++k) {
        const auto& [w, p] = init.atoms[k];
        if (!consistency_check(model, spaces, w))
            throw ConfigError("initial: atom " + std::to_string(k) + " is not a consistent window");
        if (p < 0.0) throw ConfigError("initial: atom " + std::to_string(k) + " has negative weight");
        nu[spaces.encode(w)] += p;
        s += p;
    }
    if (std::abs(s - 1.0) > kNormTol) throw ConfigError("initial: atom weights do not sum to 1");
    return nu;
}

std::vector<std::vector<double>> aggregate_series(const ModelSpec& model, const SpaceIndex& spaces,
                                                  const Policy& pi, const MeasureFlow& flow,
                                                  const std::vector<Aggregate>& aggregates) {
    const std::size_t nx = static_cast<std::size_t>(model.n_x());
    const int n_u = spaces.n_u();
    auto selected = [](const std::vector<char>& mask, int k) {
        return mask.empty() || mask[static_cast<std::size_t>(k)] != 0;
    };
    std::vector<std::vector<double>> out(flow.slices.size(), std::vector<double>(aggregates.size(), 0.0));
    std::vector<double> cur(nx);
    for (int t = 0; t <= flow.horizon(); ++t) {
        const auto lagged = belief_map(model, spaces, flow[t]);
        const KernelTables tables(model, kernel_measures(model, lagged));
        const auto nu_y = observable_marginal(spaces, flow[t]);
        for (std::size_t y = 0; y < nu_y.size(); ++y) {
            if (nu_y[y] == 0.0) continue;
            current_state(spaces, y, tables, cur);
            const auto row = pi.row(t, y);
            for (std::size_t k = 0; k < aggregates.size(); ++k) {
                const auto& agg = aggregates[k];
                double px = 0.0;
                for (std::size_t x = 0; x < nx; ++x)
                    if (selected(agg.states, static_cast<int>(x))) px += cur[x];
                double pu = 0.0;
                for (int u = 0; u < n_u; ++u) {
                    const Control c = spaces.control(u);
                    if (selected(agg.actions, c.action) && selected(agg.interventions, c.intervention))
                        pu += row[static_cast<std::size_t>(u)];
                }
                out[static_cast<std::size_t>(t)][k] += nu_y[y] * px * pu;
            }
        }
    }
    return out;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
    return 0.5 * s;
}

double delta_inf(const MeasureFlow& a, const MeasureFlow& b, double zeta) {
    if (!(zeta > 1.0)) throw std::invalid_argument("zeta must exceed 1");
    if (a.slices.size() != b.slices.size()) throw std::invalid_argument("delta_inf: horizon mismatch");
    double s = 0.0;
    double w = 1.0;
    for (int t = 0; t <= a.horizon(); ++t) {
        s += w * tv_distance(a[t], b[t]);
        w /= zeta;
    }
    return s;
}

double delta_policy(const Policy& a, const Policy& b, double zeta) {
    if (!(zeta > 1.0)) throw std::invalid_argument("zeta must exceed 1");
    if (a.horizon() != b.horizon() || a.n_y() != b.n_y() || a.n_u() != b.n_u())
        throw std::invalid_argument("delta_policy: shape mismatch");
    double s = 0.0;
    double w = 1.0;
    for (int t = 0; t <= a.horizon(); ++t) {
        double m = 0.0;
        for (std::size_t y = 0; y < a.n_y(); ++y) m = std::max(m, tv_distance(a.row(t, y), b.row(t, y)));
        s += w * m;
        w /= zeta;
    }
    return s;
}

MeasureFlow propagate(const ModelSpec& model, const SpaceIndex& spaces, const Policy& pi,
                      std::span<const double> nu0) {
    if (nu0.size() != spaces.window_size()) throw std::invalid_argument("propagate: initial measure has wrong size");
    if (pi.n_y() != spaces.y_size() || pi.n_u() != spaces.n_u())
        throw std::invalid_argument("propagate: policy does not match the model spaces");
    const int T = pi.horizon();
    const bool pop = needs_lag0_joint(model);
    const int n_u = spaces.n_u();
    MeasureFlow flow;
    flow.slices.reserve(static_cast<std::size_t>(T + 1));
    flow.slices.emplace_back(nu0.begin(), nu0.end());
    check_slice(flow[0], 0);
    SparseDist buf;
    for (int t = 0; t < T; ++t) {
        const auto& cur = flow[t];
        const auto lagged = belief_map(model, spaces, cur, pop ? pi.slice(t) : std::span<const double>{});
        const KernelTables tables(model, kernel_measures(model, lagged));
        std::vector<double> next(spaces.window_size(), 0.0);
        for (std::size_t w = 0; w < cur.size(); ++w) {
            const double m = cur[w];
            if (m == 0.0) continue;
            const auto row = pi.row(t, spaces.project(w));
            for (int u = 0; u < n_u; ++u) {
                const double p = row[static_cast<std::size_t>(u)];
                if (p == 0.0) continue;
                buf.clear();
                window_kernel(spaces, w, spaces.control(u), tables, buf);
                for (const auto& e : buf) next[e.index] += m * p * e.prob;
            }
        }
        check_slice(next, t + 1);
        flow.slices.push_back(std::move(next));
    }
    return flow;
}

StepResult fixed_point_step(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow, double eta,
                            const Policy& q_ref, const Policy* pop) {
    const auto mdp = build_mdp(model, spaces, flow_lags(model, spaces, flow, pop));
    auto pi = softmax_policy(backward_q_regularized(mdp, eta, q_ref), eta, q_ref);
    auto next = propagate(model, spaces, pi, flow[0]);
    return {std::move(pi), std::move(next)};
}

Exploitability exploitability(const AugmentedMdp& mdp, const Policy& pi, std::span<const double> nu0_y) {
    Exploitability e;
    e.best_value = best_response_value(mdp, nu0_y);
    e.policy_value = policy_value(mdp, pi, nu0_y, 0.0, pi);
    e.absolute = e.best_value - e.policy_value;
    return e;
}

Exploitability exploitability(const ModelSpec& model, const SpaceIndex& spaces, const Policy& pi,
                              std::span<const double> nu0) {
    const auto flow = propagate(model, spaces, pi, nu0);
    const auto mdp = build_mdp(model, spaces, flow_lags(model, spaces, flow, &pi));
    return exploitability(mdp, pi, observable_marginal(spaces, nu0));
}

Policy random_policy(int T, std::size_t n_y, int n_u, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Policy pi(T, n_y, n_u);
    for (int t = 0; t <= T; ++t)
        for (std::size_t y = 0; y < n_y; ++y) {
            auto row = pi.row(t, y);
            double s = 0.0;
            for (auto& p : row) {
                const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
                s += (p = -std::log(u));
            }
            for (auto& p : row) p /= s;
        }
    return pi;
}

Policy initial_policy(const ModelSpec& model, const SpaceIndex& spaces, const SolveConfig& cfg) {
    if (cfg.random_init) return random_policy(model.T(), spaces.y_size(), spaces.n_u(), cfg.seed);
    return Policy::uniform(model.T(), spaces.y_size(), spaces.n_u());
}

namespace {

struct Iterate {
    Policy pi;
    MeasureFlow flow;
    AugmentedMdp mdp;
};

Iterate make_iterate(const ModelSpec& model, const SpaceIndex& spaces, Policy pi, std::span<const double> nu0) {
    Iterate it;
    it.flow = propagate(model, spaces, pi, nu0);
    it.mdp = build_mdp(model, spaces, flow_lags(model, spaces, it.flow, &pi));
    it.pi = std::move(pi);
    return it;
}

Policy floored(const Policy& pi) {
    Policy q = pi;
    for (int t = 0; t <= q.horizon(); ++t)
        for (std::size_t y = 0; y < q.n_y(); ++y) {
            auto row = q.row(t, y);
            double s = 0.0;
            for (auto& p : row) s += (p = std::max(p, kReferenceFloor));
            for (auto& p : row) p /= s;
        }
    return q;
}

SolveReport run_solver(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                       const SolveConfig& cfg, bool descent) {
    if (!(cfg.eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (cfg.max_outer < 1) throw std::invalid_argument("iteration cap must be at least 1");
    if (descent && cfg.inner_iters < 1) throw std::invalid_argument("inner iteration count must be at least 1");
    if (!(cfg.eta_growth > 0.0)) throw std::invalid_argument("eta growth factor must be positive");
    const auto start = std::chrono::steady_clock::now();

    SolveReport rep;
    rep.config = cfg;
    rep.config.algorithm = descent ? Algorithm::PriorDescent : Algorithm::FixedPrior;
    rep.zeta = cfg.zeta ? *cfg.zeta : contraction_constants(model).zeta;
    if (!(rep.zeta > 1.0)) throw std::invalid_argument("zeta must exceed 1");

    const auto nu0_y = observable_marginal(spaces, nu0);
    Policy q = Policy::uniform(model.T(), spaces.y_size(), spaces.n_u());
    Iterate cur = make_iterate(model, spaces, initial_policy(model, spaces, cfg), nu0);
    const double e0 = exploitability(cur.mdp, cur.pi, nu0_y).absolute;
    auto relative = [e0](double a) { return e0 > 0.0 ? a / e0 : 0.0; };
    rep.trace.push_back({0, 0, cfg.eta, e0, relative(e0), kNaN, kNaN});

    double eta = cfg.eta;
    double prev_step = kNaN;
    int growth = 0;
    // maxima of consecutive blocks of steps; an oscillation never grows for long but never contracts either
    double block_max = 0.0, last_block = kNaN;
    int block_len = 0, flat_blocks = 0;
    int iter = 0;
    const int inner = descent ? cfg.inner_iters : 1;
    for (int outer = 1; outer <= cfg.max_outer && !rep.converged; ++outer) {
        for (int k = 0; k < inner; ++k) {
            auto pi = softmax_policy(backward_q_regularized(cur.mdp, eta, q), eta, q);
            Iterate nxt = make_iterate(model, spaces, std::move(pi), nu0);
            const double step = delta_inf(nxt.flow, cur.flow, rep.zeta);
            const double ratio = prev_step > 0.0 ? step / prev_step : kNaN;
            // stalled or growing steps above round-off; a new reference restarts the count
            const bool fresh = descent && k == 0;
            const bool stalled = prev_step == prev_step && step > kStepFloor && step >= kStallRatio * prev_step;
            growth = (!fresh && stalled) ? growth + 1 : 0;
            if (growth >= cfg.divergence_window) rep.diverged = true;
            if (fresh) {
                block_max = 0.0;
                last_block = kNaN;
                block_len = flat_blocks = 0;
            }
            block_max = std::max(block_max, step);
            if (++block_len == 4 * cfg.divergence_window) {
                const bool flat = last_block == last_block && block_max > kStepFloor && block_max >= kStallRatio * last_block;
                flat_blocks = flat ? flat_blocks + 1 : 0;
                if (flat_blocks >= 2) rep.diverged = true;
                last_block = block_max;
                block_max = 0.0;
                block_len = 0;
            }
            const double abs_e = exploitability(nxt.mdp, nxt.pi, nu0_y).absolute;
            rep.trace.push_back({++iter, outer, eta, abs_e, relative(abs_e), step, ratio});
            cur = std::move(nxt);
            prev_step = step;
            if (!descent && (relative(abs_e) < cfg.tol || (cfg.tol_step > 0.0 && step < cfg.tol_step))) {
                rep.converged = true;
                break;
            }
        }
        if (outer == cfg.max_outer || rep.converged || descent) {
            rep.reference = q;
            rep.final_eta = eta;
        }
        if (descent) {
            q = floored(cur.pi);
            if (rep.trace.back().relative < cfg.tol) rep.converged = true;
            eta *= cfg.eta_growth;
        }
    }
    rep.policy = std::move(cur.pi);
    rep.flow = std::move(cur.flow);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

}  // namespace

SolveReport solve_fixed_prior(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                              const SolveConfig& cfg) {
    return run_solver(model, spaces, nu0, cfg, false);
}

SolveReport prior_descent(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                          const SolveConfig& cfg) {
    return run_solver(model, spaces, nu0, cfg, true);
}

SolveReport solve(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                  const SolveConfig& cfg) {
    return cfg.algorithm == Algorithm::PriorDescent ? prior_descent(model, spaces, nu0, cfg)
                                                    : solve_fixed_prior(model, spaces, nu0, cfg);
}

}  // namespace mfgdelay
