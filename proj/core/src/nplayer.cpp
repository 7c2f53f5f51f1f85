#include "mfgdelay/nplayer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "mfgdelay/belief.hpp"
#include "mfgdelay/fixpoint.hpp"

namespace mfgdelay {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

int sample(std::span<const double> probs, double u) {
    double c = 0.0;
    int last = -1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (probs[k] <= 0.0) continue;
        c += probs[k];
        last = static_cast<int>(k);
        if (u < c) return last;
    }
    if (last < 0) throw InvariantError("sampling from an all-zero distribution");
    return last;  // rounding slack
}

double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += v[k];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

double mean(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()) / static_cast<double>(v.size()); }

double standard_error(const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    std::vector<double> sq(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) sq[k] = (v[k] - m) * (v[k] - m);
    const double var = pairwise_sum(sq.data(), sq.size()) / static_cast<double>(v.size() - 1);
    return std::sqrt(var / static_cast<double>(v.size()));
}

struct Agent {
    int d = 0;
    std::vector<int> xs;  ///< state at lag k
    std::vector<int> as;  ///< action at lag k, slot 0 unused
    double ret = 0.0;
};

void check_inputs(const ModelSpec& model, const SpaceIndex& spaces, const EpisodeConfig& cfg) {
    if (cfg.N < 1) throw std::invalid_argument("N must be >= 1");
    if (cfg.episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (!cfg.deviator_policy || !cfg.crowd_policy) throw std::invalid_argument("both policies must be set");
    for (const Policy* p : {cfg.deviator_policy, cfg.crowd_policy})
        if (p->n_y() != spaces.y_size() || p->n_u() != spaces.n_u() || p->horizon() != model.T())
            throw std::invalid_argument("policy does not match the model");
    if (cfg.nu0.size() != spaces.window_size()) throw std::invalid_argument("initial measure does not match the model");
}

/// Initial windows and hidden states are shared by both runs of an episode.
std::vector<Agent> initial_agents(const ModelSpec& model, const SpaceIndex& spaces, const EpisodeConfig& cfg,
                                  const std::vector<AgentStream>& streams, const KernelTables& tables) {
    const int d0 = spaces.d_max();
    std::vector<Agent> agents(static_cast<std::size_t>(cfg.N));
    for (int n = 0; n < cfg.N; ++n) {
        auto& ag = agents[static_cast<std::size_t>(n)];
        const auto& rs = streams[static_cast<std::size_t>(n)];
        const auto w = static_cast<std::size_t>(sample(cfg.nu0, rs.uniform(0, AgentStream::InitWindow)));
        ag.d = spaces.w_delay(w);
        ag.xs.assign(static_cast<std::size_t>(d0 + 1), 0);
        ag.as.assign(static_cast<std::size_t>(d0 + 1), 0);
        for (int k = ag.d; k <= d0; ++k) ag.xs[static_cast<std::size_t>(k)] = spaces.w_state(w, k);
        for (int k = 1; k <= d0; ++k) ag.as[static_cast<std::size_t>(k)] = spaces.w_action(w, k);
        for (int k = ag.d; k >= 1; --k) {
            const auto row = tables.row(k, ag.xs[static_cast<std::size_t>(k)], ag.as[static_cast<std::size_t>(k)]);
            ag.xs[static_cast<std::size_t>(k - 1)] =
                sample(row, rs.uniform(static_cast<std::uint32_t>(k), AgentStream::InitHidden));
        }
    }
    (void)model;
    return agents;
}

void run(const ModelSpec& model, const SpaceIndex& spaces, std::vector<Agent>& agents, const Policy& crowd,
         const Policy* deviator, const std::vector<AgentStream>& streams) {
    const int T = model.T();
    const int d0 = spaces.d_max();
    const int n_x = model.n_x();
    const int n_a = model.n_a();
    const int n_i = model.n_i();
    const std::size_t N = agents.size();
    std::vector<int> xs(N), acts(N), ints(N);
    std::vector<double> rows(static_cast<std::size_t>(n_x * n_a * n_x));
    double disc = 1.0;
    for (int t = 0; t <= T; ++t) {
        const auto step = static_cast<std::uint32_t>(t);
        for (std::size_t n = 0; n < N; ++n) {
            const auto& ag = agents[n];
            std::uint64_t tail = 0;
            for (int k = ag.d; k >= 1; --k) tail = tail * static_cast<std::uint64_t>(n_a) + static_cast<std::uint64_t>(ag.as[static_cast<std::size_t>(k)]);
            const std::size_t y = spaces.y_index(ag.d, ag.xs[static_cast<std::size_t>(ag.d)], tail);
            const Policy& pi = (n == 0 && deviator) ? *deviator : crowd;
            const int u = sample(pi.row(t, y), streams[n].uniform(step, AgentStream::Control));
            acts[n] = u / n_i;
            ints[n] = u % n_i;
            xs[n] = ag.xs[0];
        }
        const auto e = empirical_measure(model, xs, acts);
        for (std::size_t n = 0; n < N; ++n)
            agents[n].ret += disc * (eval_reward(model, xs[n], acts[n], e) - model.costs[static_cast<std::size_t>(ints[n])]);
        disc *= model.gamma;
        if (t == T) break;
        for (int x = 0; x < n_x; ++x)
            for (int a = 0; a < n_a; ++a) {
                const auto p = eval_kernel(model, x, a, e);
                std::copy(p.begin(), p.end(), rows.begin() + (x * n_a + a) * n_x);
            }
        for (std::size_t n = 0; n < N; ++n) {
            auto& ag = agents[n];
            const std::span<const double> row(rows.data() + (xs[n] * n_a + acts[n]) * n_x, static_cast<std::size_t>(n_x));
            const int next = sample(row, streams[n].uniform(step, AgentStream::Transition));
            for (int k = d0; k >= 1; --k) ag.xs[static_cast<std::size_t>(k)] = ag.xs[static_cast<std::size_t>(k - 1)];
            ag.xs[0] = next;
            for (int k = d0; k >= 2; --k) ag.as[static_cast<std::size_t>(k)] = ag.as[static_cast<std::size_t>(k - 1)];
            if (d0 >= 1) ag.as[1] = acts[n];
            ag.d = next_delay(model, ag.d, ints[n]);
        }
    }
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k[0] += kW0;
            k[1] += kW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c[0], hi0, lo0);
        mulhilo(kM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

double unit_double(std::uint32_t hi, std::uint32_t lo) {
    // 52 bits keep the midpoint of the top cell below 1
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

AgentStream::AgentStream(std::uint64_t seed, std::uint64_t episode, std::uint32_t agent)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      agent_(agent),
      episode_(static_cast<std::uint32_t>(episode)) {
    if (episode >> 32) throw std::invalid_argument("episode index exceeds 32 bits");
}

double AgentStream::uniform(std::uint32_t step, Purpose purpose) const {
    const auto out = Philox4x32::block({step, agent_, episode_, static_cast<std::uint32_t>(purpose)}, key_);
    return unit_double(out[0], out[1]);
}

MeasureVector empirical_measure(const ModelSpec& model, std::span<const int> states, std::span<const int> actions) {
    MeasureVector e(static_cast<std::size_t>(model.measure_dim()), 0.0);
    if (states.empty()) throw std::invalid_argument("empirical measure of an empty population");
    const double w = 1.0 / static_cast<double>(states.size());
    const bool joint = model.interaction == Interaction::Joint;
    for (std::size_t n = 0; n < states.size(); ++n)
        e[static_cast<std::size_t>(joint ? states[n] * model.n_a() + actions[n] : states[n])] += w;
    return e;
}

EpisodeReturns simulate_episode(const ModelSpec& model, const SpaceIndex& spaces, const EpisodeConfig& cfg,
                                std::uint64_t episode) {
    check_inputs(model, spaces, cfg);
    std::vector<AgentStream> streams;
    streams.reserve(static_cast<std::size_t>(cfg.N));
    for (int n = 0; n < cfg.N; ++n) streams.emplace_back(cfg.seed, episode, static_cast<std::uint32_t>(n));
    const KernelTables tables(model, kernel_measures(model, belief_map(model, spaces, cfg.nu0)));

    auto baseline = initial_agents(model, spaces, cfg, streams, tables);
    auto deviation = baseline;
    run(model, spaces, baseline, *cfg.crowd_policy, nullptr, streams);
    run(model, spaces, deviation, *cfg.crowd_policy, cfg.deviator_policy, streams);

    std::vector<double> rets(baseline.size());
    for (std::size_t n = 0; n < baseline.size(); ++n) rets[n] = baseline[n].ret;
    return {mean(rets), baseline[0].ret, deviation[0].ret};
}

GapEstimate simulate_nplayer(const EpisodeConfig& cfg, const ModelSpec& model, const SpaceIndex& spaces) {
    check_inputs(model, spaces, cfg);
    const auto E = static_cast<std::size_t>(cfg.episodes);
    std::vector<EpisodeReturns> res(E);
    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, E));
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (std::size_t e; (e = next.fetch_add(1)) < E && !failed.load();) {
            try {
                res[e] = simulate_episode(model, spaces, cfg, e);
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (err) std::rethrow_exception(err);

    std::vector<double> crowd(E), dev(E), gap(E);
    for (std::size_t e = 0; e < E; ++e) {
        crowd[e] = res[e].crowd;
        dev[e] = res[e].deviator;
        gap[e] = res[e].deviator - res[e].own;
    }
    GapEstimate g;
    g.N = cfg.N;
    g.episodes = cfg.episodes;
    g.mean_crowd = mean(crowd);
    g.mean_deviator = mean(dev);
    g.gap = mean(gap);
    g.stderr_gap = standard_error(gap, g.gap);
    g.ci95 = 1.96 * g.stderr_gap;
    g.stderr_crowd = standard_error(crowd, g.mean_crowd);
    return g;
}

Policy build_deviator(const Policy& pi_star, const ModelSpec& model, const SpaceIndex& spaces,
                      std::span<const double> nu0) {
    if (pi_star.horizon() != model.T()) throw std::invalid_argument("policy horizon does not match the model");
    const auto flow = propagate(model, spaces, pi_star, nu0);
    return greedy_policy(backward_q_greedy(model, spaces, flow, &pi_star));
}

}  // namespace mfgdelay
