#include "mfgdelay/dp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace mfgdelay {

TimeTable::TimeTable(int T, std::size_t n_y, int n_u, double fill)
    : T_(T), n_y_(n_y), n_u_(n_u), v_(static_cast<std::size_t>(T + 1) * n_y * static_cast<std::size_t>(n_u), fill) {}

std::span<double> TimeTable::row(int t, std::size_t y) {
    return std::span<double>(v_).subspan((static_cast<std::size_t>(t) * n_y_ + y) * static_cast<std::size_t>(n_u_),
                                         static_cast<std::size_t>(n_u_));
}

std::span<const double> TimeTable::row(int t, std::size_t y) const {
    return std::span<const double>(v_).subspan((static_cast<std::size_t>(t) * n_y_ + y) * static_cast<std::size_t>(n_u_),
                                               static_cast<std::size_t>(n_u_));
}

std::span<double> TimeTable::slice(int t) {
    const std::size_t len = n_y_ * static_cast<std::size_t>(n_u_);
    return std::span<double>(v_).subspan(static_cast<std::size_t>(t) * len, len);
}

std::span<const double> TimeTable::slice(int t) const {
    const std::size_t len = n_y_ * static_cast<std::size_t>(n_u_);
    return std::span<const double>(v_).subspan(static_cast<std::size_t>(t) * len, len);
}

Policy Policy::uniform(int T, std::size_t n_y, int n_u) { return Policy(T, n_y, n_u, 1.0 / n_u); }

void Policy::check_rows(double tol) const {
    for (int t = 0; t <= horizon(); ++t)
        for (std::size_t y = 0; y < n_y(); ++y) {
            double s = 0.0;
            for (double p : row(t, y)) {
                if (!(p >= 0.0)) throw InvariantError("policy row has a negative or NaN entry");
                s += p;
            }
            if (std::abs(s - 1.0) > tol) {
                std::ostringstream msg;
                msg << "policy row (t=" << t << ", y=" << y << ") sums to " << s;
                throw InvariantError(msg.str());
            }
        }
}

void Policy::check_full_support() const {
    for (double p : values())
        if (!(p > 0.0)) throw std::invalid_argument("reference policy must have full support on every row");
}

std::vector<LaggedMeasures> flow_lags(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow,
                                      const Policy* pop) {
    const bool want_joint = pop != nullptr && needs_lag0_joint(model);
    std::vector<LaggedMeasures> out;
    out.reserve(flow.slices.size());
    for (int t = 0; t <= flow.horizon(); ++t) {
        const auto slice = want_joint ? pop->slice(t) : std::span<const double>{};
        out.push_back(belief_map(model, spaces, flow[t], slice));
    }
    return out;
}

namespace {

MeasureVector reward_measure(const ModelSpec& model, const LaggedMeasures& lagged) {
    if (lagged.has(0)) return lagged.lag[0];
    if (!model.dynamics->reward_reads_measure()) return MeasureVector(static_cast<std::size_t>(model.measure_dim()), 0.0);
    throw std::invalid_argument("reward reads the current joint measure, which needs a population policy");
}

}  // namespace

AugmentedSlice build_slice(const ModelSpec& model, const SpaceIndex& spaces, const LaggedMeasures& lagged) {
    const auto mus = kernel_measures(model, lagged);
    const KernelTables tables(model, mus);
    const auto mu0 = reward_measure(model, lagged);
    const int nx = model.n_x();
    const int na = model.n_a();
    const int n_u = spaces.n_u();
    std::vector<double> r_xa(static_cast<std::size_t>(nx * na));
    for (int x = 0; x < nx; ++x)
        for (int a = 0; a < na; ++a) r_xa[static_cast<std::size_t>(x * na + a)] = model.dynamics->reward(x, a, mu0);

    AugmentedSlice s;
    const std::size_t n_y = spaces.y_size();
    s.reward.resize(n_y * static_cast<std::size_t>(n_u));
    s.begin.reserve(n_y * static_cast<std::size_t>(n_u) + 1);
    std::vector<double> cur(static_cast<std::size_t>(nx));
    for (std::size_t y = 0; y < n_y; ++y) {
        current_state(spaces, y, tables, cur);
        for (int u = 0; u < n_u; ++u) {
            const Control c = spaces.control(u);
            double r = 0.0;
            for (int x = 0; x < nx; ++x) r += cur[static_cast<std::size_t>(x)] * r_xa[static_cast<std::size_t>(x * na + c.action)];
            s.reward[y * static_cast<std::size_t>(n_u) + static_cast<std::size_t>(u)] =
                r - model.costs[static_cast<std::size_t>(c.intervention)];
            s.begin.push_back(s.trans.size());
            augmented_kernel(spaces, y, c, tables, s.trans);
        }
    }
    s.begin.push_back(s.trans.size());
    return s;
}

AugmentedMdp build_mdp(const ModelSpec& model, const SpaceIndex& spaces, const std::vector<LaggedMeasures>& lags) {
    AugmentedMdp mdp;
    mdp.gamma = model.gamma;
    mdp.n_y = spaces.y_size();
    mdp.n_u = spaces.n_u();
    mdp.slices.reserve(lags.size());
    for (const auto& l : lags) mdp.slices.push_back(build_slice(model, spaces, l));
    return mdp;
}

double augmented_reward(const ModelSpec& model, const SpaceIndex& spaces, const AugmentedState& y, Control u,
                        const LaggedMeasures& lagged) {
    const auto mus = kernel_measures(model, lagged);
    const KernelTables tables(model, mus);
    const auto mu0 = reward_measure(model, lagged);
    std::vector<double> cur(static_cast<std::size_t>(model.n_x()));
    current_state(spaces, spaces.encode(y), tables, cur);
    double r = 0.0;
    for (int x = 0; x < model.n_x(); ++x) r += cur[static_cast<std::size_t>(x)] * model.dynamics->reward(x, u.action, mu0);
    return r - model.costs[static_cast<std::size_t>(u.intervention)];
}

double soft_value(std::span<const double> q_row, std::span<const double> ref_row, double eta) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < q_row.size(); ++u)
        if (ref_row[u] > 0.0) m = std::max(m, q_row[u]);
    double s = 0.0;
    for (std::size_t u = 0; u < q_row.size(); ++u)
        if (ref_row[u] > 0.0) s += ref_row[u] * std::exp((q_row[u] - m) / eta);
    return m + eta * std::log(s);
}

namespace {

template <class Aggregate>
QTable backward(const AugmentedMdp& mdp, Aggregate&& aggregate) {
    const int T = mdp.horizon();
    const std::size_t n_u = static_cast<std::size_t>(mdp.n_u);
    QTable q(T, mdp.n_y, mdp.n_u);
    std::vector<double> v_next(mdp.n_y), v_cur(mdp.n_y);
    for (int t = T; t >= 0; --t) {
        const auto& s = mdp.slices[static_cast<std::size_t>(t)];
        for (std::size_t y = 0; y < mdp.n_y; ++y) {
            auto row = q.row(t, y);
            for (std::size_t u = 0; u < n_u; ++u) {
                const std::size_t k = y * n_u + u;
                double cont = 0.0;
                if (t < T)
                    for (std::size_t e = s.begin[k]; e < s.begin[k + 1]; ++e) cont += s.trans[e].prob * v_next[s.trans[e].index];
                row[u] = s.reward[k] + mdp.gamma * cont;
            }
            v_cur[y] = aggregate(t, y, std::span<const double>(row.data(), row.size()));
        }
        v_next.swap(v_cur);
    }
    return q;
}

}  // namespace

QTable backward_q_regularized(const AugmentedMdp& mdp, double eta, const Policy& q_ref) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (q_ref.horizon() != mdp.horizon() || q_ref.n_y() != mdp.n_y || q_ref.n_u() != mdp.n_u)
        throw std::invalid_argument("reference policy shape does not match the augmented MDP");
    q_ref.check_full_support();
    return backward(mdp, [&](int t, std::size_t y, std::span<const double> row) {
        return soft_value(row, q_ref.row(t, y), eta);
    });
}

QTable backward_q_greedy(const AugmentedMdp& mdp) {
    return backward(mdp, [](int, std::size_t, std::span<const double> row) {
        return *std::max_element(row.begin(), row.end());
    });
}

QTable backward_q_regularized(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow, double eta,
                              const Policy& q_ref, const Policy* pop) {
    return backward_q_regularized(build_mdp(model, spaces, flow_lags(model, spaces, flow, pop)), eta, q_ref);
}

QTable backward_q_greedy(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow, const Policy* pop) {
    return backward_q_greedy(build_mdp(model, spaces, flow_lags(model, spaces, flow, pop)));
}

Policy softmax_policy(const QTable& q, double eta, const Policy& q_ref) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    q_ref.check_full_support();
    Policy pi(q.horizon(), q.n_y(), q.n_u());
    for (int t = 0; t <= q.horizon(); ++t)
        for (std::size_t y = 0; y < q.n_y(); ++y) {
            const auto qr = q.row(t, y);
            const auto ref = q_ref.row(t, y);
            auto out = pi.row(t, y);
            const double m = *std::max_element(qr.begin(), qr.end());
            double s = 0.0;
            for (std::size_t u = 0; u < qr.size(); ++u) s += (out[u] = ref[u] * std::exp((qr[u] - m) / eta));
            for (auto& p : out) p /= s;
        }
    return pi;
}

Policy greedy_policy(const QTable& q) {
    Policy pi(q.horizon(), q.n_y(), q.n_u());
    for (int t = 0; t <= q.horizon(); ++t)
        for (std::size_t y = 0; y < q.n_y(); ++y) {
            const auto qr = q.row(t, y);
            pi.row(t, y)[static_cast<std::size_t>(std::max_element(qr.begin(), qr.end()) - qr.begin())] = 1.0;
        }
    return pi;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] <= 0.0) continue;
        if (q[k] <= 0.0) return std::numeric_limits<double>::infinity();
        s += p[k] * std::log(p[k] / q[k]);
    }
    return s;
}

std::vector<double> policy_values(const AugmentedMdp& mdp, const Policy& pi, double eta, const Policy& q_ref) {
    if (eta < 0.0) throw std::invalid_argument("eta must be non-negative");
    if (pi.horizon() != mdp.horizon() || pi.n_y() != mdp.n_y || pi.n_u() != mdp.n_u)
        throw std::invalid_argument("policy shape does not match the augmented MDP");
    const int T = mdp.horizon();
    const std::size_t n_u = static_cast<std::size_t>(mdp.n_u);
    std::vector<double> v_next(mdp.n_y, 0.0), v_cur(mdp.n_y);
    for (int t = T; t >= 0; --t) {
        const auto& s = mdp.slices[static_cast<std::size_t>(t)];
        for (std::size_t y = 0; y < mdp.n_y; ++y) {
            const auto p = pi.row(t, y);
            double v = 0.0;
            for (std::size_t u = 0; u < n_u; ++u) {
                if (p[u] == 0.0) continue;
                const std::size_t k = y * n_u + u;
                double cont = 0.0;
                if (t < T)
                    for (std::size_t e = s.begin[k]; e < s.begin[k + 1]; ++e) cont += s.trans[e].prob * v_next[s.trans[e].index];
                v += p[u] * (s.reward[k] + mdp.gamma * cont);
            }
            if (eta > 0.0) {
                const double kl = kl_divergence(p, q_ref.row(t, y));
                if (!std::isfinite(kl)) throw std::invalid_argument("policy charges a control outside the reference support");
                v -= eta * kl;
            }
            v_cur[y] = v;
        }
        v_next.swap(v_cur);
    }
    return v_next;
}

double policy_value(const AugmentedMdp& mdp, const Policy& pi, std::span<const double> nu0_y, double eta,
                    const Policy& q_ref) {
    const auto v = policy_values(mdp, pi, eta, q_ref);
    double s = 0.0;
    for (std::size_t y = 0; y < v.size(); ++y) s += nu0_y[y] * v[y];
    return s;
}

double best_response_value(const AugmentedMdp& mdp, std::span<const double> nu0_y) {
    const auto q = backward_q_greedy(mdp);
    double s = 0.0;
    for (std::size_t y = 0; y < mdp.n_y; ++y) {
        if (nu0_y[y] == 0.0) continue;
        const auto r = q.row(0, y);
        s += nu0_y[y] * *std::max_element(r.begin(), r.end());
    }
    return s;
}

void write_table_csv(const TimeTable& table, std::ostream& os) {
    os << "t,y_index,u_index,value\n";
    char buf[64];
    for (int t = 0; t <= table.horizon(); ++t)
        for (std::size_t y = 0; y < table.n_y(); ++y) {
            const auto r = table.row(t, y);
            for (std::size_t u = 0; u < r.size(); ++u) {
                std::snprintf(buf, sizeof buf, "%.17g", r[u]);
                os << t << ',' << y << ',' << u << ',' << buf << '\n';
            }
        }
}

TimeTable read_table_csv(std::istream& is, int T, std::size_t n_y, int n_u) {
    TimeTable table(T, n_y, n_u, 0.0);
    std::vector<char> seen(table.values().size(), 0);
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,y_index,u_index,value", 0) != 0)
        throw ConfigError("table file: missing header 't,y_index,u_index,value'");
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        long long t = 0, y = 0, u = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%lld,%lld,%lld,%lf", &t, &y, &u, &v) != 4)
            throw ConfigError("table file: malformed line " + std::to_string(lineno));
        if (t < 0 || t > T || y < 0 || static_cast<std::size_t>(y) >= n_y || u < 0 || u >= n_u)
            throw ConfigError("table file: index out of range on line " + std::to_string(lineno) +
                              " (policy does not match the model)");
        const std::size_t k = (static_cast<std::size_t>(t) * n_y + static_cast<std::size_t>(y)) * static_cast<std::size_t>(n_u) +
                              static_cast<std::size_t>(u);
        table.values()[k] = v;
        seen[k] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw ConfigError("table file: incomplete (policy does not match the model)");
    return table;
}

}  // namespace mfgdelay
