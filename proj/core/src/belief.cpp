#include "mfgdelay/belief.hpp"

#include <cmath>

namespace mfgdelay {

namespace {

constexpr double kNormTol = 1e-10;

void check_normalized(std::span<const double> v, const char* what) {
    double s = 0.0;
    for (double e : v) {
        if (e < 0.0) throw std::invalid_argument(std::string(what) + " has a negative entry");
        s += e;
    }
    if (std::abs(s - 1.0) > kNormTol) throw std::invalid_argument(std::string(what) + " is not normalized");
}

}  // namespace

const MeasureVector& LaggedMeasures::at(int k) const {
    if (!has(k)) throw std::invalid_argument("lag measure " + std::to_string(k) + " unavailable (population policy required)");
    return lag[static_cast<std::size_t>(k)];
}

std::vector<double> observable_marginal(const SpaceIndex& spaces, std::span<const double> nu) {
    std::vector<double> out(spaces.y_size(), 0.0);
    for (std::size_t w = 0; w < nu.size(); ++w)
        if (nu[w] != 0.0) out[spaces.project(w)] += nu[w];
    return out;
}

bool needs_lag0_joint(const ModelSpec& model) {
    if (model.interaction != Interaction::Joint) return false;
    if (model.dynamics->reward_reads_measure()) return true;
    return model.d_min() == 0 && model.dynamics->kernel_reads_measure();
}

std::vector<MeasureVector> kernel_measures(const ModelSpec& model, const LaggedMeasures& lagged) {
    std::vector<MeasureVector> mus(lagged.lag.size());
    for (std::size_t k = 0; k < lagged.lag.size(); ++k) {
        if (lagged.has(static_cast<int>(k))) mus[k] = lagged.lag[k];
        else if (!model.dynamics->kernel_reads_measure()) mus[k] = MeasureVector(static_cast<std::size_t>(model.measure_dim()), 0.0);
    }
    return mus;
}

LaggedMeasures belief_map(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu,
                          std::span<const double> pop_policy) {
    if (nu.size() != spaces.window_size()) throw std::invalid_argument("belief_map: window measure has wrong size");
    check_normalized(nu, "window measure");
    const bool joint = model.interaction == Interaction::Joint;
    const int d0 = spaces.d_max();
    const std::size_t nx = static_cast<std::size_t>(model.n_x());
    const std::size_t na = static_cast<std::size_t>(model.n_a());
    if (!pop_policy.empty() && pop_policy.size() != spaces.y_size() * static_cast<std::size_t>(spaces.n_u()))
        throw std::invalid_argument("belief_map: population policy slice has wrong size");

    const auto nu_y = observable_marginal(spaces, nu);
    std::vector<std::size_t> active;
    for (std::size_t y = 0; y < nu_y.size(); ++y)
        if (nu_y[y] > 0.0) active.push_back(y);
    std::vector<double> cond(active.size() * nx, 0.0);
    for (std::size_t k = 0; k < active.size(); ++k) cond[k * nx + static_cast<std::size_t>(spaces.y_state(active[k]))] = 1.0;

    LaggedMeasures out;
    out.lag.assign(static_cast<std::size_t>(d0 + 1), {});
    out.state.assign(static_cast<std::size_t>(d0 + 1), {});
    std::vector<double> rows(nx * na * nx);
    std::vector<double> nxt(nx);

    for (int lag = d0; lag >= 0; --lag) {
        if (lag < d0) {
            // Advance the propagated conditionals from lag+1 to lag.
            const auto& mu = out.at(lag + 1);
            for (std::size_t x = 0; x < nx; ++x)
                for (std::size_t a = 0; a < na; ++a)
                    model.dynamics->kernel(static_cast<int>(x), static_cast<int>(a), mu,
                                           std::span<double>(rows).subspan((x * na + a) * nx, nx));
            for (std::size_t k = 0; k < active.size(); ++k) {
                const std::size_t y = active[k];
                if (spaces.y_delay(y) <= lag) continue;
                const std::size_t a = static_cast<std::size_t>(spaces.y_action(y, lag + 1));
                std::fill(nxt.begin(), nxt.end(), 0.0);
                for (std::size_t x = 0; x < nx; ++x) {
                    const double c = cond[k * nx + x];
                    if (c == 0.0) continue;
                    for (std::size_t xn = 0; xn < nx; ++xn) nxt[xn] += c * rows[(x * na + a) * nx + xn];
                }
                std::copy(nxt.begin(), nxt.end(), cond.begin() + static_cast<std::ptrdiff_t>(k * nx));
            }
        }

        std::vector<double> st(nx, 0.0);
        std::vector<double> jt(joint ? nx * na : 0, 0.0);
        if (lag >= 1) {
            // Recorded part: windows already observed at this lag.
            for (int d = spaces.d_min(); d <= std::min(lag, d0); ++d) {
                const std::size_t off = spaces.w_offset(d);
                const std::size_t len = spaces.w_block(d);
                for (std::size_t w = off; w < off + len; ++w) {
                    const double m = nu[w];
                    if (m == 0.0) continue;
                    const std::size_t x = static_cast<std::size_t>(spaces.w_state(w, lag));
                    st[x] += m;
                    if (joint) jt[x * na + static_cast<std::size_t>(spaces.w_action(w, lag))] += m;
                }
            }
            // Propagated part.
            for (std::size_t k = 0; k < active.size(); ++k) {
                const std::size_t y = active[k];
                if (spaces.y_delay(y) <= lag) continue;
                const std::size_t a = static_cast<std::size_t>(spaces.y_action(y, lag));
                for (std::size_t x = 0; x < nx; ++x) {
                    const double m = nu_y[y] * cond[k * nx + x];
                    st[x] += m;
                    if (joint) jt[x * na + a] += m;
                }
            }
            out.state[static_cast<std::size_t>(lag)] = st;
            out.lag[static_cast<std::size_t>(lag)] = joint ? jt : st;
        } else {
            const bool with_joint = joint && !pop_policy.empty();
            const std::size_t nu_ctrl = static_cast<std::size_t>(spaces.n_u());
            for (std::size_t k = 0; k < active.size(); ++k) {
                const std::size_t y = active[k];
                std::vector<double> pa;
                if (with_joint) {
                    pa.assign(na, 0.0);
                    for (std::size_t u = 0; u < nu_ctrl; ++u)
                        pa[static_cast<std::size_t>(spaces.control(static_cast<int>(u)).action)] += pop_policy[y * nu_ctrl + u];
                }
                for (std::size_t x = 0; x < nx; ++x) {
                    const double m = nu_y[y] * cond[k * nx + x];
                    st[x] += m;
                    if (with_joint)
                        for (std::size_t a = 0; a < na; ++a) jt[x * na + a] += m * pa[a];
                }
            }
            out.state[0] = st;
            if (!joint) out.lag[0] = st;
            else if (with_joint) out.lag[0] = jt;
        }
    }
    return out;
}

Distribution initial_underlying(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0) {
    if (nu0.size() != spaces.window_size()) throw std::invalid_argument("initial measure has wrong size");
    const auto support = support_table(model);
    for (std::size_t w = 0; w < nu0.size(); ++w)
        if (nu0[w] > 0.0 && !consistency_check(spaces, support, w))
            throw std::invalid_argument("initial measure charges an inconsistent window (index " + std::to_string(w) + ")");
    return belief_map(model, spaces, nu0).state[0];
}

}  // namespace mfgdelay
