#include "mfgdelay/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace mfgdelay {

namespace {

constexpr double kRowTol = 1e-9;
constexpr double kRangeTol = 1e-12;
constexpr int kSamplingPoints = 1000;

double tv(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
    return 0.5 * s;
}

MeasureVector vertex(int dim, int m) {
    MeasureVector v(static_cast<std::size_t>(dim), 0.0);
    v[static_cast<std::size_t>(m)] = 1.0;
    return v;
}

std::vector<MeasureVector> random_measures(int dim, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> expo(1.0);
    std::vector<MeasureVector> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        MeasureVector v(static_cast<std::size_t>(dim));
        double s = 0.0;
        for (auto& e : v) {
            e = expo(rng);
            s += e;
        }
        for (auto& e : v) e /= s;
        out.push_back(std::move(v));
    }
    return out;
}

std::string pair_label(const ModelSpec& m, int x, int a) {
    return "(" + m.states[static_cast<std::size_t>(x)] + "," + m.actions[static_cast<std::size_t>(a)] + ")";
}

void check_labels(const std::vector<std::string>& labels, const char* what) {
    if (labels.empty()) throw ConfigError(std::string(what) + " must be non-empty");
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw ConfigError(std::string(what) + " contains an empty label");
        if (l.find(',') != std::string::npos)
            throw ConfigError(std::string(what) + " label '" + l + "' must not contain ','");
        if (!seen.insert(l).second) throw ConfigError(std::string(what) + " label '" + l + "' is duplicated");
    }
}

void check_affine_rows(const ModelSpec& model, const AffineDynamics& dyn) {
    const int nx = model.n_x();
    const int dim = model.measure_dim();
    for (int x = 0; x < nx; ++x) {
        for (int a = 0; a < model.n_a(); ++a) {
            double s = 0.0;
            for (int n = 0; n < nx; ++n) s += dyn.kernel_base(x, a, n);
            if (std::abs(s - 1.0) > kRowTol) {
                std::ostringstream msg;
                msg << "kernel row " << pair_label(model, x, a) << ": base sums to " << s << ", expected 1";
                throw ConfigError(msg.str());
            }
            for (int m = 0; m < dim; ++m) {
                double c = 0.0;
                for (int n = 0; n < nx; ++n) c += dyn.kernel_coef(x, a, m, n);
                if (std::abs(c) > kRowTol) {
                    std::ostringstream msg;
                    msg << "kernel row " << pair_label(model, x, a) << ": coefficient layer '"
                        << measure_label(model, m) << "' sums to " << c << ", expected 0";
                    throw ConfigError(msg.str());
                }
            }
        }
    }
}

void check_rows_at(const ModelSpec& model, const MeasureVector& mu, const std::string& where) {
    std::vector<double> row(static_cast<std::size_t>(model.n_x()));
    for (int x = 0; x < model.n_x(); ++x) {
        for (int a = 0; a < model.n_a(); ++a) {
            model.dynamics->kernel(x, a, mu, row);
            double s = 0.0;
            for (int n = 0; n < model.n_x(); ++n) {
                const double p = row[static_cast<std::size_t>(n)];
                if (!(p >= -kRangeTol && p <= 1.0 + kRangeTol)) {
                    std::ostringstream msg;
                    msg << "kernel entry out of [0,1] at " << pair_label(model, x, a) << ", " << where
                        << ", next state '" << model.states[static_cast<std::size_t>(n)] << "': " << p;
                    throw ConfigError(msg.str());
                }
                s += p;
            }
            if (std::abs(s - 1.0) > kRowTol) {
                std::ostringstream msg;
                msg << "kernel row " << pair_label(model, x, a) << " at " << where << " sums to " << s;
                throw ConfigError(msg.str());
            }
            const double r = model.dynamics->reward(x, a, mu);
            if (!std::isfinite(r)) throw ConfigError("reward " + pair_label(model, x, a) + " is not finite at " + where);
        }
    }
}

/// Evaluation points: simplex vertices, plus random interior points for non-affine models.
std::vector<MeasureVector> evaluation_points(const ModelSpec& model) {
    const int dim = model.measure_dim();
    std::vector<MeasureVector> pts;
    for (int m = 0; m < dim; ++m) pts.push_back(vertex(dim, m));
    if (!model.dynamics->is_affine()) {
        auto extra = random_measures(dim, kSamplingPoints, 0x5eedULL);
        pts.insert(pts.end(), extra.begin(), extra.end());
    }
    return pts;
}

}  // namespace

AffineDynamics::AffineDynamics(int n_x, int n_a, int measure_dim)
    : n_x_(n_x), n_a_(n_a), dim_(measure_dim),
      k_base_(static_cast<std::size_t>(n_x * n_a * n_x), 0.0),
      k_coef_(static_cast<std::size_t>(n_x * n_a * measure_dim * n_x), 0.0),
      r_const_(static_cast<std::size_t>(n_x * n_a), 0.0),
      r_coef_(static_cast<std::size_t>(n_x * n_a * measure_dim), 0.0) {}

double& AffineDynamics::kernel_base(int x, int a, int next) {
    return k_base_[static_cast<std::size_t>((x * n_a_ + a) * n_x_ + next)];
}
double& AffineDynamics::kernel_coef(int x, int a, int m, int next) {
    return k_coef_[static_cast<std::size_t>(((x * n_a_ + a) * dim_ + m) * n_x_ + next)];
}
double& AffineDynamics::reward_const(int x, int a) { return r_const_[static_cast<std::size_t>(x * n_a_ + a)]; }
double& AffineDynamics::reward_coef(int x, int a, int m) {
    return r_coef_[static_cast<std::size_t>((x * n_a_ + a) * dim_ + m)];
}
double AffineDynamics::kernel_base(int x, int a, int next) const {
    return k_base_[static_cast<std::size_t>((x * n_a_ + a) * n_x_ + next)];
}
double AffineDynamics::kernel_coef(int x, int a, int m, int next) const {
    return k_coef_[static_cast<std::size_t>(((x * n_a_ + a) * dim_ + m) * n_x_ + next)];
}
double AffineDynamics::reward_const(int x, int a) const { return r_const_[static_cast<std::size_t>(x * n_a_ + a)]; }
double AffineDynamics::reward_coef(int x, int a, int m) const {
    return r_coef_[static_cast<std::size_t>((x * n_a_ + a) * dim_ + m)];
}

void AffineDynamics::kernel(int x, int a, std::span<const double> mu, std::span<double> out) const {
    const std::size_t row = static_cast<std::size_t>(x * n_a_ + a);
    for (int n = 0; n < n_x_; ++n) out[static_cast<std::size_t>(n)] = k_base_[row * static_cast<std::size_t>(n_x_) + static_cast<std::size_t>(n)];
    for (int m = 0; m < dim_; ++m) {
        const double w = mu[static_cast<std::size_t>(m)];
        if (w == 0.0) continue;
        const double* c = &k_coef_[(row * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(m)) * static_cast<std::size_t>(n_x_)];
        for (int n = 0; n < n_x_; ++n) out[static_cast<std::size_t>(n)] += w * c[n];
    }
}

double AffineDynamics::reward(int x, int a, std::span<const double> mu) const {
    const std::size_t row = static_cast<std::size_t>(x * n_a_ + a);
    double r = r_const_[row];
    for (int m = 0; m < dim_; ++m) r += r_coef_[row * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(m)] * mu[static_cast<std::size_t>(m)];
    return r;
}

bool AffineDynamics::kernel_reads_measure() const {
    return std::any_of(k_coef_.begin(), k_coef_.end(), [](double c) { return c != 0.0; });
}

bool AffineDynamics::reward_reads_measure() const {
    return std::any_of(r_coef_.begin(), r_coef_.end(), [](double c) { return c != 0.0; });
}

CallbackDynamics::CallbackDynamics(KernelFn kernel, RewardFn reward)
    : kernel_(std::move(kernel)), reward_(std::move(reward)) {
    if (!kernel_ || !reward_) throw ConfigError("callback dynamics require both a kernel and a reward function");
}

void CallbackDynamics::kernel(int x, int a, std::span<const double> mu, std::span<double> out) const {
    kernel_(x, a, mu, out);
}

double CallbackDynamics::reward(int x, int a, std::span<const double> mu) const { return reward_(x, a, mu); }

int ModelSpec::state_index(std::string_view label) const {
    for (std::size_t k = 0; k < states.size(); ++k)
        if (states[k] == label) return static_cast<int>(k);
    throw ConfigError("unknown state label '" + std::string(label) + "'");
}

int ModelSpec::action_index(std::string_view label) const {
    for (std::size_t k = 0; k < actions.size(); ++k)
        if (actions[k] == label) return static_cast<int>(k);
    throw ConfigError("unknown action label '" + std::string(label) + "'");
}

std::string measure_label(const ModelSpec& model, int m) {
    if (model.interaction == Interaction::StateOnly) return model.states[static_cast<std::size_t>(m)];
    return model.states[static_cast<std::size_t>(m / model.n_a())] + "," +
           model.actions[static_cast<std::size_t>(m % model.n_a())];
}

void check_measure(const ModelSpec& model, std::span<const double> mu) {
    if (static_cast<int>(mu.size()) != model.measure_dim()) {
        std::ostringstream msg;
        msg << "measure dimension " << mu.size() << " does not match expected " << model.measure_dim();
        throw std::invalid_argument(msg.str());
    }
}

int default_horizon(double gamma, double M_R, double tail_tol) {
    if (M_R <= 0.0) return 1;
    int T = 1;
    double g = gamma * gamma;
    while (g * M_R / (1.0 - gamma) > tail_tol) {
        g *= gamma;
        ++T;
        if (T > 100000000) throw ConfigError("horizon: tail tolerance unreachable");
    }
    return T;
}

void validate(ModelSpec& model) {
    check_labels(model.states, "states");
    check_labels(model.actions, "actions");
    if (model.delays.empty()) throw ConfigError("delays must be non-empty");
    if (model.delays.size() != model.costs.size())
        throw ConfigError("delays and costs must have the same length");
    for (std::size_t k = 0; k < model.delays.size(); ++k) {
        if (model.delays[k] < 0) throw ConfigError("delays must be non-negative");
        if (k > 0 && model.delays[k] >= model.delays[k - 1]) throw ConfigError("delays must be strictly decreasing");
    }
    if (model.costs.front() != 0.0) throw ConfigError("costs must start at 0");
    for (std::size_t k = 1; k < model.costs.size(); ++k)
        if (!(model.costs[k] > model.costs[k - 1])) throw ConfigError("costs must be strictly increasing");
    if (!(model.gamma > 0.0 && model.gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
    if (!model.dynamics) throw ConfigError("model has no kernel/reward definition");

    if (const auto* aff = dynamic_cast<const AffineDynamics*>(model.dynamics.get())) {
        if (aff->n_x() != model.n_x() || aff->n_a() != model.n_a() || aff->measure_dim() != model.measure_dim())
            throw ConfigError("affine tables do not match the declared spaces");
        check_affine_rows(model, *aff);
        for (int m = 0; m < model.measure_dim(); ++m)
            check_rows_at(model, vertex(model.measure_dim(), m), "vertex '" + measure_label(model, m) + "'");
    } else {
        const auto pts = evaluation_points(model);
        for (std::size_t k = 0; k < pts.size(); ++k)
            check_rows_at(model, pts[k], "sample " + std::to_string(k));
    }

    if (!(model.horizon.tail_tol > 0.0)) throw ConfigError("horizon.tail_tol must be positive");
    const double M_R = lipschitz_constants(model).M_R;
    if (model.horizon.T == 0) {
        model.horizon.T = default_horizon(model.gamma, M_R, model.horizon.tail_tol);
    } else {
        if (model.horizon.T < 1) throw ConfigError("horizon.T must be a positive integer");
        const double tail = std::pow(model.gamma, model.horizon.T + 1) * M_R / (1.0 - model.gamma);
        if (tail > model.horizon.tail_tol) {
            std::ostringstream msg;
            msg << "horizon.T = " << model.horizon.T << " leaves tail bound " << tail << " above tail_tol "
                << model.horizon.tail_tol;
            throw ConfigError(msg.str());
        }
    }
}

Distribution eval_kernel(const ModelSpec& model, int x, int a, std::span<const double> mu) {
    check_measure(model, mu);
    Distribution out(static_cast<std::size_t>(model.n_x()));
    model.dynamics->kernel(x, a, mu, out);
    return out;
}

double eval_reward(const ModelSpec& model, int x, int a, std::span<const double> mu) {
    check_measure(model, mu);
    return model.dynamics->reward(x, a, mu);
}

Distribution n_step_kernel(const ModelSpec& model, int x0, std::span<const int> actions,
                           std::span<const MeasureVector> mus) {
    if (actions.size() != mus.size()) throw std::invalid_argument("n_step_kernel: action and measure sequences differ in length");
    const std::size_t nx = static_cast<std::size_t>(model.n_x());
    Distribution cur(nx, 0.0);
    cur[static_cast<std::size_t>(x0)] = 1.0;
    Distribution next(nx), row(nx);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        check_measure(model, mus[s]);
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t x = 0; x < nx; ++x) {
            if (cur[x] == 0.0) continue;
            model.dynamics->kernel(static_cast<int>(x), actions[s], mus[s], row);
            for (std::size_t n = 0; n < nx; ++n) next[n] += cur[x] * row[n];
        }
        cur.swap(next);
    }
    return cur;
}

LipschitzConstants lipschitz_constants(const ModelSpec& model) {
    LipschitzConstants c;
    const int nx = model.n_x();
    const int na = model.n_a();
    const auto pts = evaluation_points(model);
    const std::size_t nvert = static_cast<std::size_t>(model.measure_dim());

    // rows[p][(x*na + a)] -> kernel row, rewards[p][x*na + a]
    std::vector<std::vector<Distribution>> rows(pts.size());
    std::vector<std::vector<double>> rew(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) {
        rows[p].resize(static_cast<std::size_t>(nx * na));
        rew[p].resize(static_cast<std::size_t>(nx * na));
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) {
                auto& r = rows[p][static_cast<std::size_t>(x * na + a)];
                r.resize(static_cast<std::size_t>(nx));
                model.dynamics->kernel(x, a, pts[p], r);
                rew[p][static_cast<std::size_t>(x * na + a)] = model.dynamics->reward(x, a, pts[p]);
            }
    }
    auto idx = [na](int x, int a) { return static_cast<std::size_t>(x * na + a); };

    for (std::size_t p = 0; p < pts.size(); ++p) {
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) {
                c.M_r = std::max(c.M_r, std::abs(rew[p][idx(x, a)]));
                for (int x2 = x + 1; x2 < nx; ++x2) {
                    c.kernel_x = std::max(c.kernel_x, tv(rows[p][idx(x, a)], rows[p][idx(x2, a)]));
                    c.reward_x = std::max(c.reward_x, std::abs(rew[p][idx(x, a)] - rew[p][idx(x2, a)]));
                }
                for (int a2 = a + 1; a2 < na; ++a2) {
                    c.kernel_a = std::max(c.kernel_a, tv(rows[p][idx(x, a)], rows[p][idx(x, a2)]));
                    c.reward_a = std::max(c.reward_a, std::abs(rew[p][idx(x, a)] - rew[p][idx(x, a2)]));
                }
            }
    }

    // Measure direction: all vertex pairs (exact for affine), plus consecutive sample pairs.
    auto measure_pair = [&](std::size_t p, std::size_t q) {
        const double d = tv(pts[p], pts[q]);
        if (d <= 0.0) return;
        for (int x = 0; x < nx; ++x)
            for (int a = 0; a < na; ++a) {
                c.kernel_mu = std::max(c.kernel_mu, tv(rows[p][idx(x, a)], rows[q][idx(x, a)]) / d);
                c.reward_mu = std::max(c.reward_mu, std::abs(rew[p][idx(x, a)] - rew[q][idx(x, a)]) / d);
            }
    };
    for (std::size_t p = 0; p < nvert; ++p)
        for (std::size_t q = p + 1; q < nvert; ++q) measure_pair(p, q);
    for (std::size_t p = nvert; p + 1 < pts.size(); ++p) measure_pair(p, p + 1);

    c.L_p = std::max({c.kernel_x, c.kernel_a, c.kernel_mu});
    c.L_r = std::max({c.reward_x, c.reward_a, c.reward_mu});
    c.M_R = c.M_r + (model.costs.empty() ? 0.0 : model.costs.back());
    return c;
}

}  // namespace mfgdelay
