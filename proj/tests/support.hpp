#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mfgdelay/config.hpp"
#include "mfgdelay/fixpoint.hpp"
#include "mfgdelay/model.hpp"
#include "mfgdelay/spaces.hpp"

namespace testing {

using namespace mfgdelay;

inline std::string data_path(const std::string& name) { return std::string(MFGDELAY_TEST_DATA) + "/" + name; }

inline Problem load(const std::string& name) { return load_problem(data_path(name)); }

/// Same problem with the quick channel priced at c; T is re-derived.
inline Problem with_cost(Problem p, double c) {
    p.model.costs[1] = c;
    p.model.horizon.T = 0;
    validate(p.model);
    return p;
}

inline double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Random point of the simplex (flat Dirichlet).
inline std::vector<double> random_simplex(std::mt19937_64& rng, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    double s = 0.0;
    for (auto& x : v) s += (x = -std::log(1.0 - uniform01(rng)));
    for (auto& x : v) x /= s;
    return v;
}

/// Affine model whose kernel row at each measure vertex m is a random probability vector.
inline ModelSpec random_model(std::mt19937_64& rng, int n_x, int n_a, std::vector<int> delays, Interaction mode,
                              double gamma = 0.9, int T = 6) {
    ModelSpec m;
    for (int x = 0; x < n_x; ++x) m.states.push_back("s" + std::to_string(x));
    for (int a = 0; a < n_a; ++a) m.actions.push_back("a" + std::to_string(a));
    m.delays = std::move(delays);
    m.costs.assign(m.delays.size(), 0.0);
    for (std::size_t k = 1; k < m.costs.size(); ++k) m.costs[k] = m.costs[k - 1] + 0.05 + 0.2 * uniform01(rng);
    m.gamma = gamma;
    m.interaction = mode;
    const int dim = m.measure_dim();
    auto dyn = std::make_shared<AffineDynamics>(n_x, n_a, dim);
    for (int x = 0; x < n_x; ++x)
        for (int a = 0; a < n_a; ++a) {
            const auto base = random_simplex(rng, n_x);
            for (int n = 0; n < n_x; ++n) dyn->kernel_base(x, a, n) = base[static_cast<std::size_t>(n)];
            for (int k = 0; k < dim; ++k) {
                const auto vertex = random_simplex(rng, n_x);
                const double lam = uniform01(rng);
                for (int n = 0; n < n_x; ++n)
                    dyn->kernel_coef(x, a, k, n) = lam * (vertex[static_cast<std::size_t>(n)] - base[static_cast<std::size_t>(n)]);
            }
            dyn->reward_const(x, a) = 2.0 * uniform01(rng) - 1.0;
            for (int k = 0; k < dim; ++k) dyn->reward_coef(x, a, k) = uniform01(rng) - 0.5;
        }
    m.dynamics = dyn;
    m.horizon.T = T;
    m.horizon.tail_tol = 1e9;
    validate(m);
    return m;
}

/// Random window measure supported on consistent windows.
inline std::vector<double> random_window_measure(std::mt19937_64& rng, const ModelSpec& model,
                                                 const SpaceIndex& spaces, double density = 0.3) {
    const auto support = support_table(model);
    std::vector<double> nu(spaces.window_size(), 0.0);
    double s = 0.0;
    std::size_t first = spaces.window_size();
    for (std::size_t w = 0; w < nu.size(); ++w) {
        if (!consistency_check(spaces, support, w)) continue;
        if (first == spaces.window_size()) first = w;
        if (uniform01(rng) > density) continue;
        s += (nu[w] = -std::log(1.0 - uniform01(rng)));
    }
    if (s == 0.0) {
        nu[first] = 1.0;
        return nu;
    }
    for (auto& p : nu) p /= s;
    return nu;
}

inline Policy random_policy_table(std::mt19937_64& rng, int T, std::size_t n_y, int n_u) {
    return random_policy(T, n_y, n_u, rng());
}

inline MeasureVector point_measure(int dim, int k) {
    MeasureVector mu(static_cast<std::size_t>(dim), 0.0);
    mu[static_cast<std::size_t>(k)] = 1.0;
    return mu;
}

}  // namespace testing
