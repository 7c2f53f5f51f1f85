#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfgdelay/belief.hpp"
#include "mfgdelay/dp.hpp"
#include "mfgdelay/model.hpp"
#include "mfgdelay/spaces.hpp"

namespace mfgdelay {

/// Initial window distribution: product shorthand (default) or explicit atoms.
struct InitialSpec {
    enum class Kind { Product, Atoms };
    Kind kind = Kind::Product;
    Distribution x_marginal;  ///< empty means uniform over X
    int action_fill = 0;
    std::vector<std::pair<ExtendedWindow, double>> atoms;
};

/// Dense window measure of an initial specification; rejects inconsistent atoms.
std::vector<double> initial_measure(const ModelSpec& model, const SpaceIndex& spaces, const InitialSpec& init);

/// Indicator set over (current state, action, intervention); empty masks select everything.
struct Aggregate {
    std::string name;
    std::vector<char> states;
    std::vector<char> actions;
    std::vector<char> interventions;
};

/// Population share inside each aggregate for t = 0..T, row-major [t][k].
std::vector<std::vector<double>> aggregate_series(const ModelSpec& model, const SpaceIndex& spaces,
                                                  const Policy& pi, const MeasureFlow& flow,
                                                  const std::vector<Aggregate>& aggregates);

double tv_distance(std::span<const double> p, std::span<const double> q);
double delta_inf(const MeasureFlow& a, const MeasureFlow& b, double zeta);
double delta_policy(const Policy& a, const Policy& b, double zeta);

/// Flow induced by pi from nu0. Lag-0 joint measures use pi itself.
MeasureFlow propagate(const ModelSpec& model, const SpaceIndex& spaces, const Policy& pi,
                      std::span<const double> nu0);

struct StepResult {
    Policy policy;
    MeasureFlow flow;
};

/// Softmax best response to flow, followed by the flow it induces.
StepResult fixed_point_step(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow, double eta,
                            const Policy& q_ref, const Policy* pop = nullptr);

struct Exploitability {
    double absolute = 0.0;
    double best_value = 0.0;
    double policy_value = 0.0;
};

Exploitability exploitability(const ModelSpec& model, const SpaceIndex& spaces, const Policy& pi,
                              std::span<const double> nu0);
/// Same quantity on a precomputed augmented MDP of the flow induced by pi.
Exploitability exploitability(const AugmentedMdp& mdp, const Policy& pi, std::span<const double> nu0_y);

struct ConstantsReport {
    double L_p = 0.0;
    double L_r = 0.0;
    double M_r = 0.0;
    double M_R = 0.0;
    double L_P = 0.0;
    double L_R = 0.0;
    double L_M = 0.0;
    double q_star = 0.0;
    double zeta_min = 0.0;
    double zeta = 0.0;
    double eta_star_floor = 0.0;
    double eta_star = 0.0;
    double l_eta_star = 0.0;
    double L_Psi = 0.0;
    double eta_threshold = 0.0;
    /// Smallest eta covered by the contraction argument: max(eta_star, eta_threshold).
    double eta_contractive = 0.0;
};

ConstantsReport contraction_constants(const ModelSpec& model, std::optional<double> zeta = std::nullopt,
                                      std::optional<double> eta_star = std::nullopt);

/// sum_{d=0}^{d0} (d * L_p)^d with 0^0 = 1.
double belief_lipschitz(int d0, double L_p);

enum class Algorithm { FixedPrior, PriorDescent };

struct SolveConfig {
    Algorithm algorithm = Algorithm::PriorDescent;
    double eta = 1.0;
    int inner_iters = 10;           ///< prior descent only
    int max_outer = 200;            ///< outer loops (prior descent) or iterations (fixed prior)
    double tol = 1e-2;              ///< relative exploitability
    double tol_step = 1e-10;        ///< delta_inf step, fixed prior only; 0 disables
    double eta_growth = 1.0;        ///< per-outer-loop eta multiplier; 1 disables
    int divergence_window = 5;      ///< growing steps in a row; a quarter of the block length for the stall test
    bool random_init = false;
    std::uint64_t seed = 0;
    std::optional<double> zeta;     ///< metric weight; defaults to the constants report
};

struct IterationRecord {
    int iter = 0;
    int outer = 0;
    double eta = 0.0;
    double absolute = 0.0;
    double relative = 0.0;
    double step = 0.0;   ///< delta_inf to the previous flow (NaN at iter 0)
    double ratio = 0.0;  ///< step / previous step (NaN when undefined)
};

struct SolveReport {
    SolveConfig config;
    std::vector<IterationRecord> trace;
    Policy policy;
    Policy reference;    ///< KL reference of the last step
    double final_eta = 0.0;
    MeasureFlow flow;
    bool converged = false;
    bool diverged = false;
    double zeta = 0.0;
    double wall_seconds = 0.0;
};

/// Initial iterate: the reference (uniform) policy, or a random policy when cfg.random_init.
Policy initial_policy(const ModelSpec& model, const SpaceIndex& spaces, const SolveConfig& cfg);
Policy random_policy(int T, std::size_t n_y, int n_u, std::uint64_t seed);

SolveReport solve_fixed_prior(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                              const SolveConfig& cfg);
SolveReport prior_descent(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                          const SolveConfig& cfg);
SolveReport solve(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0,
                  const SolveConfig& cfg);

}  // namespace mfgdelay
