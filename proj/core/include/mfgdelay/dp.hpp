#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mfgdelay/belief.hpp"
#include "mfgdelay/model.hpp"
#include "mfgdelay/spaces.hpp"

namespace mfgdelay {

/// Dense (t, observable state, control) table for t = 0..T.
class TimeTable {
public:
    TimeTable() = default;
    TimeTable(int T, std::size_t n_y, int n_u, double fill = 0.0);

    int horizon() const { return T_; }
    std::size_t n_y() const { return n_y_; }
    int n_u() const { return n_u_; }

    std::span<double> row(int t, std::size_t y);
    std::span<const double> row(int t, std::size_t y) const;
    std::span<double> slice(int t);
    std::span<const double> slice(int t) const;
    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

private:
    int T_ = 0;
    std::size_t n_y_ = 0;
    int n_u_ = 0;
    std::vector<double> v_;
};

class QTable : public TimeTable {
public:
    using TimeTable::TimeTable;
};

class Policy : public TimeTable {
public:
    using TimeTable::TimeTable;

    static Policy uniform(int T, std::size_t n_y, int n_u);
    /// Throws InvariantError unless every row is a probability vector within tol.
    void check_rows(double tol = 1e-12) const;
    /// Throws std::invalid_argument unless every entry is strictly positive.
    void check_full_support() const;
};

/// Observable-level MDP of one time slice against fixed lag measures.
struct AugmentedSlice {
    std::vector<double> reward;          ///< indexed y * n_u + u
    std::vector<std::size_t> begin;      ///< transition ranges, size |Y| * n_u + 1
    SparseDist trans;
};

struct AugmentedMdp {
    std::vector<AugmentedSlice> slices;  ///< t = 0..T
    double gamma = 0.0;
    std::size_t n_y = 0;
    int n_u = 0;

    int horizon() const { return static_cast<int>(slices.size()) - 1; }
};

/// Belief maps of every flow slice; pop (if given) supplies lag-0 joint measures.
std::vector<LaggedMeasures> flow_lags(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow,
                                      const Policy* pop = nullptr);

AugmentedSlice build_slice(const ModelSpec& model, const SpaceIndex& spaces, const LaggedMeasures& lagged);
AugmentedMdp build_mdp(const ModelSpec& model, const SpaceIndex& spaces, const std::vector<LaggedMeasures>& lags);

/// Expected reward of the current (unobserved) state minus the intervention cost.
double augmented_reward(const ModelSpec& model, const SpaceIndex& spaces, const AugmentedState& y, Control u,
                        const LaggedMeasures& lagged);

QTable backward_q_regularized(const AugmentedMdp& mdp, double eta, const Policy& q_ref);
QTable backward_q_greedy(const AugmentedMdp& mdp);

QTable backward_q_regularized(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow, double eta,
                              const Policy& q_ref, const Policy* pop = nullptr);
QTable backward_q_greedy(const ModelSpec& model, const SpaceIndex& spaces, const MeasureFlow& flow,
                         const Policy* pop = nullptr);

/// eta * log sum_u q(u) exp(Q(u) / eta), max-shifted.
double soft_value(std::span<const double> q_row, std::span<const double> ref_row, double eta);

Policy softmax_policy(const QTable& q, double eta, const Policy& q_ref);
/// Point mass on the lowest-index maximizer of each row.
Policy greedy_policy(const QTable& q);

/// KL(p || q) with 0 log 0 = 0; +inf when p charges a zero of q.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Per-state values at t = 0 of pi, including the -eta * KL(pi || q_ref) term.
std::vector<double> policy_values(const AugmentedMdp& mdp, const Policy& pi, double eta, const Policy& q_ref);
double policy_value(const AugmentedMdp& mdp, const Policy& pi, std::span<const double> nu0_y, double eta,
                    const Policy& q_ref);
/// Greedy optimal values at t = 0, weighted by the observable initial measure.
double best_response_value(const AugmentedMdp& mdp, std::span<const double> nu0_y);

/// Writes (t, y_index, u_index, value) rows.
void write_table_csv(const TimeTable& table, std::ostream& os);
TimeTable read_table_csv(std::istream& is, int T, std::size_t n_y, int n_u);

}  // namespace mfgdelay
