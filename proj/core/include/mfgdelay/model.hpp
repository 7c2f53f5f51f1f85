#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mfgdelay {

/// Raised for malformed configuration documents and violated model invariants.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an internal consistency check fails at run time.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class Interaction { StateOnly, Joint };

/// Probability vector over X (state-only) or X×A (joint, index x*n_a + a).
using MeasureVector = std::vector<double>;
/// Probability vector over X.
using Distribution = std::vector<double>;

/**
 * Measure-dependent transition kernel and reward of the underlying game.
 * Implementations must be pure so that a model can be shared across threads.
 */
class Dynamics {
public:
    virtual ~Dynamics() = default;

    /// Writes p(. | x, a, mu) into out (size n_x).
    virtual void kernel(int x, int a, std::span<const double> mu, std::span<double> out) const = 0;
    virtual double reward(int x, int a, std::span<const double> mu) const = 0;

    /// True when vertex evaluation is exact (affine in the measure).
    virtual bool is_affine() const { return false; }
    virtual bool kernel_reads_measure() const { return true; }
    virtual bool reward_reads_measure() const { return true; }
};

/// Kernel and reward that are affine in the measure; the form used by config files.
class AffineDynamics final : public Dynamics {
public:
    AffineDynamics(int n_x, int n_a, int measure_dim);

    void kernel(int x, int a, std::span<const double> mu, std::span<double> out) const override;
    double reward(int x, int a, std::span<const double> mu) const override;
    bool is_affine() const override { return true; }
    bool kernel_reads_measure() const override;
    bool reward_reads_measure() const override;

    double& kernel_base(int x, int a, int next);
    double& kernel_coef(int x, int a, int m, int next);
    double& reward_const(int x, int a);
    double& reward_coef(int x, int a, int m);

    double kernel_base(int x, int a, int next) const;
    double kernel_coef(int x, int a, int m, int next) const;
    double reward_const(int x, int a) const;
    double reward_coef(int x, int a, int m) const;

    int n_x() const { return n_x_; }
    int n_a() const { return n_a_; }
    int measure_dim() const { return dim_; }

private:
    int n_x_;
    int n_a_;
    int dim_;
    std::vector<double> k_base_;
    std::vector<double> k_coef_;
    std::vector<double> r_const_;
    std::vector<double> r_coef_;
};

/// Wraps user callbacks for models outside the affine family.
class CallbackDynamics final : public Dynamics {
public:
    using KernelFn = std::function<void(int, int, std::span<const double>, std::span<double>)>;
    using RewardFn = std::function<double(int, int, std::span<const double>)>;

    CallbackDynamics(KernelFn kernel, RewardFn reward);

    void kernel(int x, int a, std::span<const double> mu, std::span<double> out) const override;
    double reward(int x, int a, std::span<const double> mu) const override;

private:
    KernelFn kernel_;
    RewardFn reward_;
};

struct Horizon {
    int T = 0;               ///< 0 means "derive from tail_tol"
    double tail_tol = 1e-3;
};

/**
 * Finite mean-field game with controlled observation delay.
 *
 * delays[0] is the slowest (free) observation channel, costs[0] must be 0.
 * Immutable after validate(); safe for concurrent reads.
 */
struct ModelSpec {
    std::vector<std::string> states;
    std::vector<std::string> actions;
    std::vector<int> delays;
    std::vector<double> costs;
    double gamma = 0.95;
    Interaction interaction = Interaction::StateOnly;
    std::shared_ptr<const Dynamics> dynamics;
    Horizon horizon;

    int n_x() const { return static_cast<int>(states.size()); }
    int n_a() const { return static_cast<int>(actions.size()); }
    int n_i() const { return static_cast<int>(delays.size()); }
    int n_u() const { return n_a() * n_i(); }
    int d_max() const { return delays.front(); }
    int d_min() const { return delays.back(); }
    int measure_dim() const { return interaction == Interaction::Joint ? n_x() * n_a() : n_x(); }
    int T() const { return horizon.T; }

    int state_index(std::string_view label) const;
    int action_index(std::string_view label) const;
};

struct LipschitzConstants {
    double L_p = 0.0;
    double L_r = 0.0;
    double M_r = 0.0;
    double M_R = 0.0;
    double kernel_x = 0.0;   ///< partial constant in the state
    double kernel_a = 0.0;   ///< partial constant in the action
    double kernel_mu = 0.0;  ///< partial constant in the measure
    double reward_x = 0.0;
    double reward_a = 0.0;
    double reward_mu = 0.0;
};

/// Checks every model invariant and fills a derived horizon when T == 0.
void validate(ModelSpec& model);

/// Parses the model part of a JSON configuration document and validates it.
ModelSpec parse_config(std::string_view text);

Distribution eval_kernel(const ModelSpec& model, int x, int a, std::span<const double> mu);
double eval_reward(const ModelSpec& model, int x, int a, std::span<const double> mu);

/// Sequential composition of one-step kernels; t = 0 returns the point mass at x0.
Distribution n_step_kernel(const ModelSpec& model, int x0, std::span<const int> actions,
                           std::span<const MeasureVector> mus);

LipschitzConstants lipschitz_constants(const ModelSpec& model);

/// Smallest T with gamma^(T+1) * M_R / (1 - gamma) <= tail_tol.
int default_horizon(double gamma, double M_R, double tail_tol);

/// Label of measure coordinate m ("S" or "S,U").
std::string measure_label(const ModelSpec& model, int m);

void check_measure(const ModelSpec& model, std::span<const double> mu);

}  // namespace mfgdelay
