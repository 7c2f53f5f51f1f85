#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfgdelay/model.hpp"

namespace mfgdelay {

/// Observable state: delay d, state observed at lag d, actions at lags d..1 (oldest first).
struct AugmentedState {
    int d = 0;
    int x = 0;
    std::vector<int> tail;

    bool operator==(const AugmentedState&) const = default;
};

/// Bookkeeping window: states at lags d0..d and actions at lags d0..1 (oldest first).
struct ExtendedWindow {
    int d = 0;
    std::vector<int> x_window;
    std::vector<int> a_window;

    bool operator==(const ExtendedWindow&) const = default;
};

/// Joint control (action, intervention). Dense index u = action * n_i + intervention.
struct Control {
    int action = 0;
    int intervention = 0;

    bool operator==(const Control&) const = default;
};

struct Weighted {
    std::size_t index;
    double prob;
};

/// Sparse probability vector over a dense index set.
using SparseDist = std::vector<Weighted>;

/**
 * Dense enumeration of the observable space Y and the window space.
 *
 * Blocks are ordered by delay ascending. Inside a Y block the index is
 * x * n_a^d + tail code; inside a window block it is
 * x code * n_a^d0 + action code. Codes are base-n numbers whose most
 * significant digit is the oldest entry.
 */
class SpaceIndex {
public:
    static constexpr std::size_t kDefaultWindowCap = 10'000'000;

    SpaceIndex() = default;
    SpaceIndex(const ModelSpec& model, std::size_t window_cap = kDefaultWindowCap);

    int n_x() const { return n_x_; }
    int n_a() const { return n_a_; }
    int n_i() const { return static_cast<int>(delays_.size()); }
    int n_u() const { return n_a_ * n_i(); }
    int d_min() const { return d_min_; }
    int d_max() const { return d_max_; }
    const std::vector<int>& delays() const { return delays_; }

    std::size_t y_size() const { return y_size_; }
    std::size_t window_size() const { return w_size_; }
    std::size_t y_offset(int d) const { return y_off_[block(d)]; }
    std::size_t y_block(int d) const { return y_len_[block(d)]; }
    std::size_t w_offset(int d) const { return w_off_[block(d)]; }
    std::size_t w_block(int d) const { return w_len_[block(d)]; }

    std::size_t encode(const AugmentedState& y) const;
    std::size_t encode(const ExtendedWindow& w) const;
    AugmentedState decode_y(std::size_t y) const;
    ExtendedWindow decode_window(std::size_t w) const;

    int y_delay(std::size_t y) const;
    int y_state(std::size_t y) const;
    /// Action at lag k in [1, d] of an observable state.
    int y_action(std::size_t y, int lag) const;
    std::uint64_t y_tail_code(std::size_t y) const;
    std::size_t y_index(int d, int x, std::uint64_t tail_code) const;

    int w_delay(std::size_t w) const;
    /// State at lag k in [d, d0] of a window.
    int w_state(std::size_t w, int lag) const;
    /// Action at lag k in [1, d0] of a window.
    int w_action(std::size_t w, int lag) const;
    std::uint64_t w_state_code(std::size_t w) const;
    std::uint64_t w_action_code(std::size_t w) const;
    std::size_t w_index(int d, std::uint64_t state_code, std::uint64_t action_code) const;

    /// Observable projection: (d, state at lag d, last d actions).
    std::size_t project(std::size_t w) const;

    int control_index(Control c) const { return c.action * n_i() + c.intervention; }
    Control control(int u) const { return Control{u / n_i(), u % n_i()}; }

    std::uint64_t pow_x(int k) const { return pow_x_[static_cast<std::size_t>(k)]; }
    std::uint64_t pow_a(int k) const { return pow_a_[static_cast<std::size_t>(k)]; }

private:
    std::size_t block(int d) const;

    int n_x_ = 0;
    int n_a_ = 0;
    int d_min_ = 0;
    int d_max_ = 0;
    std::vector<int> delays_;
    std::vector<std::uint64_t> pow_x_;
    std::vector<std::uint64_t> pow_a_;
    std::vector<std::size_t> y_off_, y_len_, w_off_, w_len_;
    std::size_t y_size_ = 0;
    std::size_t w_size_ = 0;
};

SpaceIndex build_spaces(const ModelSpec& model, std::size_t window_cap = SpaceIndex::kDefaultWindowCap);

/// Delay after choosing intervention i at delay d: d_i if d_i <= d, else d + 1.
int next_delay(const ModelSpec& model, int d, int i);

/**
 * One-step kernel rows evaluated at the lag measures of one time slice.
 * Lag k uses the measure of the population k periods ago.
 */
class KernelTables {
public:
    KernelTables() = default;
    /// An empty measure at some lag marks that lag as unavailable.
    KernelTables(const ModelSpec& model, std::span<const MeasureVector> lag_measures);

    bool has(int lag) const;
    std::span<const double> row(int lag, int x, int a) const;
    int max_lag() const { return static_cast<int>(rows_.size()) - 1; }

private:
    int n_x_ = 0;
    int n_a_ = 0;
    std::vector<std::vector<double>> rows_;
};

/// Window transition with kernel rows already evaluated; appends to out.
void window_kernel(const SpaceIndex& spaces, std::size_t w, Control u, const KernelTables& tables, SparseDist& out);

/// Window transition with lag measures indexed by lag.
SparseDist window_kernel(const ModelSpec& model, const SpaceIndex& spaces, const ExtendedWindow& w, Control u,
                         std::span<const MeasureVector> lag_measures);

/// Observable-level transition; appends to out.
void augmented_kernel(const SpaceIndex& spaces, std::size_t y, Control u, const KernelTables& tables,
                      SparseDist& out);

/// Distribution of the current state given an observable state (lags d..1 propagated).
void current_state(const SpaceIndex& spaces, std::size_t y, const KernelTables& tables, std::span<double> out);

/**
 * Integrates the kernel against the first (oldest) action coordinate.
 * nu is indexed x * n_a^m + action code, the result x' * n_a^(m-1) + rest.
 */
std::vector<double> star(const ModelSpec& model, std::span<const double> nu, int m, std::span<const double> mu);

/// Transition pairs (x, a, x') that have positive probability for some measure.
std::vector<char> support_table(const ModelSpec& model);

/// True iff the window is well-formed and its recorded state path is feasible under the kernel.
bool consistency_check(const ModelSpec& model, const SpaceIndex& spaces, const ExtendedWindow& w);
bool consistency_check(const SpaceIndex& spaces, const std::vector<char>& support, std::size_t w);

}  // namespace mfgdelay
