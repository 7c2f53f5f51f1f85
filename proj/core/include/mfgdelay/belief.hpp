#pragma once

#include <span>
#include <vector>

#include "mfgdelay/model.hpp"
#include "mfgdelay/spaces.hpp"

namespace mfgdelay {

/// Window distributions for t = 0..T.
struct MeasureFlow {
    std::vector<std::vector<double>> slices;

    int horizon() const { return static_cast<int>(slices.size()) - 1; }
    const std::vector<double>& operator[](int t) const { return slices[static_cast<std::size_t>(t)]; }
    std::vector<double>& operator[](int t) { return slices[static_cast<std::size_t>(t)]; }
};

/**
 * Population measures at lags 0..d0 seen from one time slice.
 *
 * lag[k] lives in the model's measure space (X or X×A). In joint mode the
 * lag-0 entry is empty unless a population policy was supplied, because the
 * current action is not part of any window.
 */
struct LaggedMeasures {
    std::vector<MeasureVector> lag;
    std::vector<Distribution> state;

    const MeasureVector& at(int k) const;
    bool has(int k) const { return k >= 0 && k < static_cast<int>(lag.size()) && !lag[static_cast<std::size_t>(k)].empty(); }
};

/**
 * Lagged population measures of a window distribution, computed from lag d0 down to 0.
 *
 * pop_policy is the time-t slice of a policy table (rows over controls for
 * every observable state); it is only read for the lag-0 joint measure.
 */
LaggedMeasures belief_map(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu,
                          std::span<const double> pop_policy = {});

/// Current-state marginal of an initial window distribution; rejects infeasible support.
Distribution initial_underlying(const ModelSpec& model, const SpaceIndex& spaces, std::span<const double> nu0);

/// Observable marginal of a window distribution.
std::vector<double> observable_marginal(const SpaceIndex& spaces, std::span<const double> nu);

/// Per-lag measures for KernelTables; lags the kernel ignores get a placeholder when missing.
std::vector<MeasureVector> kernel_measures(const ModelSpec& model, const LaggedMeasures& lagged);

/// True when some consumer reads the current joint state-action distribution.
bool needs_lag0_joint(const ModelSpec& model);

}  // namespace mfgdelay
