#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mfgdelay/dp.hpp"
#include "mfgdelay/model.hpp"
#include "mfgdelay/spaces.hpp"

namespace mfgdelay {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key);
};

/// Uniform in (0, 1) from two 32-bit words, 52 bits of resolution.
double unit_double(std::uint32_t hi, std::uint32_t lo);

/**
 * Random stream of one agent in one episode.
 * Counter layout: (time or step, agent, episode, purpose); key = seed.
 */
class AgentStream {
public:
    enum Purpose : std::uint32_t { InitWindow = 0, InitHidden = 1, Control = 2, Transition = 3 };

    AgentStream(std::uint64_t seed, std::uint64_t episode, std::uint32_t agent);
    double uniform(std::uint32_t step, Purpose purpose) const;

private:
    Philox4x32::Key key_;
    std::uint32_t agent_;
    std::uint32_t episode_;
};

struct EpisodeConfig {
    int N = 1;
    int episodes = 1;
    std::uint64_t seed = 0;
    const Policy* deviator_policy = nullptr;
    const Policy* crowd_policy = nullptr;
    std::vector<double> nu0;  ///< initial window distribution
    int threads = 0;          ///< 0 = hardware concurrency
};

/// gap is the mean paired difference deviator - own; by exchangeability it estimates mean_deviator - mean_crowd.
struct GapEstimate {
    int N = 0;
    int episodes = 0;
    double mean_crowd = 0.0;
    double mean_deviator = 0.0;
    double gap = 0.0;
    double stderr_gap = 0.0;
    double ci95 = 0.0;
    double stderr_crowd = 0.0;
};

/// Empirical distribution of current states (state-only) or state-action pairs (joint).
MeasureVector empirical_measure(const ModelSpec& model, std::span<const int> states, std::span<const int> actions);

/**
 * Per-episode discounted returns of the N-player game.
 * crowd: average over all agents when every agent plays the crowd policy.
 * own: agent 0 in that same run.
 * deviator: agent 0 when it alone switches to the deviator policy, same random numbers.
 */
struct EpisodeReturns {
    double crowd = 0.0;
    double own = 0.0;
    double deviator = 0.0;
};

EpisodeReturns simulate_episode(const ModelSpec& model, const SpaceIndex& spaces, const EpisodeConfig& cfg,
                                std::uint64_t episode);

GapEstimate simulate_nplayer(const EpisodeConfig& cfg, const ModelSpec& model, const SpaceIndex& spaces);

/// Greedy best response against the flow induced by pi_star from nu0.
Policy build_deviator(const Policy& pi_star, const ModelSpec& model, const SpaceIndex& spaces,
                      std::span<const double> nu0);

}  // namespace mfgdelay
