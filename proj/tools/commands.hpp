#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mfgdelay::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNonconvergence = 2, kInvariant = 3 };

struct SolveOptions {
    std::string config;
    std::string out;
    std::optional<std::string> algorithm;
    std::optional<double> eta;
    std::optional<int> inner_iters;
    std::optional<double> tol;
    std::optional<int> max_outer;
    std::optional<std::uint64_t> seed;
    bool random_init = false;
    bool flow_full = false;
    bool dump_q = false;
};

struct ConstantsOptions {
    std::string config;
    std::string out;
    std::optional<double> zeta;
    std::optional<double> eta_star;
};

struct SimulateOptions {
    std::string config;
    std::string out;
    std::optional<std::string> policy_file;
    std::vector<int> N{5, 20, 100};
    int episodes = 2000;
    std::uint64_t seed = 0;
    int threads = 0;
};

/// Output directory: explicit flag, else $MFGDELAY_OUT, else "out".
std::string resolve_out_dir(const std::string& flag);

int cmd_validate(const std::string& config);
int cmd_solve(const SolveOptions& opt);
int cmd_constants(const ConstantsOptions& opt);
int cmd_simulate(const SimulateOptions& opt);

/// Hex SHA-256 of a file.
std::string sha256_file(const std::string& path);

}  // namespace mfgdelay::cli
