#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mfgdelay/fixpoint.hpp"
#include "mfgdelay/model.hpp"

namespace mfgdelay {

/// Everything a configuration document declares.
struct Problem {
    std::string name;
    ModelSpec model;
    InitialSpec initial;
    std::vector<Aggregate> aggregates;
    SolveConfig solver;
};

/// Parses and validates a full configuration document.
Problem parse_problem(std::string_view text);
Problem load_problem(const std::string& path);

std::string read_text_file(const std::string& path);

}  // namespace mfgdelay
