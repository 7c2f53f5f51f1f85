#include "mfgdelay/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mfgdelay {

using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys = {"name",   "states",  "actions", "delays",  "costs",      "gamma", "interaction",
                                        "kernel", "reward",  "horizon", "initial", "aggregates", "solver"};

[[noreturn]] void schema(const std::string& key, const std::string& what) {
    throw ConfigError("schema: key '" + key + "' " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
    const auto it = obj.find(key);
    if (it == obj.end()) schema(path + key, "is required");
    return *it;
}

void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object()) schema(path.empty() ? "<root>" : path, "must be an object");
    for (const auto& [k, v] : obj.items())
        if (!allowed.count(k)) schema(path + k, "is not recognized");
}

double number(const json& v, const std::string& key) {
    if (!v.is_number()) schema(key, "must be a number");
    return v.get<double>();
}

int integer(const json& v, const std::string& key) {
    if (!v.is_number_integer()) schema(key, "must be an integer");
    return v.get<int>();
}

std::string string(const json& v, const std::string& key) {
    if (!v.is_string()) schema(key, "must be a string");
    return v.get<std::string>();
}

std::vector<std::string> labels(const json& v, const std::string& key) {
    if (!v.is_array()) schema(key, "must be an array of strings");
    std::vector<std::string> out;
    for (std::size_t k = 0; k < v.size(); ++k) out.push_back(string(v[k], key + "[" + std::to_string(k) + "]"));
    return out;
}

int state_of(const ModelSpec& m, const json& v, const std::string& key) {
    const auto s = string(v, key);
    for (int x = 0; x < m.n_x(); ++x)
        if (m.states[static_cast<std::size_t>(x)] == s) return x;
    schema(key, "names unknown state '" + s + "'");
}

int action_of(const ModelSpec& m, const json& v, const std::string& key) {
    const auto s = string(v, key);
    for (int a = 0; a < m.n_a(); ++a)
        if (m.actions[static_cast<std::size_t>(a)] == s) return a;
    schema(key, "names unknown action '" + s + "'");
}

int coordinate_of(const ModelSpec& m, const std::string& label, const std::string& key) {
    for (int c = 0; c < m.measure_dim(); ++c)
        if (measure_label(m, c) == label) return c;
    schema(key, "names unknown measure coordinate '" + label + "'");
}

/// Full row over next states: every state must appear exactly once.
std::vector<double> state_row(const ModelSpec& m, const json& v, const std::string& key) {
    if (!v.is_object()) schema(key, "must map every state to a number");
    std::vector<double> row(static_cast<std::size_t>(m.n_x()), 0.0);
    std::vector<char> seen(static_cast<std::size_t>(m.n_x()), 0);
    for (const auto& [label, val] : v.items()) {
        const int x = state_of(m, json(label), key);
        row[static_cast<std::size_t>(x)] = number(val, key + "." + label);
        seen[static_cast<std::size_t>(x)] = 1;
    }
    for (int x = 0; x < m.n_x(); ++x)
        if (!seen[static_cast<std::size_t>(x)]) schema(key, "is missing state '" + m.states[static_cast<std::size_t>(x)] + "'");
    return row;
}

ModelSpec parse_model(const json& doc) {
    only_keys(doc, kTopKeys, "");
    ModelSpec m;
    m.states = labels(require(doc, "states", ""), "states");
    m.actions = labels(require(doc, "actions", ""), "actions");
    {
        const auto& d = require(doc, "delays", "");
        if (!d.is_array()) schema("delays", "must be an array of integers");
        for (std::size_t k = 0; k < d.size(); ++k) m.delays.push_back(integer(d[k], "delays[" + std::to_string(k) + "]"));
        const auto& c = require(doc, "costs", "");
        if (!c.is_array()) schema("costs", "must be an array of numbers");
        for (std::size_t k = 0; k < c.size(); ++k) m.costs.push_back(number(c[k], "costs[" + std::to_string(k) + "]"));
    }
    if (doc.contains("gamma")) m.gamma = number(doc["gamma"], "gamma");
    if (doc.contains("interaction")) {
        const auto s = string(doc["interaction"], "interaction");
        if (s == "state-only") m.interaction = Interaction::StateOnly;
        else if (s == "joint") m.interaction = Interaction::Joint;
        else schema("interaction", "must be 'state-only' or 'joint'");
    }
    // Label checks run before the tables are read so lookups are unambiguous.
    {
        ModelSpec probe = m;
        probe.dynamics = std::make_shared<AffineDynamics>(1, 1, 1);
        if (probe.states.empty()) throw ConfigError("states must be non-empty");
        if (probe.actions.empty()) throw ConfigError("actions must be non-empty");
    }

    auto dyn = std::make_shared<AffineDynamics>(m.n_x(), m.n_a(), m.measure_dim());
    const auto& kernel = require(doc, "kernel", "");
    if (!kernel.is_array()) schema("kernel", "must be an array of rows");
    std::vector<char> k_seen(static_cast<std::size_t>(m.n_x() * m.n_a()), 0);
    for (std::size_t r = 0; r < kernel.size(); ++r) {
        const std::string p = "kernel[" + std::to_string(r) + "].";
        const auto& row = kernel[r];
        only_keys(row, {"from", "action", "base", "coef"}, p);
        const int x = state_of(m, require(row, "from", p), p + "from");
        const int a = action_of(m, require(row, "action", p), p + "action");
        auto& seen = k_seen[static_cast<std::size_t>(x * m.n_a() + a)];
        if (seen) throw ConfigError("kernel row (" + m.states[static_cast<std::size_t>(x)] + "," + m.actions[static_cast<std::size_t>(a)] + ") is defined twice");
        seen = 1;
        const auto base = state_row(m, require(row, "base", p), p + "base");
        for (int n = 0; n < m.n_x(); ++n) dyn->kernel_base(x, a, n) = base[static_cast<std::size_t>(n)];
        if (row.contains("coef")) {
            const auto& coef = row["coef"];
            if (!coef.is_object()) schema(p + "coef", "must map measure coordinates to state rows");
            for (const auto& [label, layer] : coef.items()) {
                const int c = coordinate_of(m, label, p + "coef." + label);
                const auto vals = state_row(m, layer, p + "coef." + label);
                for (int n = 0; n < m.n_x(); ++n) dyn->kernel_coef(x, a, c, n) = vals[static_cast<std::size_t>(n)];
            }
        }
    }
    for (int x = 0; x < m.n_x(); ++x)
        for (int a = 0; a < m.n_a(); ++a)
            if (!k_seen[static_cast<std::size_t>(x * m.n_a() + a)])
                throw ConfigError("kernel row (" + m.states[static_cast<std::size_t>(x)] + "," + m.actions[static_cast<std::size_t>(a)] + ") is missing");

    const auto& reward = require(doc, "reward", "");
    if (!reward.is_array()) schema("reward", "must be an array of rows");
    std::vector<char> r_seen(static_cast<std::size_t>(m.n_x() * m.n_a()), 0);
    for (std::size_t r = 0; r < reward.size(); ++r) {
        const std::string p = "reward[" + std::to_string(r) + "].";
        const auto& row = reward[r];
        only_keys(row, {"state", "action", "const", "coef"}, p);
        const int x = state_of(m, require(row, "state", p), p + "state");
        const int a = action_of(m, require(row, "action", p), p + "action");
        auto& seen = r_seen[static_cast<std::size_t>(x * m.n_a() + a)];
        if (seen) throw ConfigError("reward row (" + m.states[static_cast<std::size_t>(x)] + "," + m.actions[static_cast<std::size_t>(a)] + ") is defined twice");
        seen = 1;
        dyn->reward_const(x, a) = row.contains("const") ? number(row["const"], p + "const") : 0.0;
        if (row.contains("coef")) {
            const auto& coef = row["coef"];
            if (!coef.is_object()) schema(p + "coef", "must map measure coordinates to numbers");
            for (const auto& [label, val] : coef.items())
                dyn->reward_coef(x, a, coordinate_of(m, label, p + "coef." + label)) = number(val, p + "coef." + label);
        }
    }
    for (int x = 0; x < m.n_x(); ++x)
        for (int a = 0; a < m.n_a(); ++a)
            if (!r_seen[static_cast<std::size_t>(x * m.n_a() + a)])
                throw ConfigError("reward row (" + m.states[static_cast<std::size_t>(x)] + "," + m.actions[static_cast<std::size_t>(a)] + ") is missing");
    m.dynamics = dyn;

    if (doc.contains("horizon")) {
        const auto& h = doc["horizon"];
        only_keys(h, {"T", "tail_tol"}, "horizon.");
        if (h.contains("T")) {
            m.horizon.T = integer(h["T"], "horizon.T");
            if (m.horizon.T < 1) schema("horizon.T", "must be a positive integer");
        }
        if (h.contains("tail_tol")) m.horizon.tail_tol = number(h["tail_tol"], "horizon.tail_tol");
    }
    validate(m);
    return m;
}

std::vector<char> mask(const json& v, const std::string& key, int n, const std::function<int(const json&, const std::string&)>& lookup) {
    if (!v.is_array()) schema(key, "must be an array");
    std::vector<char> out(static_cast<std::size_t>(n), 0);
    for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<std::size_t>(lookup(v[k], key + "[" + std::to_string(k) + "]"))] = 1;
    return out;
}

InitialSpec parse_initial(const ModelSpec& m, const json& v) {
    InitialSpec init;
    if (v.contains("atoms")) {
        only_keys(v, {"atoms"}, "initial.");
        init.kind = InitialSpec::Kind::Atoms;
        const auto& atoms = v["atoms"];
        if (!atoms.is_array()) schema("initial.atoms", "must be an array");
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            const std::string p = "initial.atoms[" + std::to_string(k) + "].";
            only_keys(atoms[k], {"delay", "states", "actions", "weight"}, p);
            ExtendedWindow w;
            w.d = integer(require(atoms[k], "delay", p), p + "delay");
            for (const auto& s : require(atoms[k], "states", p)) w.x_window.push_back(state_of(m, s, p + "states"));
            for (const auto& a : require(atoms[k], "actions", p)) w.a_window.push_back(action_of(m, a, p + "actions"));
            init.atoms.emplace_back(std::move(w), number(require(atoms[k], "weight", p), p + "weight"));
        }
        return init;
    }
    only_keys(v, {"x_marginal", "action_fill"}, "initial.");
    if (v.contains("x_marginal")) init.x_marginal = state_row(m, v["x_marginal"], "initial.x_marginal");
    if (v.contains("action_fill")) init.action_fill = action_of(m, v["action_fill"], "initial.action_fill");
    return init;
}

SolveConfig parse_solver(const json& v) {
    only_keys(v, {"algorithm", "eta", "inner_iters", "max_outer", "tol", "tol_step", "eta_growth", "seed", "zeta",
                  "random_init", "divergence_window"},
              "solver.");
    SolveConfig c;
    if (v.contains("algorithm")) {
        const auto s = string(v["algorithm"], "solver.algorithm");
        if (s == "fixed-prior") c.algorithm = Algorithm::FixedPrior;
        else if (s == "prior-descent") c.algorithm = Algorithm::PriorDescent;
        else schema("solver.algorithm", "must be 'fixed-prior' or 'prior-descent'");
    }
    if (v.contains("eta")) c.eta = number(v["eta"], "solver.eta");
    if (v.contains("inner_iters")) c.inner_iters = integer(v["inner_iters"], "solver.inner_iters");
    if (v.contains("max_outer")) c.max_outer = integer(v["max_outer"], "solver.max_outer");
    if (v.contains("tol")) c.tol = number(v["tol"], "solver.tol");
    if (v.contains("tol_step")) c.tol_step = number(v["tol_step"], "solver.tol_step");
    if (v.contains("eta_growth")) c.eta_growth = number(v["eta_growth"], "solver.eta_growth");
    if (v.contains("seed")) {
        if (!v["seed"].is_number_unsigned()) schema("solver.seed", "must be a non-negative integer");
        c.seed = v["seed"].get<std::uint64_t>();
    }
    if (v.contains("zeta")) c.zeta = number(v["zeta"], "solver.zeta");
    if (v.contains("random_init")) {
        if (!v["random_init"].is_boolean()) schema("solver.random_init", "must be a boolean");
        c.random_init = v["random_init"].get<bool>();
    }
    if (v.contains("divergence_window")) c.divergence_window = integer(v["divergence_window"], "solver.divergence_window");
    return c;
}

json parse_json(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("parse error: ") + e.what());
    }
}

}  // namespace

ModelSpec parse_config(std::string_view text) { return parse_model(parse_json(text)); }

Problem parse_problem(std::string_view text) {
    const json doc = parse_json(text);
    Problem p;
    p.model = parse_model(doc);
    if (doc.contains("name")) p.name = string(doc["name"], "name");
    if (doc.contains("initial")) p.initial = parse_initial(p.model, doc["initial"]);
    if (doc.contains("aggregates")) {
        const auto& aggs = doc["aggregates"];
        if (!aggs.is_array()) schema("aggregates", "must be an array");
        const auto& m = p.model;
        for (std::size_t k = 0; k < aggs.size(); ++k) {
            const std::string pre = "aggregates[" + std::to_string(k) + "].";
            only_keys(aggs[k], {"name", "states", "actions", "interventions"}, pre);
            Aggregate a;
            a.name = string(require(aggs[k], "name", pre), pre + "name");
            if (a.name.empty() || a.name.find_first_of(",\"\n") != std::string::npos)
                schema(pre + "name", "must be a non-empty name without commas or quotes");
            if (aggs[k].contains("states"))
                a.states = mask(aggs[k]["states"], pre + "states", m.n_x(),
                                [&](const json& v, const std::string& key) { return state_of(m, v, key); });
            if (aggs[k].contains("actions"))
                a.actions = mask(aggs[k]["actions"], pre + "actions", m.n_a(),
                                 [&](const json& v, const std::string& key) { return action_of(m, v, key); });
            if (aggs[k].contains("interventions"))
                a.interventions = mask(aggs[k]["interventions"], pre + "interventions", m.n_i(),
                                       [&](const json& v, const std::string& key) {
                                           const int i = integer(v, key);
                                           if (i < 0 || i >= m.n_i()) schema(key, "is not a valid intervention index");
                                           return i;
                                       });
            p.aggregates.push_back(std::move(a));
        }
    }
    if (doc.contains("solver")) p.solver = parse_solver(doc["solver"]);
    return p;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Problem load_problem(const std::string& path) { return parse_problem(read_text_file(path)); }

}  // namespace mfgdelay
