#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mfgdelay/config.hpp"
#include "mfgdelay/fixpoint.hpp"
#include "mfgdelay/nplayer.hpp"

namespace mfgdelay::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// NaN and infinities are not representable in JSON.
ojson jnum(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

class Artifacts {
public:
    explicit Artifacts(std::string dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::function<void(std::ostream&)>& fill) {
        const auto path = (fs::path(dir_) / name).string();
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write '" + path + "'");
        fill(os);
        os.close();
        if (!os) throw std::runtime_error("write failed for '" + path + "'");
        files_.push_back(name);
    }

    void write_json(const std::string& name, const ojson& doc) {
        write(name, [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
    }

    void manifest(const std::string& command, const std::string& config, const ojson& params) {
        ojson m;
        m["command"] = command;
        m["config"] = config;
        m["parameters"] = params;
        m["output_dir"] = dir_;
        ojson list = ojson::array();
        for (const auto& f : files_) list.push_back({{"file", f}, {"sha256", sha256_file((fs::path(dir_) / f).string())}});
        m["artifacts"] = list;
        std::ofstream os(fs::path(dir_) / "manifest.json", std::ios::binary);
        os << m.dump(2) << '\n';
    }

private:
    std::string dir_;
    std::vector<std::string> files_;
};

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvariantError& e) {
        std::cerr << "internal invariant violated: " << e.what() << '\n';
        return kInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "fixed-prior") return Algorithm::FixedPrior;
    if (s == "prior-descent") return Algorithm::PriorDescent;
    throw ConfigError("unknown algorithm '" + s + "'");
}

const char* algorithm_name(Algorithm a) { return a == Algorithm::PriorDescent ? "prior-descent" : "fixed-prior"; }

ojson constants_json(const ConstantsReport& r) {
    return ojson{{"L_p", r.L_p},
                 {"L_r", r.L_r},
                 {"M_r", r.M_r},
                 {"M_R", r.M_R},
                 {"L_P", r.L_P},
                 {"L_R", r.L_R},
                 {"L_M", r.L_M},
                 {"q_star", r.q_star},
                 {"zeta_min", r.zeta_min},
                 {"zeta", r.zeta},
                 {"eta_star_floor", r.eta_star_floor},
                 {"eta_star", r.eta_star},
                 {"l_eta_star", jnum(r.l_eta_star)},
                 {"L_Psi", r.L_Psi},
                 {"eta_threshold", jnum(r.eta_threshold)},
                 {"eta_contractive", jnum(r.eta_contractive)}};
}

ojson solver_json(const SolveConfig& c, int T, double zeta) {
    return ojson{{"algorithm", algorithm_name(c.algorithm)},
                 {"eta", c.eta},
                 {"inner_iters", c.inner_iters},
                 {"max_outer", c.max_outer},
                 {"tol", c.tol},
                 {"tol_step", c.tol_step},
                 {"eta_growth", c.eta_growth},
                 {"divergence_window", c.divergence_window},
                 {"random_init", c.random_init},
                 {"seed", c.seed},
                 {"zeta", zeta},
                 {"T", T}};
}

void write_policy(Artifacts& out, const std::string& name, const TimeTable& t) {
    out.write(name, [&](std::ostream& os) { write_table_csv(t, os); });
}

}  // namespace

std::string resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("MFGDELAY_OUT"); env && *env) return env;
    return "out";
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned k = 0; k < len; ++k) {
        s.push_back(hex[md[k] >> 4]);
        s.push_back(hex[md[k] & 15]);
    }
    return s;
}

int cmd_validate(const std::string& config) {
    return guarded([&] {
        const auto p = load_problem(config);
        const auto spaces = build_spaces(p.model);
        (void)initial_measure(p.model, spaces, p.initial);
        std::cout << "ok: " << (p.name.empty() ? config : p.name) << " (states " << p.model.n_x() << ", actions "
                  << p.model.n_a() << ", delays " << p.model.n_i() << ", |Y| " << spaces.y_size() << ", windows "
                  << spaces.window_size() << ", T " << p.model.T() << ")\n";
        return int{kOk};
    });
}

int cmd_solve(const SolveOptions& opt) {
    return guarded([&] {
        auto p = load_problem(opt.config);
        auto cfg = p.solver;
        if (opt.algorithm) cfg.algorithm = parse_algorithm(*opt.algorithm);
        if (opt.eta) cfg.eta = *opt.eta;
        if (opt.inner_iters) cfg.inner_iters = *opt.inner_iters;
        if (opt.tol) cfg.tol = *opt.tol;
        if (opt.max_outer) cfg.max_outer = *opt.max_outer;
        if (opt.seed) cfg.seed = *opt.seed;
        if (opt.random_init) cfg.random_init = true;

        const auto spaces = build_spaces(p.model);
        const auto nu0 = initial_measure(p.model, spaces, p.initial);
        const auto rep = solve(p.model, spaces, nu0, cfg);
        const auto constants = contraction_constants(p.model, cfg.zeta);

        Artifacts out(resolve_out_dir(opt.out));
        out.write("exploitability.csv", [&](std::ostream& os) {
            os << "iter,outer,eta,absolute,relative,step,ratio\n";
            for (const auto& r : rep.trace)
                os << r.iter << ',' << r.outer << ',' << num(r.eta) << ',' << num(r.absolute) << ',' << num(r.relative)
                   << ',' << num(r.step) << ',' << num(r.ratio) << '\n';
        });
        const auto series = aggregate_series(p.model, spaces, rep.policy, rep.flow, p.aggregates);
        out.write("flow_summary.csv", [&](std::ostream& os) {
            os << 't';
            for (const auto& a : p.aggregates) os << ',' << a.name;
            os << '\n';
            for (std::size_t t = 0; t < series.size(); ++t) {
                os << t;
                for (double v : series[t]) os << ',' << num(v);
                os << '\n';
            }
        });
        if (opt.flow_full)
            out.write("flow_full.csv", [&](std::ostream& os) {
                os << "t,window_index,mass\n";
                for (int t = 0; t <= rep.flow.horizon(); ++t)
                    for (std::size_t w = 0; w < rep.flow[t].size(); ++w)
                        if (rep.flow[t][w] != 0.0) os << t << ',' << w << ',' << num(rep.flow[t][w]) << '\n';
            });
        write_policy(out, "policy.csv", rep.policy);
        if (opt.dump_q) {
            const auto q = backward_q_regularized(p.model, spaces, rep.flow, rep.final_eta, rep.reference, &rep.policy);
            write_policy(out, "q.csv", q);
        }

        const auto& last = rep.trace.back();
        ojson report;
        report["name"] = p.name;
        report["config"] = solver_json(rep.config, p.model.T(), rep.zeta);
        report["converged"] = rep.converged;
        report["diverged"] = rep.diverged;
        report["iterations"] = last.iter;
        report["outer_loops"] = last.outer;
        report["initial_exploitability"] = rep.trace.front().absolute;
        report["final_absolute_exploitability"] = last.absolute;
        report["final_relative_exploitability"] = last.relative;
        report["final_step"] = jnum(last.step);
        report["final_eta"] = rep.final_eta;
        report["sizes"] = {{"observable", spaces.y_size()}, {"windows", spaces.window_size()}, {"controls", spaces.n_u()}};
        out.write_json("report.json", report);
        out.write_json("constants.json", constants_json(constants));
        out.manifest("solve", opt.config, solver_json(rep.config, p.model.T(), rep.zeta));

        std::cout << (rep.converged ? "converged" : "not converged") << " after " << last.iter << " iterations ("
                  << last.outer << " outer), relative exploitability " << last.relative << ", wall "
                  << rep.wall_seconds << " s" << (rep.diverged ? ", divergence flagged" : "") << '\n';
        return rep.converged ? int{kOk} : int{kNonconvergence};
    });
}

int cmd_constants(const ConstantsOptions& opt) {
    return guarded([&] {
        const auto p = load_problem(opt.config);
        const auto r = contraction_constants(p.model, opt.zeta, opt.eta_star);
        Artifacts out(resolve_out_dir(opt.out));
        out.write_json("constants.json", constants_json(r));
        ojson params{{"zeta", r.zeta}, {"eta_star", r.eta_star}, {"T", p.model.T()}};
        out.manifest("constants", opt.config, params);
        std::cout << constants_json(r).dump(2) << '\n';
        return int{kOk};
    });
}

int cmd_simulate(const SimulateOptions& opt) {
    return guarded([&] {
        const auto p = load_problem(opt.config);
        const auto spaces = build_spaces(p.model);
        const auto nu0 = initial_measure(p.model, spaces, p.initial);
        Policy pi;
        if (opt.policy_file) {
            std::ifstream in(*opt.policy_file);
            if (!in) throw ConfigError("cannot open policy file '" + *opt.policy_file + "'");
            auto t = read_table_csv(in, p.model.T(), spaces.y_size(), spaces.n_u());
            pi = Policy(t.horizon(), t.n_y(), t.n_u());
            pi.values() = std::move(t.values());
            pi.check_rows(1e-9);
        } else {
            const auto rep = solve(p.model, spaces, nu0, p.solver);
            if (!rep.converged) std::cerr << "warning: equilibrium solve did not converge; simulating the last iterate\n";
            pi = rep.policy;
        }
        const auto dev = build_deviator(pi, p.model, spaces, nu0);

        std::vector<GapEstimate> rows;
        for (int n : opt.N) {
            EpisodeConfig cfg;
            cfg.N = n;
            cfg.episodes = opt.episodes;
            cfg.seed = opt.seed;
            cfg.deviator_policy = &dev;
            cfg.crowd_policy = &pi;
            cfg.nu0 = nu0;
            cfg.threads = opt.threads;
            rows.push_back(simulate_nplayer(cfg, p.model, spaces));
            const auto& g = rows.back();
            std::cout << "N " << g.N << ": crowd " << g.mean_crowd << ", deviator " << g.mean_deviator << ", gap "
                      << g.gap << " +- " << g.ci95 << '\n';
        }
        Artifacts out(resolve_out_dir(opt.out));
        out.write("nplayer.csv", [&](std::ostream& os) {
            os << "N,episodes,mean_crowd,mean_deviator,gap,stderr,ci95\n";
            for (const auto& g : rows)
                os << g.N << ',' << g.episodes << ',' << num(g.mean_crowd) << ',' << num(g.mean_deviator) << ','
                   << num(g.gap) << ',' << num(g.stderr_gap) << ',' << num(g.ci95) << '\n';
        });
        ojson params{{"N", opt.N},
                     {"episodes", opt.episodes},
                     {"seed", opt.seed},
                     {"policy_file", opt.policy_file ? ojson(*opt.policy_file) : ojson(nullptr)},
                     {"T", p.model.T()}};
        out.manifest("simulate", opt.config, params);
        return int{kOk};
    });
}

}  // namespace mfgdelay::cli
