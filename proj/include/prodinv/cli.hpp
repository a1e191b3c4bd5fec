#pragma once

// Batch front-end: flat key=value configs, command dispatch and CSV/report
// artifacts.

#include "prodinv/average.hpp"
#include "prodinv/discounted.hpp"
#include "prodinv/pac_sim.hpp"
#include "prodinv/steady_state.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace prodinv::cli {

namespace fs = std::filesystem;

struct RunConfig {
    ModelParams params;
    bool has_alpha = false;
    double tol = 0.001;
    std::string solver = "avg";      ///< policy certified by `certify`: vi, pi or avg
    std::string init_policy;         ///< empty: constant gamma_lo; a number: constant rate; else a policy.csv path
    std::size_t seeds = 20;
    double horizon = 1e5;            ///< simulated time per trajectory
    std::string out_dir = ".";
    std::uint64_t seed = 1;          ///< base seed; trajectory k uses seed + k
    fs::path base_dir;               ///< directory of the config file, for relative paths
};

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{"lambda", "mu", "gamma_lo", "rate_hi", "grid_step", "h", "c1",
                                            "c2", "c3", "s_thresh", "alpha", "n_max", "i_max", "tol",
                                            "solver", "init_policy", "seeds", "horizon", "out_dir"};
    return keys;
}

inline const std::set<std::string>& required_keys() {
    static const std::set<std::string> keys{"lambda", "mu", "h", "c1", "c2", "c3", "s_thresh"};
    return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::string fmt(const char* spec, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

inline double parse_real(const std::string& text, const std::string& key, int line) {
    double x = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, x);
    if (ec != std::errc() || ptr != end || !std::isfinite(x))
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": '" + key + "' expects a number, got '" + text + "'");
    return x;
}

inline long long parse_int(const std::string& text, const std::string& key, int line) {
    long long x = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, x);
    if (ec != std::errc() || ptr != end)
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": '" + key + "' expects an integer, got '" + text + "'");
    return x;
}

} // namespace detail

/// Parses config text. Every key may appear at most once; unknown keys fail.
inline RunConfig parse_config(std::istream& in, const fs::path& base_dir = {}) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    std::map<std::string, std::pair<std::string, int>> entries;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string text = detail::trim(raw);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": expected key=value");
        const std::string key = detail::trim(std::string_view(text).substr(0, eq));
        const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
        if (!known_keys().count(key))
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": unknown key '" + key + "'");
        if (entries.count(key))
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": duplicate key '" + key + "'");
        if (value.empty())
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": empty value for '" + key + "'");
        entries.emplace(key, std::make_pair(value, line));
    }
    for (const auto& key : required_keys())
        if (!entries.count(key)) throw Error(ErrorKind::ParseError, "missing required key '" + key + "'");

    auto real = [&](const char* key, double& dst) {
        if (auto it = entries.find(key); it != entries.end())
            dst = detail::parse_real(it->second.first, key, it->second.second);
    };
    auto integer = [&](const char* key, int& dst) {
        if (auto it = entries.find(key); it != entries.end())
            dst = static_cast<int>(detail::parse_int(it->second.first, key, it->second.second));
    };
    ModelParams& p = cfg.params;
    real("lambda", p.lambda);
    real("mu", p.mu);
    real("gamma_lo", p.gamma_lo);
    real("rate_hi", p.rate_hi);
    real("grid_step", p.grid_step);
    real("h", p.h);
    real("c1", p.c1);
    real("c2", p.c2);
    real("c3", p.c3);
    integer("s_thresh", p.s_thresh);
    integer("n_max", p.n_max);
    integer("i_max", p.i_max);
    cfg.has_alpha = entries.count("alpha") != 0;
    real("alpha", p.alpha);
    real("tol", cfg.tol);
    real("horizon", cfg.horizon);
    if (auto it = entries.find("seeds"); it != entries.end()) {
        const long long n = detail::parse_int(it->second.first, "seeds", it->second.second);
        if (n < 1) throw Error(ErrorKind::ValidationError, "seeds must be >= 1");
        cfg.seeds = static_cast<std::size_t>(n);
    }
    if (auto it = entries.find("solver"); it != entries.end()) {
        cfg.solver = it->second.first;
        if (cfg.solver != "vi" && cfg.solver != "pi" && cfg.solver != "avg")
            throw Error(ErrorKind::ParseError, "line " + std::to_string(it->second.second) + ": solver must be vi, pi or avg");
    }
    if (auto it = entries.find("init_policy"); it != entries.end()) cfg.init_policy = it->second.first;
    if (auto it = entries.find("out_dir"); it != entries.end()) cfg.out_dir = it->second.first;

    try {
        validate_params(p, cfg.has_alpha);
    } catch (const Error& e) {
        throw Error(ErrorKind::ValidationError, e.what());
    }
    if (!(cfg.tol > 0.0)) throw Error(ErrorKind::ValidationError, "tol must be positive");
    if (!(cfg.horizon > 0.0)) throw Error(ErrorKind::ValidationError, "horizon must be positive");
    return cfg;
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config '" + path.string() + "'");
    return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Policy tables

inline void write_policy_table(const Policy& pol, const ModelParams& p, std::ostream& out) {
    out << "n,i,beta\n";
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        out << s.n << ',' << s.i << ',' << detail::fmt("%.3f", pol[k]) << '\n';
    }
}

inline void emit_policy_table(const Policy& pol, const ModelParams& p, const fs::path& path) {
    if (pol.size() != num_states(p)) throw Error(ErrorKind::BadArgument, "policy size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    write_policy_table(pol, p, out);
    if (!out) throw Error(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

/// Reads a `n,i,beta` table; every state must appear once and every rate must
/// lie on the action grid (snapped to the grid value). The 3-decimal text
/// format is matched to half its last digit.
inline Policy load_policy_table(std::istream& in, const ModelParams& p, const ActionGrid& grid,
                                const std::string& name = "policy") {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "n,i,beta")
        throw Error(ErrorKind::ParseError, name + ": expected header 'n,i,beta'");
    std::vector<double> rates(num_states(p), 0.0);
    std::vector<char> seen(num_states(p), 0);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string text = detail::trim(line);
        if (text.empty()) continue;
        std::stringstream ss(text);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw Error(ErrorKind::ParseError, name + " line " + std::to_string(lineno) + ": expected n,i,beta");
        const State s{static_cast<int>(detail::parse_int(detail::trim(a), "n", lineno)),
                      static_cast<int>(detail::parse_int(detail::trim(b), "i", lineno))};
        const double beta = detail::parse_real(detail::trim(c), "beta", lineno);
        if (!in_range(s, p))
            throw Error(ErrorKind::ParseError, name + " line " + std::to_string(lineno) + ": state outside truncation");
        const auto idx = grid.find(beta, 5e-4 + kGridTolerance);
        if (!idx)
            throw Error(ErrorKind::ParseError, name + " line " + std::to_string(lineno) + ": rate not on the action grid");
        const std::size_t k = state_index(s, p);
        if (seen[k]) throw Error(ErrorKind::ParseError, name + " line " + std::to_string(lineno) + ": duplicate state");
        seen[k] = 1;
        rates[k] = grid[*idx];
    }
    for (char c : seen)
        if (!c) throw Error(ErrorKind::ParseError, name + ": missing states");
    return Policy(p, std::move(rates));
}

inline Policy load_policy_table(const fs::path& path, const ModelParams& p, const ActionGrid& grid) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open policy '" + path.string() + "'");
    return load_policy_table(in, p, grid, path.string());
}

/// Resolves init_policy: empty means constant gamma_lo, a number a constant
/// rate, anything else a policy table path.
inline Policy initial_policy(const RunConfig& cfg, const ActionGrid& grid) {
    const ModelParams& p = cfg.params;
    if (cfg.init_policy.empty()) return Policy(p, grid.front());
    double beta = 0.0;
    const auto* end = cfg.init_policy.data() + cfg.init_policy.size();
    if (auto [ptr, ec] = std::from_chars(cfg.init_policy.data(), end, beta); ec == std::errc() && ptr == end) {
        const auto idx = grid.find(beta);
        if (!idx) throw Error(ErrorKind::ValidationError, "init_policy rate is not on the action grid");
        return Policy(p, grid[*idx]);
    }
    fs::path path(cfg.init_policy);
    if (path.is_relative() && !cfg.base_dir.empty()) path = cfg.base_dir / path;
    return load_policy_table(path, p, grid);
}

// ---------------------------------------------------------------------------
// Artifacts

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw Error(ErrorKind::IoError, "write failed for '" + path.string() + "'");
}

inline std::string state_table(const Eigen::VectorXd& v, const ModelParams& p, const char* column) {
    std::string out = std::string("n,i,") + column + "\n";
    for (std::size_t k = 0; k < num_states(p); ++k) {
        const State s = state_at(k, p);
        out += std::to_string(s.n) + ',' + std::to_string(s.i) + ',' +
               detail::fmt("%.12g", v[static_cast<Eigen::Index>(k)]) + '\n';
    }
    return out;
}

inline std::string policy_csv(const Policy& pol, const ModelParams& p) {
    std::ostringstream out;
    write_policy_table(pol, p, out);
    return out.str();
}

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"steady-state", "solve-vi", "solve-pi", "solve-avg", "simulate", "certify"};
    return names;
}

/// Minimum expected number of jumps per certification trajectory.
inline constexpr double kCertifyEvents = 1e6;

enum ExitCode : int { kOk = 0, kConfigError = 1, kSolveError = 2, kSimulationError = 3 };

struct RunResult {
    int exit_code = kOk;
    std::string message;               ///< one-line diagnostic on failure
    std::vector<std::string> artifacts; ///< file names written into the output directory
};

namespace detail {

struct Report {
    std::ostringstream text;
    template <class T>
    void add(const std::string& key, const T& value) { text << key << ": " << value << '\n'; }
    void real(const std::string& key, double v) { add(key, fmt("%.12g", v)); }
};

inline std::string policy_grid_text(const Policy& pol, const ModelParams& p) {
    std::string out = "policy (rows n, columns i):\n";
    for (int n = 0; n <= p.n_max; ++n) {
        out += "  ";
        for (int i = 0; i <= p.i_max; ++i) out += fmt("%7.3f", pol.at({n, i}));
        out += '\n';
    }
    return out;
}

} // namespace detail

/// Executes one command; never throws for library errors. Exit codes: 1 for
/// config and I/O problems, 2 for solver failures, 3 for simulation failures.
inline RunResult run(const RunConfig& cfg, const std::string& command) {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    RunResult result;
    int phase = kConfigError;
    try {
        if (std::find(commands().begin(), commands().end(), command) == commands().end())
            throw Error(ErrorKind::BadArgument, "unknown command '" + command + "'");
        const ModelParams& p = cfg.params;
        const bool discounted = command == "solve-vi" || command == "solve-pi";
        if (discounted && !cfg.has_alpha)
            throw Error(ErrorKind::ValidationError, "alpha is required for discounted solvers");
        validate_params(p, discounted);
        const ActionGrid grid = build_action_grid(p);
        const fs::path out_dir(cfg.out_dir);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec || !fs::is_directory(out_dir))
            throw Error(ErrorKind::IoError, "cannot create output directory '" + out_dir.string() + "'");
        const Policy init = initial_policy(cfg, grid);

        std::map<std::string, std::string> files;
        detail::Report rep;
        rep.add("command", command);
        rep.add("states", num_states(p));
        rep.add("actions", grid.size());

        if (command == "steady-state") {
            phase = kSolveError;
            const JointDist inv = invariant_measure_numeric(p, init);
            files["steady_state.csv"] = state_table(inv.probs, p, "prob");
            rep.real("balance_residual", inv.residual);
            rep.real("total_mass", inv.probs.sum());
            rep.real("rho", p.lambda / p.mu);
            rep.real("xi", normalization_constant(p));
            const bool constant = std::all_of(init.rates().begin(), init.rates().end(),
                                              [&](double b) { return b == init[0]; });
            if (constant && init[0] < p.lambda) {
                const JointDist exact = joint_dist_analytic(p, init[0]);
                rep.real("product_form_total_variation", total_variation(inv.probs, exact.probs));
            }
        } else if (command == "solve-vi") {
            phase = kSolveError;
            const DiscountedSolveReport sol = value_iteration(p, cfg.tol);
            std::string conv = "iter,sup_diff\n";
            for (std::size_t k = 0; k < sol.sup_diffs.size(); ++k)
                conv += std::to_string(k + 1) + ',' + detail::fmt("%.12g", sol.sup_diffs[k]) + '\n';
            files["policy.csv"] = policy_csv(sol.policy, p);
            files["values.csv"] = state_table(sol.values, p, "value");
            files["convergence.csv"] = conv;
            rep.add("iterations", sol.iterations);
            rep.real("final_sup_diff", sol.final_sup_diff);
            rep.real("contraction_modulus", sol.contraction_modulus);
            rep.real("hjb_residual", sol.hjb_residual);
            rep.text << detail::policy_grid_text(sol.policy, p);
        } else if (command == "solve-pi") {
            phase = kSolveError;
            const DiscountedSolveReport sol = policy_iteration_discounted(p, init);
            files["policy.csv"] = policy_csv(sol.policy, p);
            files["values.csv"] = state_table(sol.values, p, "value");
            rep.add("iterations", sol.iterations);
            rep.real("contraction_modulus", sol.contraction_modulus);
            rep.real("hjb_residual", sol.hjb_residual);
            rep.text << detail::policy_grid_text(sol.policy, p);
        } else if (command == "solve-avg") {
            phase = kSolveError;
            const AverageSolveReport sol = policy_iteration_average(p, init);
            std::string conv = "iter,gain\n";
            for (std::size_t k = 0; k < sol.gains.size(); ++k)
                conv += std::to_string(k + 1) + ',' + detail::fmt("%.12g", sol.gains[k]) + '\n';
            files["policy.csv"] = policy_csv(sol.policy, p);
            files["values.csv"] = state_table(sol.gain_bias.bias, p, "value");
            files["convergence.csv"] = conv;
            rep.add("iterations", sol.iterations);
            rep.real("gain", sol.gain_bias.gain);
            rep.real("acoe_residual", sol.acoe_residual);
            rep.real("poisson_residual", sol.gain_bias.poisson_residual);
            rep.text << detail::policy_grid_text(sol.policy, p);
        } else if (command == "simulate") {
            phase = kSimulationError;
            std::string csv = "seed,avg_cost\n";
            for (std::size_t k = 0; k < cfg.seeds; ++k) {
                const std::uint64_t seed = cfg.seed + k;
                const PathAverage avg = simulate_average(init, State{0, 0}, cfg.horizon, seed, p);
                csv += std::to_string(seed) + ',' + detail::fmt("%.12g", avg.average) + '\n';
                if (k == 0) {
                    rep.real("first_seed_ci_half_width", avg.ci_half_width);
                    rep.add("first_seed_intervals", avg.intervals);
                }
            }
            files["pac_report.csv"] = csv;
            rep.add("rng", CounterRng::algorithm_id);
            rep.real("horizon", cfg.horizon);
        } else { // certify
            phase = kSolveError;
            const AverageSolveReport avg = policy_iteration_average(p, init);
            Policy certified = avg.policy;
            if (cfg.solver == "vi" || cfg.solver == "pi") {
                if (!cfg.has_alpha) throw Error(ErrorKind::ValidationError, "alpha is required for solver=" + cfg.solver);
                certified = cfg.solver == "vi" ? value_iteration(p, cfg.tol).policy
                                               : policy_iteration_discounted(p, init).policy;
            }
            phase = kSimulationError;
            const double epsilon = 0.02 * std::abs(avg.gain_bias.gain);
            PacOptions opt;
            opt.base_seed = cfg.seed;
            // A time horizon alone can hold very few jumps when the policy idles;
            // stretch it to cover the minimum event budget.
            const double horizon = std::max(cfg.horizon, kCertifyEvents / expected_event_rate(certified, p));
            const PacReport pac = pac_certify(certified, avg.gain_bias.gain, epsilon, cfg.seeds, horizon, p, opt);
            std::string csv = "seed,avg_cost\n";
            for (std::size_t k = 0; k < pac.seeds.size(); ++k)
                csv += std::to_string(pac.seeds[k]) + ',' + detail::fmt("%.12g", pac.per_seed_averages[k]) + '\n';
            files["pac_report.csv"] = csv;
            files["policy.csv"] = policy_csv(certified, p);
            rep.add("solver", cfg.solver);
            rep.add("rng", pac.rng_id);
            rep.real("target_gain", pac.target_gain);
            rep.real("epsilon", pac.epsilon);
            rep.real("horizon", horizon);
            rep.real("mean_pathwise_average", pac.mean);
            rep.add("within_epsilon", std::to_string(pac.within) + "/" + std::to_string(pac.seeds.size()));
            rep.add("pass", pac.pass ? "yes" : "no");
            if (!pac.pass) {
                result.exit_code = kSimulationError;
                result.message = "certification failed: " + std::to_string(pac.within) + " of " +
                                 std::to_string(pac.seeds.size()) + " seeds within epsilon";
            }
        }

        phase = kConfigError;
        const double secs = std::chrono::duration<double>(clock::now() - started).count();
        rep.real("wall_time_s", secs);
        files["report.txt"] = rep.text.str();
        for (const auto& [name, content] : files) {
            write_file(out_dir / name, content);
            result.artifacts.push_back(name);
        }
    } catch (const Error& e) {
        const bool config_kind = e.kind() == ErrorKind::ParseError || e.kind() == ErrorKind::ValidationError ||
                                 e.kind() == ErrorKind::IoError || e.kind() == ErrorKind::BadArgument ||
                                 e.kind() == ErrorKind::Unstable || e.kind() == ErrorKind::BadActionBounds ||
                                 e.kind() == ErrorKind::NegativeCost || e.kind() == ErrorKind::BadTruncation ||
                                 e.kind() == ErrorKind::BadDiscount;
        result.exit_code = config_kind ? kConfigError : phase;
        result.message = e.what();
    }
    return result;
}

} // namespace prodinv::cli
