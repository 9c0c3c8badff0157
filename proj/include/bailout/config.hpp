#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bailout/levy_model.hpp"
#include "bailout/map_engine.hpp"
#include "bailout/path_engine.hpp"

namespace bailout {

/// Configuration errors carry a machine-readable code first.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& code, const std::string& what)
        : std::runtime_error(code + ": " + what) {}
};

enum class Command {
    solve_single,
    solve_map,
    g_curve,
    sweep_barrier,
    oracle_check,
    paths,
};

inline Command parse_command(const std::string& name) {
    if (name == "solve-single") return Command::solve_single;
    if (name == "solve-map") return Command::solve_map;
    if (name == "g-curve") return Command::g_curve;
    if (name == "sweep-barrier") return Command::sweep_barrier;
    if (name == "oracle-check") return Command::oracle_check;
    if (name == "paths") return Command::paths;
    throw ConfigError("CONFIG_UNKNOWN_COMMAND", name);
}

inline const char* to_string(Command c) {
    switch (c) {
        case Command::solve_single: return "solve-single";
        case Command::solve_map: return "solve-map";
        case Command::g_curve: return "g-curve";
        case Command::sweep_barrier: return "sweep-barrier";
        case Command::oracle_check: return "oracle-check";
        case Command::paths: return "paths";
    }
    return "?";
}

struct McConfig {
    std::uint64_t seed = 12345;
    std::size_t n_paths = 10000;       // M, per the reference experiment
    double dt = 0.05;
    double horizon = 50.0;
    std::size_t byte_budget = std::size_t{1} << 30;
};

struct SolverConfig {
    double tol_b = 1e-3;
    std::size_t max_iter = 20;
    double b_max = 1e3;
};

struct GridConfig {
    std::size_t knots = 101;
    double span = 0.0;  ///< 0 = auto: 5 * max(b_guess, 1)
    double growth = 1.04;
};

struct SweepConfig {
    std::size_t count = 25;
    double lo_factor = 0.3;
    double hi_factor = 2.0;
    std::vector<double> fixed;  ///< barrier vector override; empty = iterate first
};

struct GCurveConfig {
    double b_lo = 0.0;
    double b_hi = 3.0;
    std::size_t count = 40;
};

/// Parsed run configuration; field groups mirror the module types.
struct RunConfig {
    Command command = Command::solve_single;
    McConfig mc;
    SolverConfig solver;
    GridConfig grid;
    SweepConfig sweep;
    GCurveConfig gcurve;
    std::size_t scan_x_count = 21;
    std::size_t scan_b_count = 7;

    std::optional<ProblemSpec> problem;  // single-regime commands
    std::optional<MapModel> map;         // solve-map / sweep-barrier
    std::vector<double> b0;              // initial barrier guess per state

    std::string out_dir = "out";
    int threads = 1;
    bool write_csv = true;
    bool write_json = true;

    std::map<std::string, std::string> echo;  ///< raw key/value pairs, for summary.json
};

namespace detail {

class KvReader {
public:
    explicit KvReader(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    throw ConfigError("CONFIG_PARSE",
                                      "line " + std::to_string(lineno) + ": expected key = value");
                continue;
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty() || value.empty())
                throw ConfigError("CONFIG_PARSE",
                                  "line " + std::to_string(lineno) + ": empty key or value");
            if (!kv_.emplace(key, value).second)
                throw ConfigError("CONFIG_DUPLICATE_KEY", key);
        }
    }

    std::optional<std::string> take(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return std::nullopt;
        std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    std::string require(const std::string& key) {
        auto v = take(key);
        if (!v) throw ConfigError("CONFIG_MISSING_KEY", key);
        return *v;
    }

    double take_double(const std::string& key, double fallback) {
        auto v = take(key);
        return v ? to_double(key, *v) : fallback;
    }

    double require_double(const std::string& key) { return to_double(key, require(key)); }

    std::size_t take_size(const std::string& key, std::size_t fallback) {
        auto v = take(key);
        if (!v) return fallback;
        const double d = to_double(key, *v);
        if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
            throw ConfigError("CONFIG_BAD_VALUE", key + " must be a non-negative integer");
        return static_cast<std::size_t>(d);
    }

    std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
        auto v = take(key);
        if (!v) return fallback;
        try {
            return std::stoull(*v);
        } catch (...) {
            throw ConfigError("CONFIG_BAD_VALUE", key + " must be an unsigned integer");
        }
    }

    /// Unconsumed keys are hard errors: silent typos in solver tolerances are
    /// the dominant failure mode of numeric CLIs.
    void finish() const {
        if (kv_.empty()) return;
        std::string keys;
        for (const auto& [k, v] : kv_) keys += (keys.empty() ? "" : ", ") + k;
        throw ConfigError("CONFIG_UNKNOWN_KEY", keys);
    }

    void record_echo(std::map<std::string, std::string>& echo) const { echo = seen_; }

    void snapshot() { seen_ = kv_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (...) {
            throw ConfigError("CONFIG_BAD_VALUE", key + " = " + v + " is not a number");
        }
    }

    std::map<std::string, std::string> kv_;
    std::map<std::string, std::string> seen_;
};

inline JumpSizeDist parse_jump_dist(KvReader& kv, const std::string& prefix) {
    const std::string kind = kv.require(prefix + ".dist");
    if (kind == "exponential") return ExponentialSize{kv.require_double(prefix + ".mean")};
    if (kind == "weibull")
        return WeibullSize{kv.require_double(prefix + ".shape"),
                           kv.require_double(prefix + ".scale")};
    if (kind == "half_normal") return HalfNormalSize{kv.require_double(prefix + ".scale")};
    if (kind == "fixed") return FixedSize{kv.require_double(prefix + ".value")};
    throw ConfigError("CONFIG_BAD_VALUE", prefix + ".dist = " + kind);
}

inline LevyModel parse_model(KvReader& kv, const std::string& prefix) {
    LevyModel model;
    model.drift = kv.take_double(prefix + ".drift", 0.0);
    model.sigma = kv.take_double(prefix + ".sigma", 0.0);
    const std::size_t n_jumps = kv.take_size(prefix + ".jumps", 0);
    for (std::size_t k = 0; k < n_jumps; ++k) {
        const std::string jp = prefix + ".jump." + std::to_string(k);
        JumpComponent jump;
        const std::string dir = kv.require(jp + ".direction");
        if (dir == "up") {
            jump.direction = JumpDirection::up;
        } else if (dir == "down") {
            jump.direction = JumpDirection::down;
        } else {
            throw ConfigError("CONFIG_BAD_VALUE", jp + ".direction = " + dir);
        }
        jump.rate = kv.require_double(jp + ".rate");
        jump.size_dist = parse_jump_dist(kv, jp);
        model.jumps.push_back(jump);
    }
    return model;
}

inline PayoffSpec parse_payoff(KvReader& kv) {
    const std::string kind = kv.take("payoff.kind").value_or("zero");
    if (kind == "zero") return zero_payoff();
    if (kind == "linear") return linear_payoff(kv.take_double("payoff.slope", 1.0));
    if (kind == "capped_linear")
        return capped_linear_payoff(kv.take_double("payoff.slope", 1.0),
                                    kv.require_double("payoff.cap"));
    throw ConfigError("CONFIG_BAD_VALUE", "payoff.kind = " + kind);
}

inline SwitchJumpDist parse_switch_jump(KvReader& kv, const std::string& prefix) {
    const std::string kind = kv.take(prefix + ".kind").value_or("none");
    if (kind == "none") return PointMassJump{0.0};
    if (kind == "point") return PointMassJump{kv.require_double(prefix + ".value")};
    if (kind == "gaussian")
        return GaussianJump{kv.take_double(prefix + ".mean", 0.0),
                            kv.require_double(prefix + ".sd")};
    if (kind == "exp_up")
        return SignedExponentialJump{kv.require_double(prefix + ".mean"), JumpDirection::up};
    if (kind == "exp_down")
        return SignedExponentialJump{kv.require_double(prefix + ".mean"), JumpDirection::down};
    throw ConfigError("CONFIG_BAD_VALUE", prefix + ".kind = " + kind);
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("CONFIG_BAD_VALUE", key + ": bad list element '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("CONFIG_BAD_VALUE", key + ": empty list");
    return out;
}

} // namespace detail

/// Parse the flat key = value config for one command. Unknown keys are hard
/// errors; units are documented in the README schema table.
inline RunConfig parse_config(const std::string& text, Command command) {
    detail::KvReader kv(text);
    kv.snapshot();
    RunConfig cfg;
    cfg.command = command;
    kv.record_echo(cfg.echo);

    cfg.mc.seed = kv.take_u64("mc.seed", cfg.mc.seed);
    cfg.mc.n_paths = kv.take_size("mc.n_paths", cfg.mc.n_paths);
    cfg.mc.dt = kv.take_double("mc.dt", cfg.mc.dt);
    cfg.mc.horizon = kv.take_double("mc.horizon", cfg.mc.horizon);
    cfg.mc.byte_budget = kv.take_size("mc.byte_budget", cfg.mc.byte_budget);
    if (cfg.mc.n_paths == 0) throw ConfigError("CONFIG_BAD_VALUE", "mc.n_paths must be > 0");
    try {
        steps_for_horizon(cfg.mc.dt, cfg.mc.horizon);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("CONFIG_BAD_VALUE", std::string("mc.dt/mc.horizon: ") + e.what());
    }
    cfg.solver.tol_b = kv.take_double("solver.tol_b", cfg.solver.tol_b);
    cfg.solver.max_iter = kv.take_size("solver.max_iter", cfg.solver.max_iter);
    cfg.solver.b_max = kv.take_double("solver.b_max", cfg.solver.b_max);
    cfg.grid.knots = kv.take_size("grid.knots", cfg.grid.knots);
    cfg.grid.span = kv.take_double("grid.span", cfg.grid.span);
    cfg.grid.growth = kv.take_double("grid.growth", cfg.grid.growth);

    const std::string formats = kv.take("output.formats").value_or("csv,json");
    cfg.write_csv = formats.find("csv") != std::string::npos;
    cfg.write_json = formats.find("json") != std::string::npos;
    cfg.out_dir = kv.take("output.directory").value_or(cfg.out_dir);

    const bool is_map = command == Command::solve_map || command == Command::sweep_barrier;
    if (is_map) {
        const std::size_t n_states = kv.take_size("map.states", 2);
        MapModel map;
        map.beta = kv.take_double("map.beta", 1.2);
        map.models.resize(n_states);
        map.q_disc.resize(n_states);
        map.q.assign(n_states, std::vector<double>(n_states, 0.0));
        map.switch_jump.assign(n_states, std::vector<SwitchJumpDist>(n_states, PointMassJump{}));
        for (std::size_t i = 0; i < n_states; ++i) {
            const std::string sp = "state." + std::to_string(i);
            map.models[i] = detail::parse_model(kv, sp);
            map.q_disc[i] = kv.require_double(sp + ".qdisc");
            for (std::size_t j = 0; j < n_states; ++j) {
                if (j == i) continue;
                map.q[i][j] = kv.take_double(
                    "q." + std::to_string(i) + "." + std::to_string(j), 0.0);
                map.switch_jump[i][j] = detail::parse_switch_jump(
                    kv, "switch." + std::to_string(i) + "." + std::to_string(j));
            }
        }
        cfg.map = std::move(map);
        if (auto b0 = kv.take("map.b0")) {
            cfg.b0 = detail::parse_double_list("map.b0", *b0);
            if (cfg.b0.size() != n_states)
                throw ConfigError("CONFIG_BAD_VALUE", "map.b0 needs one entry per state");
        } else {
            cfg.b0.assign(n_states, 0.5);
        }
        cfg.sweep.count = kv.take_size("sweep.count", cfg.sweep.count);
        cfg.sweep.lo_factor = kv.take_double("sweep.lo_factor", cfg.sweep.lo_factor);
        cfg.sweep.hi_factor = kv.take_double("sweep.hi_factor", cfg.sweep.hi_factor);
        if (auto fixed = kv.take("sweep.fixed")) {
            cfg.sweep.fixed = detail::parse_double_list("sweep.fixed", *fixed);
            if (cfg.sweep.fixed.size() != n_states)
                throw ConfigError("CONFIG_BAD_VALUE", "sweep.fixed needs one entry per state");
        }
    } else {
        ProblemSpec spec;
        spec.model = detail::parse_model(kv, "model");
        spec.beta = kv.take_double("problem.beta", spec.beta);
        spec.q = kv.take_double("problem.q", spec.q);
        spec.r = kv.take_double("problem.r", spec.r);
        spec.payoff = detail::parse_payoff(kv);
        cfg.problem = std::move(spec);
        cfg.gcurve.b_lo = kv.take_double("gcurve.b_lo", cfg.gcurve.b_lo);
        cfg.gcurve.b_hi = kv.take_double("gcurve.b_hi", cfg.gcurve.b_hi);
        cfg.gcurve.count = kv.take_size("gcurve.count", cfg.gcurve.count);
        cfg.scan_x_count = kv.take_size("scan.x_count", cfg.scan_x_count);
        cfg.scan_b_count = kv.take_size("scan.b_count", cfg.scan_b_count);
    }

    kv.finish();
    return cfg;
}

} // namespace bailout
