#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bailout/config.hpp"
#include "bailout/csv.hpp"
#include "bailout/diffusion_oracle.hpp"
#include "bailout/map_engine.hpp"
#include "bailout/path_engine.hpp"
#include "bailout/single_solver.hpp"

namespace bailout {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitSolver = 3;

namespace detail {

using nlohmann::json;

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix64(master + StepRng::kGamma * (stream + 0x101));
}

inline json violations_json(const std::vector<Violation>& vs) {
    json arr = json::array();
    for (const auto& v : vs) arr.push_back({{"code", to_string(v.code)}, {"message", v.message}});
    return arr;
}

inline void write_summary(const RunConfig& cfg, json& summary, int exit_code) {
    summary["command"] = to_string(cfg.command);
    summary["config"] = cfg.echo;
    summary["seed"] = cfg.mc.seed;
    summary["exit_code"] = exit_code;
    if (!cfg.write_json) return;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(std::filesystem::path(cfg.out_dir) / "summary.json",
                      std::ios::binary);
    out << summary.dump(2) << '\n';
}

inline json g_estimate_json(const GEstimate& g) {
    return {{"b", g.b},
            {"value", g.value},
            {"ci_half", g.half_width},
            {"n_paths", g.n_paths},
            {"censored_fraction", g.censored_fraction},
            {"horizon_warning", g.horizon_warning},
            {"truncation_bound", g.truncation_bound}};
}

class StageTimer {
public:
    explicit StageTimer(const char* name) : name_(name), start_(clock::now()) {}
    ~StageTimer() {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            clock::now() - start_)
                            .count();
        std::cerr << "[bailout] " << name_ << ": " << ms << " ms\n";
    }

private:
    using clock = std::chrono::steady_clock;
    const char* name_;
    clock::time_point start_;
};

inline int run_solve_single(const RunConfig& cfg) {
    const ProblemSpec& spec = *cfg.problem;
    json summary;
    auto violations = validate_model(spec.model);
    for (auto& v : validate_problem(spec)) violations.push_back(v);
    summary["violations"] = violations_json(violations);
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }

    SolverOptions opts;
    opts.b_max = cfg.solver.b_max;
    opts.estimator.n_threads = cfg.threads;
    PathBatch batch;
    {
        StageTimer t("simulate_batch");
        batch = simulate_batch(spec.model, cfg.mc.dt, cfg.mc.horizon, cfg.mc.n_paths,
                               cfg.mc.seed, {cfg.mc.byte_budget}, cfg.threads);
    }
    BarrierSolution sol;
    {
        StageTimer t("solve_bstar");
        sol = solve_bstar(spec, batch, cfg.solver.tol_b, opts);
    }
    summary["b_star"] = sol.b_star;
    summary["bracket"] = {{"lo", sol.bracket.lo}, {"hi", sol.bracket.hi}};
    summary["g_at_bstar"] = g_estimate_json(sol.g_at_bstar);
    if (sol.zero_barrier_reason) summary["zero_barrier_reason"] = *sol.zero_barrier_reason;
    summary["work"] = {{"n_g_evals", sol.n_g_evals},
                       {"n_paths", batch.n_paths},
                       {"n_steps", batch.n_steps}};
    summary["truncation_bounds"] = {{"g", sol.g_at_bstar.truncation_bound}};

    if (sol.status != SolveStatus::ok) {
        summary["error"] = "NO_UPPER_BRACKET";
        write_summary(cfg, summary, kExitSolver);
        return kExitSolver;
    }

    // Value curve at the solved barrier.
    const double x_hi = 2.0 * std::max(sol.b_star, 1.0);
    std::vector<double> x_grid(cfg.scan_x_count);
    for (std::size_t i = 0; i < cfg.scan_x_count; ++i)
        x_grid[i] = x_hi * static_cast<double>(i) / static_cast<double>(cfg.scan_x_count - 1);
    double value_truncation = 0.0;
    if (cfg.write_csv) {
        std::filesystem::create_directories(cfg.out_dir);
        CsvWriter csv((std::filesystem::path(cfg.out_dir) / "value_curve.csv").string(),
                      {"x", "v_hat", "ci_half"});
        for (const double x : x_grid) {
            const ValueEstimate est =
                estimate_value(spec, std::max(sol.b_star, 1e-12), x, batch, opts.estimator);
            value_truncation = std::max(value_truncation, est.truncation_bound);
            csv.row({x, est.value, est.half_width});
        }
        summary["truncation_bounds"]["value"] = value_truncation;
    }

    // CRN value surface over barriers around b* (the optimality scan).
    if (cfg.write_csv && cfg.scan_b_count > 1 && sol.b_star > 0.0) {
        std::vector<double> b_grid(cfg.scan_b_count);
        for (std::size_t i = 0; i < cfg.scan_b_count; ++i)
            b_grid[i] = sol.b_star * (0.5 + static_cast<double>(i) /
                                                static_cast<double>(cfg.scan_b_count - 1));
        const ScanResult scan =
            optimality_scan(spec, batch, b_grid, x_grid, sol.b_star, opts.estimator);
        CsvWriter csv((std::filesystem::path(cfg.out_dir) / "value_surface.csv").string(),
                      {"b", "x", "v_hat", "ci_half", "is_argmax"});
        for (const auto& row : scan.rows)
            csv.row({row.b, row.x, row.v_hat, row.ci_half,
                     static_cast<long long>(row.is_argmax ? 1 : 0)});
        summary["scan"] = {{"max_violation", scan.max_violation},
                           {"argmax_b", scan.argmax_b}};
    }
    write_summary(cfg, summary, kExitOk);
    return kExitOk;
}

inline int run_g_curve(const RunConfig& cfg) {
    const ProblemSpec& spec = *cfg.problem;
    json summary;
    auto violations = validate_model(spec.model);
    for (auto& v : validate_problem(spec)) violations.push_back(v);
    summary["violations"] = violations_json(violations);
    if (cfg.gcurve.count == 0) {
        summary["error"] = "CONFIG_EMPTY_GRID";
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }

    EstimatorOptions eopts;
    eopts.n_threads = cfg.threads;
    const PathBatch batch = simulate_batch(spec.model, cfg.mc.dt, cfg.mc.horizon,
                                           cfg.mc.n_paths, cfg.mc.seed, {cfg.mc.byte_budget},
                                           cfg.threads);
    double trunc = 0.0;
    if (cfg.write_csv) {
        std::filesystem::create_directories(cfg.out_dir);
        CsvWriter csv((std::filesystem::path(cfg.out_dir) / "g_curve.csv").string(),
                      {"b", "g_hat", "ci_half"});
        for (std::size_t i = 0; i < cfg.gcurve.count; ++i) {
            const double b =
                cfg.gcurve.b_lo + (cfg.gcurve.b_hi - cfg.gcurve.b_lo) *
                                      static_cast<double>(i) /
                                      static_cast<double>(std::max<std::size_t>(1, cfg.gcurve.count - 1));
            const GEstimate g = estimate_g(spec, b, batch, std::nullopt, eopts);
            trunc = std::max(trunc, g.truncation_bound);
            csv.row({b, g.value, g.half_width});
        }
    }
    summary["truncation_bounds"] = {{"g", trunc}};
    summary["work"] = {{"n_paths", batch.n_paths}, {"n_steps", batch.n_steps}};
    write_summary(cfg, summary, kExitOk);
    return kExitOk;
}

struct MapRunPieces {
    std::vector<PathBatch> batches;
    MapSolverOptions opts;
    std::vector<double> knots;
};

inline MapRunPieces map_pieces(const RunConfig& cfg) {
    const MapModel& model = *cfg.map;
    MapRunPieces pieces;
    pieces.opts.tol_b = cfg.solver.tol_b;
    pieces.opts.b_max = cfg.solver.b_max;
    pieces.opts.estimator.n_threads = cfg.threads;
    double b_guess = 1.0;
    for (double b : cfg.b0) b_guess = std::max(b_guess, b);
    const double span = cfg.grid.span > 0.0 ? cfg.grid.span : 5.0 * b_guess;
    pieces.knots = make_knot_grid(cfg.grid.knots, span, cfg.grid.growth);
    for (std::size_t i = 0; i < model.n_states(); ++i)
        pieces.batches.push_back(simulate_batch(model.models[i], cfg.mc.dt, cfg.mc.horizon,
                                                cfg.mc.n_paths, derive_seed(cfg.mc.seed, i),
                                                {cfg.mc.byte_budget}, cfg.threads));
    return pieces;
}

inline int run_solve_map(const RunConfig& cfg) {
    const MapModel& model = *cfg.map;
    json summary;
    const auto violations = validate_map_model(model);
    summary["violations"] = violations_json(violations);
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }

    MapRunPieces pieces = map_pieces(cfg);
    const ValueGrid f0 = affine_grid(model.n_states(), pieces.knots);
    IterateResult result;
    {
        StageTimer t("fixed_point_iterate");
        result = fixed_point_iterate(model, f0, cfg.solver.tol_b, cfg.solver.max_iter,
                                     pieces.batches, pieces.opts, cfg.b0);
    }

    summary["contraction_k"] = result.trace.contraction_k;
    if (result.grid_too_small)
        summary["warnings"] = {"a barrier exceeded the knot span; raise grid.span"};
    summary["b_star"] = result.b_star;
    summary["iterations"] = result.trace.rows.size() - 1;
    summary["max_se"] = result.max_se;
    summary["residuals"] = {
        {"final_barrier_move", result.trace.rows.back().barrier_move},
        {"final_sup_step", result.trace.rows.back().sup_step}};
    json trunc = json::object();
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        trunc["g_state_" + std::to_string(i)] =
            result.final_solutions.empty()
                ? 0.0
                : result.final_solutions[i].g_at_bstar.truncation_bound;
        // value-family bound: e^{-alpha T}((1+beta)(E|X1| + b) + q_i sup|hat f|)/alpha
        const double alpha = model.alpha(i);
        double ex1 = std::abs(model.models[i].drift) +
                     model.models[i].sigma * kHalfNormalMeanFactor;
        for (const auto& j : model.models[i].jumps) ex1 += j.rate * jump_size_mean(j.size_dist);
        const double b = result.b_star[i];
        const double wmax = std::abs(result.value.eval(i, b)) +
                            std::abs(result.value.values[i][0]);
        trunc["value_state_" + std::to_string(i)] =
            std::exp(-alpha * cfg.mc.horizon) *
            ((1.0 + model.beta) * (ex1 + b) + model.switch_rate(i) * wmax) / alpha;
    }
    summary["truncation_bounds"] = trunc;
    std::size_t g_evals = 0;
    for (const auto& s : result.final_solutions) g_evals += s.n_g_evals;
    summary["work"] = {{"n_paths", cfg.mc.n_paths},
                       {"n_steps", pieces.batches.front().n_steps},
                       {"final_iteration_g_evals", g_evals},
                       {"knots", pieces.knots.size()}};

    if (cfg.write_csv) {
        std::filesystem::create_directories(cfg.out_dir);
        {
            CsvWriter csv((std::filesystem::path(cfg.out_dir) / "trace.csv").string(),
                          {"n", "state", "b", "sup_step", "barrier_move"});
            for (const auto& row : result.trace.rows)
                for (std::size_t i = 0; i < row.b_vec.size(); ++i)
                    csv.row({static_cast<long long>(row.n), static_cast<long long>(i),
                             row.b_vec[i], row.sup_step, row.barrier_move});
        }
        {
            CsvWriter csv((std::filesystem::path(cfg.out_dir) / "value_grid.csv").string(),
                          {"state", "x", "v_hat"});
            for (std::size_t i = 0; i < model.n_states(); ++i)
                for (std::size_t k = 0; k < result.value.knots.size(); ++k)
                    csv.row({static_cast<long long>(i), result.value.knots[k],
                             result.value.values[i][k]});
        }
    }

    const int code = result.status == IterateStatus::ok ? kExitOk : kExitSolver;
    if (result.status != IterateStatus::ok) summary["error"] = "MAX_ITER_EXCEEDED";
    write_summary(cfg, summary, code);
    return code;
}

inline int run_sweep_barrier(const RunConfig& cfg) {
    const MapModel& model = *cfg.map;
    json summary;
    const auto violations = validate_map_model(model);
    summary["violations"] = violations_json(violations);
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }
    if (cfg.sweep.count == 0) {
        summary["error"] = "CONFIG_EMPTY_GRID";
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }

    MapRunPieces pieces = map_pieces(cfg);
    std::vector<double> fixed = cfg.sweep.fixed;
    if (fixed.empty()) {
        StageTimer t("fixed_point_iterate");
        const ValueGrid f0 = affine_grid(model.n_states(), pieces.knots);
        IterateResult result = fixed_point_iterate(model, f0, cfg.solver.tol_b,
                                                   cfg.solver.max_iter, pieces.batches,
                                                   pieces.opts, cfg.b0);
        if (result.status != IterateStatus::ok) {
            summary["error"] = "MAX_ITER_EXCEEDED";
            write_summary(cfg, summary, kExitSolver);
            return kExitSolver;
        }
        fixed = result.b_star;
    }
    summary["fixed_barriers"] = fixed;

    std::vector<MapBatch> map_batches;
    for (std::size_t i = 0; i < model.n_states(); ++i)
        map_batches.push_back(simulate_map(model, cfg.mc.dt, cfg.mc.horizon, cfg.mc.n_paths,
                                           derive_seed(cfg.mc.seed, 500 + i), i,
                                           {cfg.mc.byte_budget}, cfg.threads));

    json argmax = json::array();
    if (cfg.write_csv) std::filesystem::create_directories(cfg.out_dir);
    std::optional<CsvWriter> csv;
    if (cfg.write_csv)
        csv.emplace((std::filesystem::path(cfg.out_dir) / "sweep.csv").string(),
                    std::initializer_list<std::string>{"state", "b_swept", "b_fixed_other",
                                                       "v_hat", "ci_half", "is_argmax"});
    StageTimer t("sweep");
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        const double lo = cfg.sweep.lo_factor * fixed[i];
        const double hi = cfg.sweep.hi_factor * fixed[i];
        std::vector<double> bs(cfg.sweep.count);
        std::vector<double> vals(cfg.sweep.count), cis(cfg.sweep.count);
        for (std::size_t k = 0; k < cfg.sweep.count; ++k) {
            bs[k] = lo + (hi - lo) * static_cast<double>(k) /
                             static_cast<double>(cfg.sweep.count - 1);
            std::vector<double> b_vec = fixed;
            b_vec[i] = bs[k];
            const ValueEstimate est =
                estimate_map_value(model, b_vec, 0.0, map_batches[i], pieces.opts.estimator);
            vals[k] = est.value;
            cis[k] = est.half_width;
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < cfg.sweep.count; ++k)
            if (vals[k] > vals[best]) best = k;
        argmax.push_back({{"state", i}, {"b_argmax", bs[best]}, {"b_fixed", fixed[i]}});
        if (csv) {
            // the "other" column is meaningful for the two-panel case; with
            // more states it reports the first non-swept barrier
            const double other = fixed[i == 0 ? (model.n_states() > 1 ? 1 : 0) : 0];
            for (std::size_t k = 0; k < cfg.sweep.count; ++k)
                csv->row({static_cast<long long>(i), bs[k], other, vals[k], cis[k],
                          static_cast<long long>(k == best ? 1 : 0)});
        }
    }
    summary["argmax"] = argmax;
    summary["work"] = {{"n_paths", cfg.mc.n_paths}, {"sweep_count", cfg.sweep.count}};
    {
        double min_q = model.q_disc[0];
        double max_b = 0.0;
        double max_ex1 = 0.0;
        for (std::size_t i = 0; i < model.n_states(); ++i) {
            min_q = std::min(min_q, model.q_disc[i]);
            max_b = std::max(max_b, fixed[i]);
            double ex1 = std::abs(model.models[i].drift) +
                         model.models[i].sigma * kHalfNormalMeanFactor;
            for (const auto& j : model.models[i].jumps)
                ex1 += j.rate * jump_size_mean(j.size_dist);
            max_ex1 = std::max(max_ex1, ex1);
        }
        summary["truncation_bounds"] = {
            {"map_value", std::exp(-min_q * cfg.mc.horizon) * (1.0 + model.beta) *
                              (max_ex1 + max_b) / min_q}};
    }
    write_summary(cfg, summary, kExitOk);
    return kExitOk;
}

inline int run_oracle_check(const RunConfig& cfg) {
    const ProblemSpec& spec = *cfg.problem;
    json summary;
    auto violations = validate_model(spec.model);
    for (auto& v : validate_problem(spec)) violations.push_back(v);
    summary["violations"] = violations_json(violations);
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }
    if (!(spec.model.sigma > 0.0) || !spec.model.jumps.empty()) {
        summary["error"] = "ORACLE_REQUIRES_PURE_DIFFUSION";
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }

    const DiffusionSpec dspec{spec.model.drift, spec.model.sigma, spec.alpha()};
    const double b_oracle = oracle_bstar(dspec, spec.beta, spec.r, spec.payoff.w_prime_plus);
    const double b_smooth = oracle_bstar_smooth_fit(dspec, spec.beta, spec.r, spec.payoff.w);

    EstimatorOptions eopts;
    eopts.n_threads = cfg.threads;
    SolverOptions sopts;
    sopts.b_max = cfg.solver.b_max;
    sopts.estimator = eopts;
    const PathBatch batch = simulate_batch(spec.model, cfg.mc.dt, cfg.mc.horizon,
                                           cfg.mc.n_paths, cfg.mc.seed, {cfg.mc.byte_budget},
                                           cfg.threads);
    const BarrierSolution mc = solve_bstar(spec, batch, cfg.solver.tol_b, sopts);

    const HjbSolution bvp = solve_hjb_ode(dspec, spec.beta, spec.r, spec.payoff.w, b_oracle);
    double max_rel = 0.0;
    double value_truncation = 0.0;
    if (cfg.write_csv) {
        std::filesystem::create_directories(cfg.out_dir);
        CsvWriter csv((std::filesystem::path(cfg.out_dir) / "oracle_compare.csv").string(),
                      {"x", "v_bvp", "v_mc", "ci_half", "rel_err"});
        for (std::size_t i = 1; i + 1 < cfg.scan_x_count; ++i) {
            const double x = b_oracle * static_cast<double>(i) /
                             static_cast<double>(cfg.scan_x_count - 1);
            const ValueEstimate est = estimate_value(spec, b_oracle, x, batch, eopts);
            const double ref = bvp.at(x);
            const double rel = std::abs(est.value - ref) / std::max(1e-12, std::abs(ref));
            max_rel = std::max(max_rel, rel);
            value_truncation = std::max(value_truncation, est.truncation_bound);
            csv.row({x, ref, est.value, est.half_width, rel});
        }
    }
    summary["b_star_oracle"] = b_oracle;
    summary["b_star_smooth_fit"] = b_smooth;
    summary["b_star_mc"] = mc.b_star;
    summary["oracle_methods_gap"] = std::abs(b_oracle - b_smooth);
    summary["mc_oracle_gap"] = std::abs(mc.b_star - b_oracle);
    summary["max_value_rel_err"] = max_rel;
    summary["bvp_residual_norm"] = bvp.residual_norm;
    summary["truncation_bounds"] = {{"g", mc.g_at_bstar.truncation_bound},
                                    {"value", value_truncation}};
    write_summary(cfg, summary, kExitOk);
    return kExitOk;
}

inline int run_paths(const RunConfig& cfg) {
    const ProblemSpec& spec = *cfg.problem;
    json summary;
    const auto violations = validate_model(spec.model);
    summary["violations"] = violations_json(violations);
    if (!violations.empty()) {
        write_summary(cfg, summary, kExitValidation);
        return kExitValidation;
    }
    const PathBatch batch = simulate_batch(spec.model, cfg.mc.dt, cfg.mc.horizon,
                                           cfg.mc.n_paths, cfg.mc.seed, {cfg.mc.byte_budget},
                                           cfg.threads);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / "paths.bin";
    {
        std::ofstream out(path, std::ios::binary);
        write_batch(out, batch);
    }
    std::vector<double> terminal(batch.n_paths);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        double s = 0.0;
        for (double dx : batch.path(p)) s += dx;
        terminal[p] = s;
    }
    const MeanCi ci = mean_ci(terminal);
    summary["file"] = path.string();
    summary["bytes"] = batch.increments.size() * sizeof(double) + 36;
    summary["terminal_mean"] = ci.mean;
    summary["terminal_se"] = ci.se;
    summary["work"] = {{"n_paths", batch.n_paths}, {"n_steps", batch.n_steps}};
    write_summary(cfg, summary, kExitOk);
    return kExitOk;
}

} // namespace detail

/// Execute one parsed run; returns the process exit code (0 success,
/// 2 validation failure, 3 solver failure). All diagnostics also land in
/// summary.json.
inline int run(const RunConfig& cfg) {
    switch (cfg.command) {
        case Command::solve_single: return detail::run_solve_single(cfg);
        case Command::solve_map: return detail::run_solve_map(cfg);
        case Command::g_curve: return detail::run_g_curve(cfg);
        case Command::sweep_barrier: return detail::run_sweep_barrier(cfg);
        case Command::oracle_check: return detail::run_oracle_check(cfg);
        case Command::paths: return detail::run_paths(cfg);
    }
    return kExitValidation;
}

} // namespace bailout
