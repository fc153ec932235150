#ifndef MFPO_EXPERIMENTS_HPP
#define MFPO_EXPERIMENTS_HPP

#include "codebook.hpp"
#include "config.hpp"
#include "core.hpp"
#include "dp.hpp"
#include "json_io.hpp"
#include "lq_analytic.hpp"
#include "model.hpp"
#include "problem.hpp"
#include "quantize.hpp"
#include "simkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mfpo {

struct RunOptions {
    std::optional<OptimizerMode> mode;
    std::optional<std::vector<std::size_t>> paths;
    /// Lloyd grids keyed by (d, N), as written by quantize-cache.
    const json* grid_cache = nullptr;
    std::ostream* log = nullptr;
};

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::optional<Grid> cached_grid(const json* cache, Eigen::Index d, std::size_t n) {
    if (!cache || !cache->contains("grids")) return std::nullopt;
    for (const auto& e : cache->at("grids")) {
        if (e.at("d").get<Eigen::Index>() == d && e.at("N").get<std::size_t>() == n) {
            return grid_from_json(e.at("grid"));
        }
    }
    return std::nullopt;
}

inline Grid standard_grid(Eigen::Index d, std::size_t n, const LloydOptions& lloyd, const json* cache) {
    if (auto g = cached_grid(cache, d, n)) return *g;
    return lloyd_gaussian(d, n, lloyd).grid;
}

inline void log_line(const RunOptions& o, const std::string& s) {
    if (o.log) *o.log << s << '\n';
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

// ---------------------------------------------------------------------------
// LQ benchmark
// ---------------------------------------------------------------------------

struct LQRow {
    std::size_t N = 0;
    std::string status = "ok";
    double w_tilde = 0.0, w0 = 0.0, rel_error = 0.0;
    std::string projection;  // lossless | lossy
    std::string optimizer;
    std::size_t codebook_size = 0;
    std::vector<std::size_t> reachable;
    bool unconverged = false;
    double seconds = 0.0;
};

struct LQBenchmarkReport {
    double w0 = 0.0;
    std::vector<LQRow> rows;
};

/// For each grid size: Lloyd grid of N(0, I_d) for X and Y at every time, Monte-Carlo
/// kernels, forward codebook, quantized DP; compared with the Riccati value.
inline LQBenchmarkReport run_lq_benchmark(const LQExperimentConfig& cfg, std::uint64_t seed,
                                          const RunOptions& ro = {}) {
    LQBenchmarkReport rep;
    const RiccatiSolution sol = riccati_backward(cfg.params);
    rep.w0 = w0_value(sol, lq_initial_moments(cfg.params));
    const ModelSpec model = lq_model(cfg.params, cfg.controls);
    LloydOptions lloyd = cfg.lloyd;
    lloyd.seed = seed;
    OptimizerOptions optimizer = cfg.optimizer;
    if (ro.mode) optimizer.mode = *ro.mode;

    for (std::size_t N : cfg.grid_sizes) {
        LQRow row;
        row.N = N;
        row.w0 = rep.w0;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Grid g = detail::standard_grid(cfg.params.dim(), N, lloyd, ro.grid_cache);
            const QuantizedGrids grids = QuantizedGrids::uniform(g, g, cfg.params.horizon);
            QuantizationOptions qo;
            qo.n_mc = cfg.n_mc;
            qo.initial_samples = cfg.initial_samples;
            qo.seed = stream_seed(seed, {10, N});
            const QuantizedProblem prob = make_quantized_problem(model, grids, qo);
            CodebookOptions co = cfg.codebook;
            co.seed = stream_seed(seed, {11, N});
            const CodebookBuild cb = codebook_build(prob, co);
            QuantizedDPOptions dpo;
            dpo.optimizer = optimizer;
            const QuantizedDPResult dp = quantized_dp(prob, cb.codebook, dpo);
            row.w_tilde = dp.value;
            row.rel_error = std::abs(dp.value - rep.w0) / std::abs(rep.w0);
            row.projection = cb.lossless ? "lossless" : "lossy";
            row.optimizer = to_string(dp.mode_used);
            row.codebook_size = cb.codebook.size();
            row.reachable = cb.reachable;
            row.unconverged = dp.unconverged;
        } catch (const BudgetExceeded& e) {
            row.status = std::string("skipped: ") + e.what();
        }
        row.seconds = detail::seconds_since(t0);
        detail::log_line(ro, "bench-lq N=" + std::to_string(N) + " W~0=" + format_double(row.w_tilde) +
                                 " W0=" + format_double(row.w0) + " rel=" + format_double(row.rel_error) + " [" +
                                 row.status + ", " + format_double(row.seconds) + " s]");
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Mean-variance portfolio
// ---------------------------------------------------------------------------

struct PortfolioColumn {
    std::string strategy;
    double mean = 0.0, variance = 0.0, v0 = 0.0, v0_se = 0.0;
};

struct PortfolioTable {
    double gamma = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t sim_seed = 0;
    std::vector<PortfolioColumn> columns;  // Proposed, Buy and Hold, Trending
    /// V0(proposed) - V0(buy and hold) and its paired bootstrap 95% interval.
    double gap = 0.0, gap_lo = 0.0, gap_hi = 0.0;
};

struct PortfolioPolicyInfo {
    double gamma = 0.0;
    double w_tilde = 0.0;
    std::vector<std::vector<double>> controls;  // per time, per observation cell
    std::vector<Grid> hidden_grids, obs_grids;
    std::string projection, optimizer;
    bool unconverged = false;
};

struct PortfolioReport {
    std::vector<PortfolioPolicyInfo> policies;
    std::vector<PortfolioTable> tables;
};

namespace detail {

inline std::pair<double, double> percentile_interval(std::vector<double> v, double level) {
    std::sort(v.begin(), v.end());
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {at(0.5 * (1.0 - level)), at(0.5 * (1.0 + level))};
}

} // namespace detail

/// Grids for the wealth model: the standard-normal Lloyd grid moved to the mean and
/// spread of a buy-and-hold pilot batch, with spreads floored at sigma sqrt(dt).
inline QuantizedGrids portfolio_grids(const ModelSpec& model, const PortfolioParams& p, const Grid& g,
                                      std::size_t pilot_paths, std::uint64_t seed) {
    const BatchResult pilot = simulate_batch(model, BuyAndHold{}, pilot_paths, seed);
    const double floor = p.sigma * std::sqrt(p.dt);
    QuantizedGrids grids;
    for (int n = 0; n <= p.horizon; ++n) {
        const Vec sx = pilot.hidden_stds[n].cwiseMax(floor), sy = pilot.obs_stds[n].cwiseMax(floor);
        grids.hidden.push_back(g.affine(pilot.hidden_means[n], sx));
        grids.obs.push_back(g.affine(pilot.obs_means[n], sy));
    }
    return grids;
}

inline PortfolioReport run_portfolio(const PortfolioExperimentConfig& cfg, std::uint64_t seed,
                                     const RunOptions& ro = {}) {
    PortfolioReport rep;
    LloydOptions lloyd = cfg.lloyd;
    lloyd.seed = seed;
    OptimizerOptions optimizer = cfg.optimizer;
    if (ro.mode) optimizer.mode = *ro.mode;
    const std::vector<std::size_t> path_counts = ro.paths ? *ro.paths : cfg.n_paths;
    const Grid g = detail::standard_grid(1, cfg.grid_size, lloyd, ro.grid_cache);

    for (std::size_t gi = 0; gi < cfg.gammas.size(); ++gi) {
        PortfolioParams params = cfg.params;
        params.gamma = cfg.gammas[gi];
        const ModelSpec model = portfolio_model(params);
        const QuantizedGrids grids = portfolio_grids(model, params, g, cfg.pilot_paths, stream_seed(seed, {20, gi}));
        QuantizationOptions qo;
        qo.n_mc = cfg.n_mc;
        qo.seed = stream_seed(seed, {21, gi});
        const QuantizedProblem prob = make_quantized_problem(model, grids, qo);
        CodebookOptions co = cfg.codebook;
        co.seed = stream_seed(seed, {22, gi});
        const CodebookBuild cb = codebook_build(prob, co);
        QuantizedDPOptions dpo;
        dpo.optimizer = optimizer;
        const QuantizedDPResult dp = quantized_dp(prob, cb.codebook, dpo);

        PortfolioPolicyInfo info;
        info.gamma = params.gamma;
        info.w_tilde = dp.value;
        for (const auto& m : dp.policy.maps) {
            std::vector<double> row;
            for (auto c : m) row.push_back(params.controls[c]);
            info.controls.push_back(std::move(row));
        }
        info.hidden_grids = grids.hidden;
        info.obs_grids = grids.obs;
        info.projection = cb.lossless ? "lossless" : "lossy";
        info.optimizer = to_string(dp.mode_used);
        info.unconverged = dp.unconverged;
        rep.policies.push_back(info);

        const std::vector<std::pair<std::string, Strategy>> strategies{
            {"Proposed", QuantizedStrategy{dp.policy, grids.obs}},
            {"Buy and Hold", baseline_buy_and_hold()},
            {"Trending", baseline_trending()}};
        for (std::size_t pi = 0; pi < path_counts.size(); ++pi) {
            PortfolioTable table;
            table.gamma = params.gamma;
            table.n_paths = path_counts[pi];
            // Common random numbers across the three strategies of one table.
            table.sim_seed = stream_seed(seed, {23, gi, path_counts[pi]});
            std::vector<BatchResult> batches;
            for (const auto& [name, strat] : strategies) {
                CostEstimate e = evaluate_policy_cost(model, strat, table.n_paths, table.sim_seed, cfg.bootstrap);
                PortfolioColumn col;
                col.strategy = name;
                col.mean = e.batch.mean[0];
                col.variance = e.batch.variance[0];
                col.v0 = 0.5 * params.gamma * col.variance - col.mean;
                col.v0_se = e.bootstrap_error.value_or(0.0);
                table.columns.push_back(col);
                batches.push_back(std::move(e.batch));
            }
            table.gap = table.columns[0].v0 - table.columns[1].v0;
            Rng rng = make_stream(table.sim_seed, {stream_tag::bootstrap, 1});
            std::uniform_int_distribution<std::size_t> pick(0, table.n_paths - 1);
            std::vector<double> gaps, a(table.n_paths), b(table.n_paths);
            for (std::size_t r = 0; r < std::max<std::size_t>(cfg.bootstrap, 2); ++r) {
                for (std::size_t k = 0; k < table.n_paths; ++k) {
                    const std::size_t idx = pick(rng);
                    a[k] = batches[0].terminal[idx][0];
                    b[k] = batches[1].terminal[idx][0];
                }
                gaps.push_back(mean_variance_criterion(a, params.gamma) - mean_variance_criterion(b, params.gamma));
            }
            std::tie(table.gap_lo, table.gap_hi) = detail::percentile_interval(gaps, 0.95);
            detail::log_line(ro, "bench-portfolio gamma=" + format_double(params.gamma) +
                                     " paths=" + std::to_string(table.n_paths) + " V0 proposed=" +
                                     format_double(table.columns[0].v0) +
                                     " buy-and-hold=" + format_double(table.columns[1].v0) +
                                     " trending=" + format_double(table.columns[2].v0));
            rep.tables.push_back(std::move(table));
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline json provenance(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& verb,
                       const std::string& git_revision) {
    ExperimentConfig resolved = cfg;
    resolved.seed = seed;
    json p{{"verb", verb},
           {"config", to_json(resolved)},
           {"config_hash", config_hash(resolved)},
           {"seed", seed},
           {"git_revision", git_revision}};
    if (cfg.lq) p["lq_kernel_n_mc"] = cfg.lq->n_mc;
    if (cfg.portfolio) p["portfolio_kernel_n_mc"] = cfg.portfolio->n_mc;
    return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out << text;
}

inline std::string join(const std::vector<std::size_t>& v, char sep) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) s += sep;
        s += std::to_string(v[k]);
    }
    return s;
}

/// lq_benchmark.csv, lq_error_vs_N.csv and lq_report.json. Wall times only with `timings`.
inline void write_lq_outputs(const LQBenchmarkReport& rep, const json& prov, const std::filesystem::path& dir,
                             bool timings) {
    std::filesystem::create_directories(dir);
    const std::string hash = prov.at("config_hash").get<std::string>();
    const std::string seed = std::to_string(prov.at("seed").get<std::uint64_t>());
    std::ostringstream csv, plot;
    csv << "config_hash,seed,N,W_tilde_0,W_0,relative_error,projection,optimizer,codebook_size,reachable_per_layer,"
           "cd_unconverged,status";
    if (timings) csv << ",wall_seconds";
    csv << '\n';
    plot << "N,relative_error_percent\n";
    json rows = json::array();
    for (const auto& r : rep.rows) {
        csv << hash << ',' << seed << ',' << r.N << ',' << format_double(r.w_tilde) << ',' << format_double(r.w0)
            << ',' << format_double(r.rel_error) << ',' << r.projection << ',' << r.optimizer << ','
            << r.codebook_size << ',' << join(r.reachable, ';') << ',' << (r.unconverged ? 1 : 0) << ",\""
            << r.status << '"';
        if (timings) csv << ',' << format_double(r.seconds);
        csv << '\n';
        if (r.status == "ok") plot << r.N << ',' << format_double(100.0 * r.rel_error) << '\n';
        json row{{"N", r.N},
                 {"W_tilde_0", r.w_tilde},
                 {"W_0", r.w0},
                 {"relative_error", r.rel_error},
                 {"projection", r.projection},
                 {"optimizer", r.optimizer},
                 {"codebook_size", r.codebook_size},
                 {"reachable_per_layer", r.reachable},
                 {"cd_unconverged", r.unconverged},
                 {"status", r.status},
                 {"config_hash", hash},
                 {"seed", prov.at("seed")}};
        if (timings) row["wall_seconds"] = r.seconds;
        rows.push_back(std::move(row));
    }
    write_text(dir / "lq_benchmark.csv", csv.str());
    write_text(dir / "lq_error_vs_N.csv", plot.str());
    json report{{"provenance", prov}, {"W_0", rep.w0}, {"rows", std::move(rows)}};
    write_text(dir / "lq_report.json", report.dump(2) + "\n");
}

/// portfolio.csv (one row per gamma, path count and strategy) and portfolio_report.json.
inline void write_portfolio_outputs(const PortfolioReport& rep, const json& prov, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string hash = prov.at("config_hash").get<std::string>();
    const std::string seed = std::to_string(prov.at("seed").get<std::uint64_t>());
    std::ostringstream csv;
    csv << "config_hash,seed,gamma,n_paths,strategy,mean,variance,V0,V0_bootstrap_se,V0_gap_vs_buy_and_hold,"
           "gap_ci95_low,gap_ci95_high\n";
    json tables = json::array();
    for (const auto& t : rep.tables) {
        json cols = json::array(), means = json::array(), vars = json::array(), v0s = json::array(),
             ses = json::array();
        for (std::size_t k = 0; k < t.columns.size(); ++k) {
            const auto& c = t.columns[k];
            csv << hash << ',' << seed << ',' << format_double(t.gamma) << ',' << t.n_paths << ",\"" << c.strategy
                << "\"," << format_double(c.mean) << ',' << format_double(c.variance) << ',' << format_double(c.v0)
                << ',' << format_double(c.v0_se) << ',';
            if (k == 0) {
                csv << format_double(t.gap) << ',' << format_double(t.gap_lo) << ',' << format_double(t.gap_hi);
            } else {
                csv << ",,";
            }
            csv << '\n';
            cols.push_back(c.strategy);
            means.push_back(c.mean);
            vars.push_back(c.variance);
            v0s.push_back(c.v0);
            ses.push_back(c.v0_se);
        }
        tables.push_back({{"gamma", t.gamma},
                          {"n_paths", t.n_paths},
                          {"simulation_seed", t.sim_seed},
                          {"columns", cols},
                          {"rows", {{"E[X_T]", means}, {"Var[X_T]", vars}, {"V_0", v0s}}},
                          {"V_0_bootstrap_se", ses},
                          {"variance_estimator", "unbiased (n-1)"},
                          {"V_0_gap_vs_buy_and_hold", {{"value", t.gap}, {"ci95", {t.gap_lo, t.gap_hi}}}},
                          {"config_hash", hash},
                          {"seed", prov.at("seed")}});
    }
    json policies = json::array();
    for (const auto& p : rep.policies) {
        json hg = json::array(), og = json::array();
        for (const auto& g : p.hidden_grids) hg.push_back(to_json(g));
        for (const auto& g : p.obs_grids) og.push_back(to_json(g));
        policies.push_back({{"gamma", p.gamma},
                            {"W_tilde_0", p.w_tilde},
                            {"controls_per_time_and_cell", p.controls},
                            {"projection", p.projection},
                            {"optimizer", p.optimizer},
                            {"cd_unconverged", p.unconverged},
                            {"hidden_grids", hg},
                            {"obs_grids", og}});
    }
    write_text(dir / "portfolio.csv", csv.str());
    json report{{"provenance", prov}, {"policies", policies}, {"tables", tables}};
    write_text(dir / "portfolio_report.json", report.dump(2) + "\n");
}

/// Lloyd grids for every configured size, keyed by (d, N).
inline json build_grid_cache(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& hash) {
    json grids = json::array();
    if (cfg.lq) {
        LloydOptions o = cfg.lq->lloyd;
        o.seed = seed;
        for (auto N : cfg.lq->grid_sizes) {
            const LloydResult r = lloyd_gaussian(cfg.lq->params.dim(), N, o);
            grids.push_back({{"d", cfg.lq->params.dim()},
                             {"N", N},
                             {"grid", to_json(r.grid)},
                             {"iterations", r.iterations},
                             {"converged", r.converged},
                             {"final_distortion", r.distortion.empty() ? 0.0 : r.distortion.back()}});
        }
    }
    if (cfg.portfolio) {
        LloydOptions o = cfg.portfolio->lloyd;
        o.seed = seed;
        const LloydResult r = lloyd_gaussian(1, cfg.portfolio->grid_size, o);
        grids.push_back({{"d", 1},
                         {"N", cfg.portfolio->grid_size},
                         {"grid", to_json(r.grid)},
                         {"iterations", r.iterations},
                         {"converged", r.converged},
                         {"final_distortion", r.distortion.empty() ? 0.0 : r.distortion.back()}});
    }
    return json{{"config_hash", hash}, {"seed", seed}, {"grids", std::move(grids)}};
}

} // namespace mfpo

#endif
