#ifndef MFPO_CONFIG_HPP
#define MFPO_CONFIG_HPP

#include "codebook.hpp"
#include "core.hpp"
#include "dp.hpp"
#include "json_io.hpp"
#include "model.hpp"
#include "problem.hpp"
#include "quantize.hpp"

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mfpo {

struct LQExperimentConfig {
    LQParams params;
    std::vector<Vec> controls;
    std::vector<std::size_t> grid_sizes{2, 4, 10, 20};
    std::size_t n_mc = 10000;
    std::size_t initial_samples = 100000;
    CodebookOptions codebook;
    OptimizerOptions optimizer;
    LloydOptions lloyd;
};

struct PortfolioExperimentConfig {
    PortfolioParams params;
    std::vector<double> gammas{2, 4, 8, 16};
    std::size_t grid_size = 2;
    std::size_t n_mc = 10000;
    std::vector<std::size_t> n_paths{10000, 250};
    std::size_t pilot_paths = 10000;
    std::size_t bootstrap = 100;
    CodebookOptions codebook;
    OptimizerOptions optimizer;
    LloydOptions lloyd;
};

struct ExperimentConfig {
    std::uint64_t seed = 20240601;
    std::optional<LQExperimentConfig> lq;
    std::optional<PortfolioExperimentConfig> portfolio;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    std::set<std::string> names;
    for (const char* k : known) names.insert(k);
    for (const auto& [key, value] : j.items()) {
        if (!names.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

/// A scalar, a single matrix (shared by all steps) or a list of per-step matrices.
inline std::vector<Mat> per_step(const json& j, std::size_t count, const std::string& name) {
    if (j.is_array() && !j.empty() && j[0].is_array() && !j[0].empty() && j[0][0].is_array()) {
        if (j.size() != count) {
            throw ConfigError(name + " lists " + std::to_string(j.size()) + " matrices, expected " +
                              std::to_string(count));
        }
        std::vector<Mat> out;
        for (const auto& m : j) out.push_back(mat_from_json(m));
        return out;
    }
    return std::vector<Mat>(count, mat_from_json(j));
}

inline LloydOptions lloyd_from_json(const json& j, std::uint64_t seed) {
    LloydOptions o;
    o.seed = seed;
    if (j.is_null()) return o;
    reject_unknown(j, {"max_iters", "tol", "quadrature_degree", "quadrature_max_dim", "mc_samples", "restarts", "exact_1d"},
                   "lloyd");
    o.max_iters = j.value("max_iters", o.max_iters);
    o.tol = j.value("tol", o.tol);
    o.quadrature_degree = j.value("quadrature_degree", o.quadrature_degree);
    o.quadrature_max_dim = j.value("quadrature_max_dim", o.quadrature_max_dim);
    o.mc_samples = j.value("mc_samples", o.mc_samples);
    o.restarts = j.value("restarts", o.restarts);
    o.exact_1d = j.value("exact_1d", o.exact_1d);
    return o;
}

inline json lloyd_to_json(const LloydOptions& o) {
    return {{"max_iters", o.max_iters},
            {"tol", o.tol},
            {"quadrature_degree", o.quadrature_degree},
            {"quadrature_max_dim", o.quadrature_max_dim},
            {"mc_samples", o.mc_samples},
            {"restarts", o.restarts},
            {"exact_1d", o.exact_1d}};
}

inline CodebookOptions codebook_from_json(const json& j) {
    CodebookOptions o;
    if (j.is_null()) return o;
    reject_unknown(j, {"max_per_layer", "explore_enumerate_budget", "random_maps", "dedupe_tol", "kmeans_iters"},
                   "codebook");
    o.max_per_layer = j.value("max_per_layer", o.max_per_layer);
    o.explore_enumerate_budget = j.value("explore_enumerate_budget", o.explore_enumerate_budget);
    o.random_maps = j.value("random_maps", o.random_maps);
    o.dedupe_tol = j.value("dedupe_tol", o.dedupe_tol);
    o.kmeans_iters = j.value("kmeans_iters", o.kmeans_iters);
    return o;
}

inline json codebook_to_json(const CodebookOptions& o) {
    return {{"max_per_layer", o.max_per_layer},
            {"explore_enumerate_budget", o.explore_enumerate_budget},
            {"random_maps", o.random_maps},
            {"dedupe_tol", o.dedupe_tol},
            {"kmeans_iters", o.kmeans_iters}};
}

inline OptimizerOptions optimizer_from_json(const json& j) {
    OptimizerOptions o;
    if (j.is_null()) return o;
    reject_unknown(j, {"mode", "auto_enumerate_limit", "enumerate_limit", "max_sweeps"}, "optimizer");
    o.mode = parse_optimizer_mode(j.value("mode", std::string("auto")));
    o.auto_enumerate_limit = j.value("auto_enumerate_limit", o.auto_enumerate_limit);
    o.enumerate_limit = j.value("enumerate_limit", o.enumerate_limit);
    o.max_sweeps = j.value("max_sweeps", o.max_sweeps);
    return o;
}

inline json optimizer_to_json(const OptimizerOptions& o) {
    return {{"mode", to_string(o.mode)},
            {"auto_enumerate_limit", o.auto_enumerate_limit},
            {"enumerate_limit", o.enumerate_limit},
            {"max_sweeps", o.max_sweeps}};
}

inline json get_or_null(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json(); }

} // namespace detail

inline LQExperimentConfig lq_config_from_json(const json& j, std::uint64_t seed) {
    detail::reject_unknown(j,
                           {"horizon", "B", "Bbar", "D", "J", "Q", "Qbar", "R", "x0_mean", "controls", "grid_sizes",
                            "n_mc", "initial_samples", "codebook", "optimizer", "lloyd"},
                           "lq");
    LQExperimentConfig c;
    const int T = j.at("horizon").get<int>();
    if (T < 1) throw ConfigError("lq.horizon must be at least 1");
    const auto t = static_cast<std::size_t>(T);
    auto& p = c.params;
    p.horizon = T;
    p.B = detail::per_step(j.at("B"), t, "B");
    p.Bbar = detail::per_step(j.at("Bbar"), t, "Bbar");
    p.D = detail::per_step(j.at("D"), t, "D");
    p.J_next = detail::per_step(j.at("J"), t, "J");
    p.Q = detail::per_step(j.at("Q"), t + 1, "Q");
    p.Qbar = detail::per_step(j.at("Qbar"), t + 1, "Qbar");
    p.R = detail::per_step(j.at("R"), t, "R");
    if (j.contains("x0_mean")) p.x0_mean = vec_from_json(j.at("x0_mean"));
    p.validate();
    for (const auto& a : j.at("controls")) c.controls.push_back(vec_from_json(a));
    if (c.controls.empty()) throw ConfigError("lq.controls must be nonempty");
    c.grid_sizes = j.value("grid_sizes", c.grid_sizes);
    c.n_mc = j.value("n_mc", c.n_mc);
    c.initial_samples = j.value("initial_samples", c.initial_samples);
    c.codebook = detail::codebook_from_json(detail::get_or_null(j, "codebook"));
    c.optimizer = detail::optimizer_from_json(detail::get_or_null(j, "optimizer"));
    c.lloyd = detail::lloyd_from_json(detail::get_or_null(j, "lloyd"), seed);
    return c;
}

inline json to_json(const LQExperimentConfig& c) {
    const auto& p = c.params;
    auto list = [](const std::vector<Mat>& ms) {
        json a = json::array();
        for (const auto& m : ms) a.push_back(to_json(m));
        return a;
    };
    json controls = json::array();
    for (const auto& a : c.controls) controls.push_back(to_json(a));
    return {{"horizon", p.horizon},
            {"B", list(p.B)},
            {"Bbar", list(p.Bbar)},
            {"D", list(p.D)},
            {"J", list(p.J_next)},
            {"Q", list(p.Q)},
            {"Qbar", list(p.Qbar)},
            {"R", list(p.R)},
            {"x0_mean", to_json(p.initial_mean())},
            {"controls", std::move(controls)},
            {"grid_sizes", c.grid_sizes},
            {"n_mc", c.n_mc},
            {"initial_samples", c.initial_samples},
            {"codebook", detail::codebook_to_json(c.codebook)},
            {"optimizer", detail::optimizer_to_json(c.optimizer)},
            {"lloyd", detail::lloyd_to_json(c.lloyd)}};
}

inline PortfolioExperimentConfig portfolio_config_from_json(const json& j, std::uint64_t seed) {
    detail::reject_unknown(j,
                           {"b0", "sigma", "dt", "gammas", "horizon", "controls", "x0", "obs_std", "grid_size",
                            "n_mc", "n_paths", "pilot_paths", "bootstrap", "codebook", "optimizer", "lloyd"},
                           "portfolio");
    PortfolioExperimentConfig c;
    auto& p = c.params;
    p.b0 = j.value("b0", p.b0);
    p.sigma = j.value("sigma", p.sigma);
    p.dt = j.value("dt", p.dt);
    p.horizon = j.value("horizon", p.horizon);
    p.controls = j.value("controls", p.controls);
    p.x0 = j.value("x0", p.x0);
    p.obs_std = j.value("obs_std", p.obs_std);
    c.gammas = j.value("gammas", c.gammas);
    if (c.gammas.empty()) throw ConfigError("portfolio.gammas must be nonempty");
    p.gamma = c.gammas.front();
    p.validate();
    for (double g : c.gammas) {
        if (!(g > 0.0)) throw ConfigError("portfolio.gammas must be positive");
    }
    c.grid_size = j.value("grid_size", c.grid_size);
    c.n_mc = j.value("n_mc", c.n_mc);
    c.n_paths = j.value("n_paths", c.n_paths);
    c.pilot_paths = j.value("pilot_paths", c.pilot_paths);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    c.codebook = detail::codebook_from_json(detail::get_or_null(j, "codebook"));
    c.optimizer = detail::optimizer_from_json(detail::get_or_null(j, "optimizer"));
    c.lloyd = detail::lloyd_from_json(detail::get_or_null(j, "lloyd"), seed);
    return c;
}

inline json to_json(const PortfolioExperimentConfig& c) {
    const auto& p = c.params;
    return {{"b0", p.b0},
            {"sigma", p.sigma},
            {"dt", p.dt},
            {"gammas", c.gammas},
            {"horizon", p.horizon},
            {"controls", p.controls},
            {"x0", p.x0},
            {"obs_std", p.obs_std},
            {"grid_size", c.grid_size},
            {"n_mc", c.n_mc},
            {"n_paths", c.n_paths},
            {"pilot_paths", c.pilot_paths},
            {"bootstrap", c.bootstrap},
            {"codebook", detail::codebook_to_json(c.codebook)},
            {"optimizer", detail::optimizer_to_json(c.optimizer)},
            {"lloyd", detail::lloyd_to_json(c.lloyd)}};
}

/// Schema v1: {"schema": "v1", "seed": u64, "lq": {...}, "portfolio": {...}}.
inline ExperimentConfig config_from_json(const json& j) {
    detail::reject_unknown(j, {"schema", "seed", "lq", "portfolio"}, "config");
    if (j.value("schema", std::string()) != "v1") {
        throw ConfigError("config schema must be \"v1\"");
    }
    ExperimentConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("lq")) c.lq = lq_config_from_json(j.at("lq"), c.seed);
    if (j.contains("portfolio")) c.portfolio = portfolio_config_from_json(j.at("portfolio"), c.seed);
    return c;
}

/// Fully resolved form; every default is explicit.
inline json to_json(const ExperimentConfig& c) {
    json j{{"schema", "v1"}, {"seed", c.seed}};
    if (c.lq) j["lq"] = to_json(*c.lq);
    if (c.portfolio) j["portfolio"] = to_json(*c.portfolio);
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

/// Hash of the resolved config without the seed.
inline std::string config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("seed");
    return hex64(fnv1a(j.dump()));
}

/// The reference LQ setting: d = 2, T = 3, B = Bbar = 0, D = J = [[1,1],[0,1]],
/// Q = Qbar = ones, R = I, controls {(-2,-2), (-1,-1), (1,1), (2,2)}.
inline LQExperimentConfig reference_lq_config(std::uint64_t seed = 20240601) {
    LQExperimentConfig c;
    Mat Z = Mat::Zero(2, 2), D(2, 2), Q = Mat::Ones(2, 2), R = Mat::Identity(2, 2);
    D << 1, 1, 0, 1;
    c.params = LQParams::constant(3, Z, Z, D, D, Q, Q, R);
    for (double s : {-2.0, -1.0, 1.0, 2.0}) c.controls.push_back(Vec::Constant(2, s));
    c.lloyd.seed = seed;
    return c;
}

} // namespace mfpo

#endif
