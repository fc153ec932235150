// Command-line driver for the experiments: bench-lq, bench-portfolio,
// quantize-cache, dump-riccati.

#include <mfpo/mfpo.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifndef MFPO_GIT_REVISION
#define MFPO_GIT_REVISION "unknown"
#endif

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::optional<std::string> mode;
    std::vector<std::size_t> paths;
    std::string cache;
    bool timings = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_mode, bool with_paths) {
    cmd->add_option("--config", c.config, "JSON config file (schema v1)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    if (with_mode) {
        cmd->add_option("--mode", c.mode, "control-map optimizer")
            ->check(CLI::IsMember({"auto", "enumerate", "cd", "constant"}));
        cmd->add_option("--cache", c.cache, "grid cache written by quantize-cache")->check(CLI::ExistingFile);
        cmd->add_flag("--timings", c.timings, "add wall-clock columns to the outputs (breaks bitwise reproducibility)");
    }
    if (with_paths) {
        cmd->add_option("--paths", c.paths, "simulation path counts (overrides the config)");
    }
}

std::optional<mfpo::json> load_cache(const Common& c, const std::string& hash, std::uint64_t seed) {
    if (c.cache.empty()) return std::nullopt;
    std::ifstream in(c.cache);
    mfpo::json j;
    in >> j;
    if (j.value("config_hash", std::string()) != hash || j.value("seed", std::uint64_t{0}) != seed) {
        std::cerr << "warning: grid cache " << c.cache << " was built for another config or seed; ignored\n";
        return std::nullopt;
    }
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field control under partial observation: quantized DP benchmarks"};
    app.require_subcommand(1);
    Common lq, pf, qc, dr;
    auto* bench_lq = app.add_subcommand("bench-lq", "quantized DP value vs the LQ Riccati value, per grid size");
    add_common(bench_lq, lq, true, false);
    auto* bench_pf = app.add_subcommand("bench-portfolio", "mean-variance tables: proposed vs baselines");
    add_common(bench_pf, pf, true, true);
    auto* cache = app.add_subcommand("quantize-cache", "compute and store the Lloyd grids of a config");
    add_common(cache, qc, false, false);
    auto* riccati = app.add_subcommand("dump-riccati", "write the LQ Riccati coefficients to JSON");
    add_common(riccati, dr, false, false);

    CLI11_PARSE(app, argc, argv);

    try {
        auto run_common = [](const Common& c, const std::string& verb) {
            mfpo::ExperimentConfig cfg = mfpo::load_config(c.config);
            const std::uint64_t seed = c.seed.value_or(cfg.seed);
            cfg.seed = seed;
            const mfpo::json prov = mfpo::provenance(cfg, seed, verb, MFPO_GIT_REVISION);
            return std::make_tuple(cfg, seed, prov);
        };

        if (*bench_lq) {
            auto [cfg, seed, prov] = run_common(lq, "bench-lq");
            if (!cfg.lq) throw mfpo::ConfigError("config has no lq section");
            const auto cache_json = load_cache(lq, prov.at("config_hash").get<std::string>(), seed);
            mfpo::RunOptions ro;
            if (lq.mode) ro.mode = mfpo::parse_optimizer_mode(*lq.mode);
            ro.grid_cache = cache_json ? &*cache_json : nullptr;
            ro.log = &std::cout;
            const auto rep = mfpo::run_lq_benchmark(*cfg.lq, seed, ro);
            mfpo::write_lq_outputs(rep, prov, lq.out, lq.timings);
            std::cout << "wrote " << (std::filesystem::path(lq.out) / "lq_benchmark.csv").string() << '\n';
        } else if (*bench_pf) {
            auto [cfg, seed, prov] = run_common(pf, "bench-portfolio");
            if (!cfg.portfolio) throw mfpo::ConfigError("config has no portfolio section");
            const auto cache_json = load_cache(pf, prov.at("config_hash").get<std::string>(), seed);
            mfpo::RunOptions ro;
            if (pf.mode) ro.mode = mfpo::parse_optimizer_mode(*pf.mode);
            if (!pf.paths.empty()) {
                ro.paths = pf.paths;
                prov["paths_override"] = pf.paths;
            }
            ro.grid_cache = cache_json ? &*cache_json : nullptr;
            ro.log = &std::cout;
            const auto t0 = std::chrono::steady_clock::now();
            const auto rep = mfpo::run_portfolio(*cfg.portfolio, seed, ro);
            mfpo::write_portfolio_outputs(rep, prov, pf.out);
            std::cout << "wrote " << (std::filesystem::path(pf.out) / "portfolio.csv").string() << " in "
                      << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
        } else if (*cache) {
            auto [cfg, seed, prov] = run_common(qc, "quantize-cache");
            const std::string hash = prov.at("config_hash").get<std::string>();
            mfpo::json j = mfpo::build_grid_cache(cfg, seed, hash);
            j["provenance"] = prov;
            std::filesystem::create_directories(qc.out);
            const auto path = std::filesystem::path(qc.out) / ("grid_cache_" + hash + ".json");
            mfpo::write_text(path, j.dump(2) + "\n");
            std::cout << "wrote " << path.string() << '\n';
        } else if (*riccati) {
            auto [cfg, seed, prov] = run_common(dr, "dump-riccati");
            if (!cfg.lq) throw mfpo::ConfigError("config has no lq section");
            const auto sol = mfpo::riccati_backward(cfg.lq->params);
            mfpo::json j{{"provenance", prov},
                         {"riccati", mfpo::to_json(sol)},
                         {"W_0", mfpo::w0_value(sol, mfpo::lq_initial_moments(cfg.lq->params))}};
            std::filesystem::create_directories(dr.out);
            const auto path = std::filesystem::path(dr.out) / "riccati.json";
            mfpo::write_text(path, j.dump(2) + "\n");
            std::cout << "wrote " << path.string() << '\n';
        }
    } catch (const mfpo::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
