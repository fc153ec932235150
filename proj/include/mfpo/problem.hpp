#ifndef MFPO_PROBLEM_HPP
#define MFPO_PROBLEM_HPP

#include "core.hpp"
#include "measures.hpp"
#include "model.hpp"
#include "quantize.hpp"
#include "rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

namespace mfpo {

/// Hidden and observation grids for every time 0..T. All hidden grids share one
/// size, as do all observation grids.
struct QuantizedGrids {
    std::vector<Grid> hidden;
    std::vector<Grid> obs;

    static QuantizedGrids uniform(const Grid& x, const Grid& y, int horizon) {
        QuantizedGrids g;
        g.hidden.assign(static_cast<std::size_t>(horizon) + 1, x);
        g.obs.assign(static_cast<std::size_t>(horizon) + 1, y);
        return g;
    }

    int horizon() const { return static_cast<int>(hidden.size()) - 1; }
    std::size_t nx() const { return hidden.front().size(); }
    std::size_t ny() const { return obs.front().size(); }

    void validate() const {
        if (hidden.size() < 2 || hidden.size() != obs.size()) {
            throw ConfigError("grids must cover times 0..T with T >= 1");
        }
        for (std::size_t n = 0; n < hidden.size(); ++n) {
            if (hidden[n].size() != nx() || obs[n].size() != ny()) {
                throw ConfigError("grid sizes must be constant over time");
            }
        }
    }
};

/// Quantized hidden transition rows for one time step and one hidden law:
/// row(c, i)[k] = P(X_{n+1} in cell k | X_n = x^i, control c).
struct HiddenKernel {
    std::size_t num_controls = 0, nx_from = 0, nx_to = 0;
    std::vector<double> data;

    HiddenKernel() = default;
    HiddenKernel(std::size_t controls, std::size_t from, std::size_t to)
        : num_controls(controls), nx_from(from), nx_to(to), data(controls * from * to, 0.0) {}

    std::span<const double> row(ControlIndex c, std::size_t i) const {
        return {data.data() + (c * nx_from + i) * nx_to, nx_to};
    }
    std::span<double> row(ControlIndex c, std::size_t i) { return {data.data() + (c * nx_from + i) * nx_to, nx_to}; }
};

/// Quantized observation rows for one time step and one control:
/// row(k, j)[l] = P(Y_{n+1} in cell l | X_{n+1} = x^k, Y_n = y^j).
struct ObsKernel {
    std::size_t nx = 0, ny_prev = 0, ny_next = 0;
    std::vector<double> data;

    ObsKernel() = default;
    ObsKernel(std::size_t x, std::size_t prev, std::size_t next)
        : nx(x), ny_prev(prev), ny_next(next), data(x * prev * next, 0.0) {}

    std::span<const double> row(std::size_t k, std::size_t j) const {
        return {data.data() + (k * ny_prev + j) * ny_next, ny_next};
    }
    std::span<double> row(std::size_t k, std::size_t j) { return {data.data() + (k * ny_prev + j) * ny_next, ny_next}; }
};

/// Source of the quantized kernels. Implementations return references that stay
/// valid for the provider's lifetime; they may cache internally and are not
/// thread-safe.
class KernelProvider {
public:
    virtual ~KernelProvider() = default;
    virtual const HiddenKernel& hidden(int n, const DiscreteMeasure& mu_x) const = 0;
    virtual const ObsKernel& obs(int n, ControlIndex c) const = 0;
};

struct KernelEstimate {
    DiscreteMeasure hidden_row;            // over the hidden grid at n + 1
    std::vector<DiscreteMeasure> obs_rows;  // one per hidden center x^k at n + 1, over the obs grid at n + 1
};

namespace detail {

inline std::vector<double> frequencies(const std::vector<std::size_t>& counts, std::size_t total) {
    std::vector<double> w(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        w[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    }
    return w;
}

inline std::vector<std::size_t> hidden_counts(const ModelSpec& model, const QuantizedGrids& grids, int n,
                                              std::size_t i, ControlIndex c, const HiddenLaw& law,
                                              std::size_t n_mc, std::uint64_t seed) {
    Rng rng = make_stream(seed, {stream_tag::hidden_kernel, static_cast<std::uint64_t>(n), i, c});
    const Grid& from = grids.hidden[n];
    const Grid& to = grids.hidden[n + 1];
    std::vector<std::size_t> counts(to.size(), 0);
    for (std::size_t r = 0; r < n_mc; ++r) {
        Vec eps = model.sample_eps(rng);
        counts[to.project(model.step_hidden(n, from[i], law, model.controls[c], eps))]++;
    }
    return counts;
}

inline std::vector<std::size_t> obs_counts(const ModelSpec& model, const QuantizedGrids& grids, int n, std::size_t k,
                                           std::size_t j, ControlIndex c, std::size_t n_mc, std::uint64_t seed) {
    Rng rng = make_stream(seed, {stream_tag::obs_kernel, static_cast<std::uint64_t>(n), k, j, c});
    const Grid& xs = grids.hidden[n + 1];
    const Grid& prev = grids.obs[n];
    const Grid& next = grids.obs[n + 1];
    std::vector<std::size_t> counts(next.size(), 0);
    for (std::size_t r = 0; r < n_mc; ++r) {
        Vec eta = model.sample_eta(rng);
        counts[next.project(model.step_obs(n, xs[k], prev[j], model.controls[c], eta))]++;
    }
    return counts;
}

} // namespace detail

/// Monte-Carlo estimate of the quantized kernels out of the source pair (x^i, y^j)
/// at time n under control c and hidden marginal mu_x. Every row is an exact
/// probability vector (empirical frequencies). Streams are keyed by
/// (time, source, control), so results do not depend on evaluation order.
inline KernelEstimate estimate_kernels(const ModelSpec& model, const QuantizedGrids& grids, int n, ControlIndex c,
                                       std::size_t i, std::size_t j, const DiscreteMeasure& mu_x, std::size_t n_mc,
                                       std::uint64_t seed) {
    if (!model.has_samplers()) {
        throw ConfigError("model lacks a noise sampler");
    }
    if (n_mc < 1) {
        throw ConfigError("n_mc must be at least 1");
    }
    if (n < 0 || n >= grids.horizon()) {
        throw IndexError("kernel time index outside [0, T)");
    }
    HiddenLaw law(mu_x, grids.hidden[n].centers());
    KernelEstimate out;
    out.hidden_row = DiscreteMeasure::normalized(
        {grids.nx()}, detail::frequencies(detail::hidden_counts(model, grids, n, i, c, law, n_mc, seed), n_mc));
    for (std::size_t k = 0; k < grids.nx(); ++k) {
        out.obs_rows.push_back(DiscreteMeasure::normalized(
            {grids.ny()}, detail::frequencies(detail::obs_counts(model, grids, n, k, j, c, n_mc, seed), n_mc)));
    }
    return out;
}

/// Kernel provider backed by frozen Monte-Carlo estimates, cached per
/// (time, hidden law) and (time, control).
class MonteCarloKernels final : public KernelProvider {
public:
    MonteCarloKernels(ModelSpec model, QuantizedGrids grids, std::size_t n_mc, std::uint64_t seed)
        : model_(std::move(model)), grids_(std::move(grids)), n_mc_(n_mc), seed_(seed) {
        grids_.validate();
        if (!model_.has_samplers()) {
            throw ConfigError("model lacks a noise sampler");
        }
        if (n_mc_ < 1) {
            throw ConfigError("n_mc must be at least 1");
        }
    }

    const HiddenKernel& hidden(int n, const DiscreteMeasure& mu_x) const override {
        std::vector<double> key;
        if (model_.hidden_uses_law) {
            key.assign(mu_x.weights().begin(), mu_x.weights().end());
        }
        auto it = hidden_cache_.find({n, key});
        if (it != hidden_cache_.end()) {
            return it->second;
        }
        const std::size_t nx = grids_.nx(), nc = model_.num_controls();
        HiddenKernel table(nc, nx, nx);
        HiddenLaw law(mu_x, grids_.hidden[n].centers());
        for (ControlIndex c = 0; c < nc; ++c) {
            for (std::size_t i = 0; i < nx; ++i) {
                auto counts = detail::hidden_counts(model_, grids_, n, i, c, law, n_mc_, seed_);
                auto row = table.row(c, i);
                for (std::size_t k = 0; k < nx; ++k) {
                    row[k] = static_cast<double>(counts[k]) / static_cast<double>(n_mc_);
                }
            }
        }
        ++hidden_estimates_;
        return hidden_cache_.emplace(std::make_pair(n, std::move(key)), std::move(table)).first->second;
    }

    const ObsKernel& obs(int n, ControlIndex c) const override {
        const ControlIndex key_c = model_.obs_uses_control ? c : 0;
        auto it = obs_cache_.find({n, key_c});
        if (it != obs_cache_.end()) {
            return it->second;
        }
        const std::size_t nx = grids_.nx(), ny = grids_.ny();
        ObsKernel table(nx, ny, ny);
        for (std::size_t k = 0; k < nx; ++k) {
            for (std::size_t j = 0; j < ny; ++j) {
                auto row = table.row(k, j);
                if (!model_.obs_uses_prev_obs && j > 0) {
                    auto first = table.row(k, 0);
                    std::copy(first.begin(), first.end(), row.begin());
                    continue;
                }
                auto counts = detail::obs_counts(model_, grids_, n, k, j, key_c, n_mc_, seed_);
                for (std::size_t l = 0; l < ny; ++l) {
                    row[l] = static_cast<double>(counts[l]) / static_cast<double>(n_mc_);
                }
            }
        }
        return obs_cache_.emplace(std::make_pair(n, key_c), std::move(table)).first->second;
    }

    const ModelSpec& model() const { return model_; }
    const QuantizedGrids& grids() const { return grids_; }
    std::size_t n_mc() const { return n_mc_; }
    std::size_t hidden_estimates() const { return hidden_estimates_; }

private:
    ModelSpec model_;
    QuantizedGrids grids_;
    std::size_t n_mc_;
    std::uint64_t seed_;
    mutable std::map<std::pair<int, std::vector<double>>, HiddenKernel> hidden_cache_;
    mutable std::map<std::pair<int, ControlIndex>, ObsKernel> obs_cache_;
    mutable std::size_t hidden_estimates_ = 0;
};

/// Kernel provider with caller-supplied tables; the hidden table may depend on the
/// hidden law through a callback.
class TabulatedKernels final : public KernelProvider {
public:
    using HiddenFn = std::function<HiddenKernel(int n, const DiscreteMeasure& mu_x)>;

    TabulatedKernels(HiddenFn hidden_fn, std::vector<std::vector<ObsKernel>> obs_tables)
        : hidden_fn_(std::move(hidden_fn)), obs_(std::move(obs_tables)) {}

    const HiddenKernel& hidden(int n, const DiscreteMeasure& mu_x) const override {
        std::pair<int, std::vector<double>> key{n, {mu_x.weights().begin(), mu_x.weights().end()}};
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            return it->second;
        }
        return cache_.emplace(std::move(key), hidden_fn_(n, mu_x)).first->second;
    }

    const ObsKernel& obs(int n, ControlIndex c) const override { return obs_.at(n).at(c); }

private:
    HiddenFn hidden_fn_;
    std::vector<std::vector<ObsKernel>> obs_;  // [time][control]
    mutable std::map<std::pair<int, std::vector<double>>, HiddenKernel> cache_;
};

/// Finite-state problem on the quantized chain: everything the filter and the
/// dynamic programs need.
struct QuantizedProblem {
    int horizon = 1;
    std::size_t nx = 0, ny = 0, num_controls = 0;
    std::shared_ptr<const KernelProvider> kernels;
    /// Running cost table at time n for hidden marginal mu_x: entry [i * num_controls + c].
    std::function<std::vector<double>(int n, const DiscreteMeasure& mu_x)> running_costs;
    /// Terminal cost table for hidden marginal mu_x: entry [i].
    std::function<std::vector<double>(const DiscreteMeasure& mu_x)> terminal_costs;
    /// Joint law of the quantized (X_0, Y_0).
    DiscreteMeasure initial;

    void validate() const {
        if (horizon < 1 || nx == 0 || ny == 0 || num_controls == 0) {
            throw ConfigError("quantized problem has an empty dimension");
        }
        if (!kernels || !running_costs || !terminal_costs) {
            throw ConfigError("quantized problem lacks kernels or costs");
        }
        if (initial.rank() != 2 || initial.extent(0) != nx || initial.extent(1) != ny || !initial.is_normalized()) {
            throw ConfigError("initial law must be a normalized measure on the product grid");
        }
    }
};

/// Quantized joint law of (X_0, Y_0): exact for deterministic starts, Monte
/// Carlo (product of marginals when independent) otherwise.
inline DiscreteMeasure quantize_initial_law(const ModelSpec& model, const QuantizedGrids& grids, std::size_t samples,
                                            std::uint64_t seed) {
    const std::size_t nx = grids.nx(), ny = grids.ny();
    if (model.initial_point) {
        const std::size_t i = grids.hidden[0].project(model.initial_point->first);
        const std::size_t j = grids.obs[0].project(model.initial_point->second);
        return DiscreteMeasure::delta({nx, ny}, i * ny + j);
    }
    if (!model.sample_initial) {
        throw ConfigError("model lacks an initial-law sampler");
    }
    Rng rng = make_stream(seed, {stream_tag::initial_law});
    if (model.initial_independent) {
        std::vector<std::size_t> cx(nx, 0), cy(ny, 0);
        for (std::size_t r = 0; r < samples; ++r) {
            auto [x, y] = model.sample_initial(rng);
            cx[grids.hidden[0].project(x)]++;
            cy[grids.obs[0].project(y)]++;
        }
        auto px = detail::frequencies(cx, samples);
        auto py = detail::frequencies(cy, samples);
        return DiscreteMeasure::pair_product(px, py);
    }
    std::vector<std::size_t> c(nx * ny, 0);
    for (std::size_t r = 0; r < samples; ++r) {
        auto [x, y] = model.sample_initial(rng);
        c[grids.hidden[0].project(x) * ny + grids.obs[0].project(y)]++;
    }
    return DiscreteMeasure::normalized({nx, ny}, detail::frequencies(c, samples));
}

struct QuantizationOptions {
    std::size_t n_mc = 10000;
    std::size_t initial_samples = 100000;
    std::uint64_t seed = 1;
};

/// Quantized problem of a model on given grids with Monte-Carlo kernels.
inline QuantizedProblem make_quantized_problem(const ModelSpec& model, const QuantizedGrids& grids,
                                               const QuantizationOptions& opt = {}) {
    model.validate();
    grids.validate();
    if (grids.horizon() != model.horizon) {
        throw ConfigError("grid horizon differs from model horizon");
    }
    auto kernels = std::make_shared<MonteCarloKernels>(model, grids, opt.n_mc, opt.seed);
    QuantizedProblem p;
    p.horizon = model.horizon;
    p.nx = grids.nx();
    p.ny = grids.ny();
    p.num_controls = model.num_controls();
    p.kernels = kernels;
    p.running_costs = [model, grids](int n, const DiscreteMeasure& mu_x) {
        HiddenLaw law(mu_x, grids.hidden[n].centers());
        const std::size_t nc = model.num_controls();
        std::vector<double> out(grids.nx() * nc);
        for (std::size_t i = 0; i < grids.nx(); ++i) {
            for (ControlIndex c = 0; c < nc; ++c) {
                out[i * nc + c] = model.running_cost(n, grids.hidden[n][i], law, model.controls[c]);
            }
        }
        return out;
    };
    p.terminal_costs = [model, grids](const DiscreteMeasure& mu_x) {
        const auto T = static_cast<std::size_t>(model.horizon);
        HiddenLaw law(mu_x, grids.hidden[T].centers());
        std::vector<double> out(grids.nx());
        for (std::size_t i = 0; i < grids.nx(); ++i) {
            out[i] = model.terminal_cost(grids.hidden[T][i], law);
        }
        return out;
    };
    p.initial = quantize_initial_law(model, grids, opt.initial_samples, opt.seed);
    p.validate();
    return p;
}

} // namespace mfpo

#endif
