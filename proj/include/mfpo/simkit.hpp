#ifndef MFPO_SIMKIT_HPP
#define MFPO_SIMKIT_HPP

#include "core.hpp"
#include "lq_analytic.hpp"
#include "marginal_flow.hpp"
#include "model.hpp"
#include "problem.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <tuple>
#include <type_traits>
#include <variant>
#include <vector>

namespace mfpo {

/// Quantized closed-loop policy: project Y_n on the time-n observation grid, look up the control.
struct QuantizedStrategy {
    ClosedLoopPolicy policy;
    std::vector<Grid> obs_grids;
};

/// Analytic LQ feedback; Phi_n is the Gaussian regression of X_n on Y_n fitted to the batch.
struct LQFeedbackStrategy {
    RiccatiSolution solution;
};

struct BuyAndHold {};

/// alpha_0 = 1, then +1 after an observed increase of Y and -1 otherwise.
struct Trending {};

struct ConstantControl {
    Vec a;
};

using Strategy = std::variant<QuantizedStrategy, LQFeedbackStrategy, BuyAndHold, Trending, ConstantControl>;

inline Strategy baseline_buy_and_hold() { return BuyAndHold{}; }
inline Strategy baseline_trending() { return Trending{}; }

struct BatchResult {
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<Vec> terminal;        // X_T per path
    std::vector<double> path_costs;   // sum of running costs + terminal cost, batch law as mean-field term
    // Empirical per-coordinate moments of X_n and Y_n, n = 0..T.
    std::vector<Vec> hidden_means, hidden_stds, obs_means, obs_stds;
    Vec mean;                         // empirical E[X_T]
    Vec variance;                     // unbiased, per coordinate
    std::optional<double> criterion;  // (gamma/2) Var - E for mean-variance models
};

namespace detail {

struct BatchMoments {
    Vec mu_bar;  // stacked (x, y) mean
    Vec x_mean, y_mean;
    Mat gain;    // Sigma_xy Sigma_yy^{-1}, empty when Y is degenerate
};

inline BatchMoments batch_moments(const std::vector<Vec>& xs, const std::vector<Vec>& ys) {
    const auto n = static_cast<double>(xs.size());
    const Eigen::Index dx = xs.front().size(), dy = ys.front().size();
    BatchMoments bm;
    bm.x_mean = Vec::Zero(dx);
    bm.y_mean = Vec::Zero(dy);
    for (std::size_t p = 0; p < xs.size(); ++p) {
        bm.x_mean += xs[p];
        bm.y_mean += ys[p];
    }
    bm.x_mean /= n;
    bm.y_mean /= n;
    Mat sxy = Mat::Zero(dx, dy), syy = Mat::Zero(dy, dy);
    for (std::size_t p = 0; p < xs.size(); ++p) {
        const Vec cx = xs[p] - bm.x_mean, cy = ys[p] - bm.y_mean;
        sxy += cx * cy.transpose();
        syy += cy * cy.transpose();
    }
    bm.mu_bar = Vec(dx + dy);
    bm.mu_bar << bm.x_mean, bm.y_mean;
    Eigen::JacobiSVD<Mat> svd(syy);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) > 1e-12 * std::max(1.0, sv(0))) {
        bm.gain = syy.ldlt().solve(sxy.transpose()).transpose();
    }
    return bm;
}

} // namespace detail

/// Advances n_paths particles in lockstep; the mean-field argument at step n is
/// the empirical law of the batch's X_n. Path p draws from its own stream.
inline BatchResult simulate_batch(const ModelSpec& model, const Strategy& strategy, std::size_t n_paths,
                                  std::uint64_t seed) {
    model.validate();
    if (n_paths < 2) {
        throw ConfigError("n_paths must be at least 2");
    }
    if (!model.has_samplers() || (!model.initial_point && !model.sample_initial)) {
        throw ConfigError("model lacks a sampler");
    }
    if (const auto* q = std::get_if<QuantizedStrategy>(&strategy)) {
        if (q->obs_grids.size() < static_cast<std::size_t>(model.horizon) ||
            q->policy.maps.size() != static_cast<std::size_t>(model.horizon)) {
            throw ConfigError("quantized strategy needs an observation grid and a map per time");
        }
    }
    std::vector<Rng> rngs;
    rngs.reserve(n_paths);
    std::vector<Vec> xs(n_paths), ys(n_paths), y_prev(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
        rngs.push_back(make_stream(seed, {stream_tag::path, p}));
        if (model.initial_point) {
            xs[p] = model.initial_point->first;
            ys[p] = model.initial_point->second;
        } else {
            std::tie(xs[p], ys[p]) = model.sample_initial(rngs.back());
        }
        y_prev[p] = ys[p];
    }
    BatchResult out;
    out.n_paths = n_paths;
    out.seed = seed;
    out.path_costs.assign(n_paths, 0.0);

    auto control = [&](int n, std::size_t p, const detail::BatchMoments* bm) -> Vec {
        return std::visit(
            [&](const auto& s) -> Vec {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, QuantizedStrategy>) {
                    const std::size_t cell = s.obs_grids[n].project(ys[p]);
                    return model.controls.at(s.policy.maps[n].at(cell));
                } else if constexpr (std::is_same_v<S, LQFeedbackStrategy>) {
                    Vec phi_value = bm->x_mean;
                    if (bm->gain.size() > 0) phi_value += bm->gain * (ys[p] - bm->y_mean);
                    return optimal_feedback(s.solution, n, phi_value, bm->mu_bar);
                } else if constexpr (std::is_same_v<S, BuyAndHold>) {
                    return Vec::Ones(model.dim_control);
                } else if constexpr (std::is_same_v<S, Trending>) {
                    if (n == 0) return Vec::Ones(model.dim_control);
                    return Vec::Constant(model.dim_control, ys[p][0] - y_prev[p][0] > 0.0 ? 1.0 : -1.0);
                } else {
                    return s.a;
                }
            },
            strategy);
    };

    auto record = [&](const HiddenLaw& law) {
        out.hidden_means.push_back(law.mean());
        Vec ym = Vec::Zero(ys.front().size());
        for (const auto& y : ys) ym += y;
        ym /= static_cast<double>(n_paths);
        Vec xv = Vec::Zero(law.mean().size()), yv = Vec::Zero(ym.size());
        for (std::size_t p = 0; p < n_paths; ++p) {
            xv += (xs[p] - law.mean()).cwiseAbs2();
            yv += (ys[p] - ym).cwiseAbs2();
        }
        const auto dof = static_cast<double>(n_paths - 1);
        out.hidden_stds.push_back((xv / dof).cwiseSqrt());
        out.obs_means.push_back(std::move(ym));
        out.obs_stds.push_back((yv / dof).cwiseSqrt());
    };

    for (int n = 0; n < model.horizon; ++n) {
        const HiddenLaw law(xs);
        record(law);
        std::optional<detail::BatchMoments> bm;
        if (std::holds_alternative<LQFeedbackStrategy>(strategy)) {
            bm = detail::batch_moments(xs, ys);
        }
        // The law object views xs, so the whole batch steps into fresh buffers.
        std::vector<Vec> x_next(n_paths), y_next(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) {
            const Vec a = control(n, p, bm ? &*bm : nullptr);
            out.path_costs[p] += model.running_cost(n, xs[p], law, a);
            std::tie(x_next[p], y_next[p]) = step(model, n, xs[p], ys[p], law, a, rngs[p]);
        }
        y_prev = std::move(ys);
        xs = std::move(x_next);
        ys = std::move(y_next);
    }
    const HiddenLaw law_T(xs);
    record(law_T);
    for (std::size_t p = 0; p < n_paths; ++p) {
        out.path_costs[p] += model.terminal_cost(xs[p], law_T);
    }
    out.mean = law_T.mean();
    out.variance = Vec::Zero(out.mean.size());
    for (const auto& x : xs) out.variance += (x - out.mean).cwiseAbs2();
    out.variance /= static_cast<double>(n_paths - 1);
    out.terminal = std::move(xs);
    if (model.risk_aversion) {
        out.criterion = 0.5 * *model.risk_aversion * out.variance[0] - out.mean[0];
    }
    return out;
}

/// (gamma/2) * unbiased variance - mean of a scalar sample.
inline double mean_variance_criterion(std::span<const double> x, double gamma) {
    const auto n = static_cast<double>(x.size());
    double m = 0.0;
    for (double v : x) m += v;
    m /= n;
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return 0.5 * gamma * s / (n - 1.0) - m;
}

/// Criterion recomputed on `resamples` bootstrap resamples of the terminal wealth.
inline std::vector<double> bootstrap_criterion(const BatchResult& r, double gamma, std::size_t resamples,
                                               std::uint64_t seed) {
    Rng rng = make_stream(seed, {stream_tag::bootstrap});
    std::uniform_int_distribution<std::size_t> pick(0, r.n_paths - 1);
    std::vector<double> draw(r.n_paths), out;
    out.reserve(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto& v : draw) v = r.terminal[pick(rng)][0];
        out.push_back(mean_variance_criterion(draw, gamma));
    }
    return out;
}

inline double sample_std(std::span<const double> v) {
    const auto n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (n - 1.0));
}

struct CostEstimate {
    double value = 0.0;
    double std_error = 0.0;
    /// Bootstrap standard error of the mean-variance criterion, when applicable.
    std::optional<double> bootstrap_error;
    BatchResult batch;
};

/// Empirical criterion with the batch law as mean-field term; standard error from
/// the per-path cost spread.
inline CostEstimate evaluate_policy_cost(const ModelSpec& model, const Strategy& strategy, std::size_t n_paths,
                                         std::uint64_t seed, std::size_t bootstrap = 100) {
    CostEstimate e;
    e.batch = simulate_batch(model, strategy, n_paths, seed);
    double m = 0.0;
    for (double c : e.batch.path_costs) m += c;
    e.value = m / static_cast<double>(n_paths);
    e.std_error = sample_std(e.batch.path_costs) / std::sqrt(static_cast<double>(n_paths));
    if (model.risk_aversion) {
        e.value = *e.batch.criterion;
        if (bootstrap > 1) {
            e.bootstrap_error = sample_std(bootstrap_criterion(e.batch, *model.risk_aversion, bootstrap, seed));
        }
    }
    return e;
}

} // namespace mfpo

#endif
