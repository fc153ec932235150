#ifndef MFPO_FILTER_HPP
#define MFPO_FILTER_HPP

#include "core.hpp"
#include "marginal_flow.hpp"
#include "measures.hpp"
#include "problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace mfpo {

/// Unnormalized and normalized conditional law of the hidden state on its grid.
/// In log-domain mode the unnormalized weights are kept as logarithms, so the
/// mass can fall below the double range without collapsing.
struct FilterState {
    int n = 0;
    std::size_t y = 0;  // current observation cell
    DiscreteMeasure normalized;
    double log_mass = 0.0;
    bool log_domain = false;
    std::vector<double> log_weights;  // log-domain only
    std::vector<double> weights;      // linear domain only

    double mass() const { return std::exp(log_mass); }

    DiscreteMeasure unnormalized() const {
        if (!log_domain) {
            return DiscreteMeasure::unnormalized({weights.size()}, weights);
        }
        std::vector<double> w(log_weights.size());
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(log_weights[k]);
        return DiscreteMeasure::unnormalized({w.size()}, std::move(w));
    }
};

struct FilterOptions {
    bool log_domain = false;
    double collapse_floor = 1e-300;
};

/// Conditional law of X_0 given the initial observation cell y0 under the joint initial law m0.
inline FilterState ks_init(const DiscreteMeasure& m0, std::size_t y0, const FilterOptions& opt = {}) {
    require_pair(m0);
    const std::size_t nx = m0.extent(0), ny = m0.extent(1);
    if (y0 >= ny) {
        throw IndexError("initial observation cell out of range");
    }
    std::vector<double> w(nx);
    double s = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        w[i] = m0[i * ny + y0];
        s += w[i];
    }
    if (!(s > 0.0)) {
        throw NumericalError("unreachable observation: initial cell " + std::to_string(y0) + " has zero probability");
    }
    for (auto& v : w) v /= s;
    FilterState st;
    st.n = 0;
    st.y = y0;
    st.log_domain = opt.log_domain;
    st.normalized = DiscreteMeasure::normalized({nx}, w);
    if (opt.log_domain) {
        st.log_weights.resize(nx);
        for (std::size_t i = 0; i < nx; ++i) {
            st.log_weights[i] = w[i] > 0.0 ? std::log(w[i]) : -std::numeric_limits<double>::infinity();
        }
    } else {
        st.weights = std::move(w);
    }
    return st;
}

/// One Kallianpur-Streibel step: predict through P^c(., mu_n, .) where mu_n is the
/// unconditional hidden marginal, then weight by h(x', y_n, c, y_{n+1}).
inline FilterState ks_update(const FilterState& st, const QuantizedProblem& p, const DiscreteMeasure& mu_n,
                             ControlIndex c, std::size_t y_next, const FilterOptions& opt = {}) {
    if (st.n >= p.horizon) {
        throw IndexError("filter already at the horizon");
    }
    if (c >= p.num_controls || y_next >= p.ny) {
        throw IndexError("control or observation cell out of range");
    }
    const HiddenKernel& hk = p.kernels->hidden(st.n, mu_n);
    const ObsKernel& ok = p.kernels->obs(st.n, c);
    const std::size_t nx = p.nx;
    FilterState out;
    out.n = st.n + 1;
    out.y = y_next;
    out.log_domain = st.log_domain;

    if (!st.log_domain) {
        std::vector<double> w(nx, 0.0);
        for (std::size_t i = 0; i < nx; ++i) {
            const double pi = st.weights[i];
            if (pi == 0.0) continue;
            auto row = hk.row(c, i);
            for (std::size_t k = 0; k < nx; ++k) w[k] += pi * row[k];
        }
        double s = 0.0;
        for (std::size_t k = 0; k < nx; ++k) {
            w[k] *= ok.row(k, st.y)[y_next];
            s += w[k];
        }
        if (!(s > opt.collapse_floor)) {
            throw NumericalError("filter collapse at time " + std::to_string(out.n) +
                                 ": unnormalized mass below floor; use log-domain mode");
        }
        std::vector<double> norm(w);
        for (auto& v : norm) v /= s;
        out.normalized = DiscreteMeasure::normalized({nx}, std::move(norm));
        out.weights = std::move(w);
        out.log_mass = std::log(s);
        return out;
    }

    std::vector<double> lw(nx, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < nx; ++k) {
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < nx; ++i) {
            const double t = st.log_weights[i] + std::log(hk.row(c, i)[k]);
            top = std::max(top, t);
        }
        if (top == -std::numeric_limits<double>::infinity()) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            acc += std::exp(st.log_weights[i] + std::log(hk.row(c, i)[k]) - top);
        }
        lw[k] = top + std::log(acc) + std::log(ok.row(k, st.y)[y_next]);
    }
    const double top = *std::max_element(lw.begin(), lw.end());
    if (top == -std::numeric_limits<double>::infinity()) {
        throw NumericalError("filter collapse at time " + std::to_string(out.n) + ": observation has zero likelihood");
    }
    double acc = 0.0;
    for (double v : lw) acc += std::exp(v - top);
    const double log_s = top + std::log(acc);
    std::vector<double> norm(nx);
    for (std::size_t k = 0; k < nx; ++k) norm[k] = std::exp(lw[k] - log_s);
    out.normalized = DiscreteMeasure::renormalized({nx}, std::move(norm));
    out.log_weights = std::move(lw);
    out.log_mass = log_s;
    return out;
}

/// Hidden marginals mu_0..mu_T of the pair-law flow under a closed-loop policy.
inline std::vector<DiscreteMeasure> hidden_marginal_flow(const QuantizedProblem& p, const ClosedLoopPolicy& policy) {
    std::vector<DiscreteMeasure> out;
    for (const auto& m : marginal_flow(p, policy)) out.push_back(first_marginal(m));
    return out;
}

/// One-step Bayes map: mean of mu_x reweighted by exp(-|J x - y|^2 / 2).
inline Vec phi(const DiscreteMeasure& mu_x, std::span<const Vec> centers, const Mat& J, const Vec& y) {
    if (mu_x.rank() != 1 || mu_x.size() != centers.size()) {
        throw ConfigError("measure does not match the grid");
    }
    std::vector<double> expo(centers.size(), -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        if (mu_x[i] == 0.0) continue;
        expo[i] = -0.5 * (J * centers[i] - y).squaredNorm();
        top = std::max(top, expo[i]);
    }
    Vec num = Vec::Zero(centers.front().size());
    double den = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        if (mu_x[i] == 0.0) continue;
        const double w = mu_x[i] * std::exp(expo[i] - top);
        num += w * centers[i];
        den += w;
    }
    return num / den;
}

/// m + S J^T (J S J^T + I)^{-1} (y - J m).
inline Vec gaussian_posterior_mean(const Vec& m, const Mat& sigma, const Mat& J, const Vec& y) {
    const Mat S = J * sigma * J.transpose() + Mat::Identity(J.rows(), J.rows());
    Eigen::JacobiSVD<Mat> svd(S);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e12) {
        throw NumericalError("innovation covariance is ill-conditioned");
    }
    return m + sigma * J.transpose() * S.ldlt().solve(y - J * m);
}

} // namespace mfpo

#endif
