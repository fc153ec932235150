#ifndef MFPO_MODEL_HPP
#define MFPO_MODEL_HPP

#include "core.hpp"
#include "measures.hpp"
#include "rng.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mfpo {

/// Non-owning view of the law of the hidden state (grid measure or particle
/// cloud) passed as the mean-field argument. The mean is computed once.
class HiddenLaw {
public:
    /// Empty weights mean uniform weights (particle cloud).
    HiddenLaw(std::span<const Vec> points, std::span<const double> weights = {})
        : points_(points), weights_(weights) {
        if (points_.empty()) {
            throw ConfigError("hidden law has no points");
        }
        if (!weights_.empty() && weights_.size() != points_.size()) {
            throw ConfigError("hidden law weights do not match points");
        }
        mean_ = Vec::Zero(points_.front().size());
        if (weights_.empty()) {
            for (const auto& p : points_) mean_ += p;
            mean_ /= static_cast<double>(points_.size());
        } else {
            for (std::size_t k = 0; k < points_.size(); ++k) {
                if (weights_[k] != 0.0) mean_ += weights_[k] * points_[k];
            }
        }
    }

    HiddenLaw(const DiscreteMeasure& m, std::span<const Vec> centers) : HiddenLaw(centers, m.weights()) {
        if (m.rank() != 1 || m.size() != centers.size()) {
            throw ConfigError("hidden law measure does not match grid");
        }
    }

    const Vec& mean() const { return mean_; }
    std::span<const Vec> points() const { return points_; }
    double weight(std::size_t k) const {
        return weights_.empty() ? 1.0 / static_cast<double>(points_.size()) : weights_[k];
    }
    std::size_t size() const { return points_.size(); }

private:
    std::span<const Vec> points_;
    std::span<const double> weights_;
    Vec mean_;
};

/// Controlled partially observed mean-field model. Time index n in every map is
/// the current time; step_hidden/step_obs produce the state at n + 1.
struct ModelSpec {
    std::string name;
    Eigen::Index dim_x = 1, dim_y = 1, dim_control = 1, dim_eps = 1, dim_eta = 1;
    int horizon = 1;
    std::vector<Vec> controls;

    std::function<Vec(int n, const Vec& x, const HiddenLaw& mu, const Vec& a, const Vec& eps)> step_hidden;
    std::function<Vec(int n, const Vec& x_next, const Vec& y, const Vec& a, const Vec& eta)> step_obs;
    std::function<double(int n, const Vec& x_next, const Vec& y, const Vec& a, const Vec& y_next)> obs_density;
    std::function<double(int n, const Vec& x, const HiddenLaw& mu, const Vec& a)> running_cost;
    std::function<double(const Vec& x, const HiddenLaw& mu)> terminal_cost;

    std::function<Vec(Rng&)> sample_eps;
    std::function<Vec(Rng&)> sample_eta;
    std::function<std::pair<Vec, Vec>(Rng&)> sample_initial;
    /// Set when X_0 and Y_0 are independent; enables exact product quantization of the initial law.
    bool initial_independent = false;
    /// Set when the initial pair is deterministic.
    std::optional<std::pair<Vec, Vec>> initial_point;

    // Structural facts used to share kernel estimates; conservative defaults.
    bool hidden_uses_law = true;
    bool obs_uses_prev_obs = true;
    bool obs_uses_control = true;

    /// Risk aversion of mean-variance models (terminal cost (g/2)(x - E x)^2 - x).
    std::optional<double> risk_aversion;

    std::size_t num_controls() const { return controls.size(); }

    void validate() const {
        if (controls.empty()) {
            throw ConfigError("control set must be nonempty");
        }
        for (const auto& a : controls) {
            if (a.size() != dim_control) {
                throw ConfigError("control dimension mismatch");
            }
        }
        if (horizon < 1) {
            throw ConfigError("horizon must be at least 1");
        }
        if (!step_hidden || !step_obs || !running_cost || !terminal_cost) {
            throw ConfigError("model is missing a step or cost map");
        }
    }

    bool has_samplers() const { return static_cast<bool>(sample_eps) && static_cast<bool>(sample_eta); }
};

/// One transition: draws the noises and applies the hidden then the observation map.
inline std::pair<Vec, Vec> step(const ModelSpec& model, int n, const Vec& x, const Vec& y, const HiddenLaw& mu,
                                const Vec& a, Rng& rng) {
    if (n < 0 || n >= model.horizon) {
        throw IndexError("step time index outside [0, T)");
    }
    if (!model.has_samplers()) {
        throw ConfigError("model lacks a noise sampler");
    }
    Vec eps = model.sample_eps(rng);
    Vec eta = model.sample_eta(rng);
    Vec x_next = model.step_hidden(n, x, mu, a, eps);
    Vec y_next = model.step_obs(n, x_next, y, a, eta);
    return {std::move(x_next), std::move(y_next)};
}

inline double gaussian_density(const Vec& residual) {
    const double d = static_cast<double>(residual.size());
    return std::exp(-0.5 * residual.squaredNorm()) / std::pow(2.0 * std::numbers::pi, 0.5 * d);
}

// ---------------------------------------------------------------------------
// Linear-quadratic mean-field model
// ---------------------------------------------------------------------------

/// Coefficients of the mean-field LQ model. Dynamics at step k use B[k], Bbar[k],
/// D[k] and J_next[k] (the observation matrix at time k + 1). Costs use Q[k],
/// Qbar[k] for k = 0..T and R[k] for k = 0..T-1.
struct LQParams {
    int horizon = 1;
    std::vector<Mat> B, Bbar, D, J_next;
    std::vector<Mat> Q, Qbar, R;
    /// Mean of X_0 (zero in the reference setting); X_0, Y_0 ~ N(., I) independent.
    std::optional<Vec> x0_mean;

    Eigen::Index dim() const { return Q.empty() ? 0 : Q.front().rows(); }

    static LQParams constant(int T, const Mat& B, const Mat& Bbar, const Mat& D, const Mat& J, const Mat& Q,
                             const Mat& Qbar, const Mat& R) {
        LQParams p;
        p.horizon = T;
        p.B.assign(T, B);
        p.Bbar.assign(T, Bbar);
        p.D.assign(T, D);
        p.J_next.assign(T, J);
        p.Q.assign(T + 1, Q);
        p.Qbar.assign(T + 1, Qbar);
        p.R.assign(T, R);
        return p;
    }

    Vec initial_mean() const { return x0_mean ? *x0_mean : Vec::Zero(dim()); }

    void validate() const {
        const auto T = static_cast<std::size_t>(horizon);
        if (horizon < 1 || B.size() != T || Bbar.size() != T || D.size() != T || J_next.size() != T ||
            R.size() != T || Q.size() != T + 1 || Qbar.size() != T + 1) {
            throw ConfigError("LQ coefficient lists do not match the horizon");
        }
        const Eigen::Index d = dim();
        auto square = [d](const Mat& m) { return m.rows() == d && m.cols() == d; };
        auto psd = [](const Mat& m) {
            if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10) return false;
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
            return es.eigenvalues().minCoeff() >= -1e-12;
        };
        for (std::size_t k = 0; k < T; ++k) {
            if (!square(B[k]) || !square(Bbar[k]) || !square(D[k]) || !square(J_next[k]) || !square(R[k])) {
                throw ConfigError("LQ matrix dimension mismatch at step " + std::to_string(k));
            }
            if (std::abs(D[k].determinant()) < 1e-12 || std::abs(J_next[k].determinant()) < 1e-12) {
                throw ConfigError("D and J must be invertible (step " + std::to_string(k) + ")");
            }
            Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (R[k] + R[k].transpose()), Eigen::EigenvaluesOnly);
            if ((R[k] - R[k].transpose()).cwiseAbs().maxCoeff() > 1e-10 || es.eigenvalues().minCoeff() <= 0.0) {
                throw ConfigError("R must be symmetric positive definite (step " + std::to_string(k) + ")");
            }
        }
        for (std::size_t k = 0; k <= T; ++k) {
            if (!square(Q[k]) || !square(Qbar[k])) {
                throw ConfigError("LQ cost matrix dimension mismatch at step " + std::to_string(k));
            }
            if (!psd(Q[k]) || !psd(Q[k] + Qbar[k])) {
                throw ConfigError("Q and Q + Qbar must be symmetric PSD (step " + std::to_string(k) + ")");
            }
        }
        if (x0_mean && x0_mean->size() != d) {
            throw ConfigError("initial mean dimension mismatch");
        }
    }
};

/// X_{k+1} = B X_k + Bbar E[X_k] + D a + eps, Y_{k+1} = J X_{k+1} + eta, standard Gaussian noises.
inline ModelSpec lq_model(const LQParams& p, std::vector<Vec> controls) {
    p.validate();
    const Eigen::Index d = p.dim();
    ModelSpec m;
    m.name = "lq";
    m.dim_x = m.dim_y = m.dim_control = m.dim_eps = m.dim_eta = d;
    m.horizon = p.horizon;
    m.controls = std::move(controls);
    m.step_hidden = [p](int n, const Vec& x, const HiddenLaw& mu, const Vec& a, const Vec& eps) -> Vec {
        return p.B[n] * x + p.Bbar[n] * mu.mean() + p.D[n] * a + eps;
    };
    m.step_obs = [p](int n, const Vec& x_next, const Vec&, const Vec&, const Vec& eta) -> Vec {
        return p.J_next[n] * x_next + eta;
    };
    m.obs_density = [p](int n, const Vec& x_next, const Vec&, const Vec&, const Vec& y_next) {
        return gaussian_density(y_next - p.J_next[n] * x_next);
    };
    m.running_cost = [p](int n, const Vec& x, const HiddenLaw& mu, const Vec& a) {
        const Vec& mean = mu.mean();
        return x.dot(p.Q[n] * x) + mean.dot(p.Qbar[n] * mean) + a.dot(p.R[n] * a);
    };
    m.terminal_cost = [p](const Vec& x, const HiddenLaw& mu) {
        const auto T = static_cast<std::size_t>(p.horizon);
        const Vec& mean = mu.mean();
        return x.dot(p.Q[T] * x) + mean.dot(p.Qbar[T] * mean);
    };
    m.sample_eps = [d](Rng& rng) { return standard_normal(rng, d); };
    m.sample_eta = [d](Rng& rng) { return standard_normal(rng, d); };
    const Vec x0 = p.initial_mean();
    m.sample_initial = [d, x0](Rng& rng) {
        Vec x = x0 + standard_normal(rng, d);
        Vec y = standard_normal(rng, d);
        return std::make_pair(std::move(x), std::move(y));
    };
    m.initial_independent = true;
    bool uses_law = false;
    for (const auto& b : p.Bbar) uses_law = uses_law || !b.isZero(0.0);
    m.hidden_uses_law = uses_law;
    m.obs_uses_prev_obs = false;
    m.obs_uses_control = false;
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Mean-variance wealth model
// ---------------------------------------------------------------------------

struct PortfolioParams {
    double b0 = 0.02;
    double sigma = 0.05;
    double dt = 0.5;
    double gamma = 2.0;
    int horizon = 5;
    std::vector<double> controls{0.5, 0.75, 1.0, 2.0};
    double x0 = 1.0;
    double obs_std = 1.0;

    void validate() const {
        if (!(sigma > 0.0) || !(gamma > 0.0) || !(dt > 0.0) || horizon < 1) {
            throw ConfigError("portfolio parameters need sigma, gamma, dt > 0 and T >= 1");
        }
        if (controls.empty()) {
            throw ConfigError("portfolio control set must be nonempty");
        }
        if (!(obs_std >= 0.0)) {
            throw ConfigError("observation noise std must be nonnegative");
        }
    }
};

/// X_{k+1} = X_k + a (b0 dt + sigma sqrt(dt) eps), Y_{k+1} = X_{k+1} + obs_std eta,
/// terminal cost (gamma/2)(x - E X_T)^2 - x, no running cost, X_0 = Y_0 = x0.
inline ModelSpec portfolio_model(const PortfolioParams& p) {
    p.validate();
    ModelSpec m;
    m.name = "portfolio";
    m.horizon = p.horizon;
    for (double a : p.controls) m.controls.push_back(Vec::Constant(1, a));
    const double drift = p.b0 * p.dt, vol = p.sigma * std::sqrt(p.dt);
    m.step_hidden = [drift, vol](int, const Vec& x, const HiddenLaw&, const Vec& a, const Vec& eps) -> Vec {
        return x + a[0] * (Vec::Constant(1, drift) + vol * eps);
    };
    const double s = p.obs_std;
    m.step_obs = [s](int, const Vec& x_next, const Vec&, const Vec&, const Vec& eta) -> Vec {
        return x_next + s * eta;
    };
    m.obs_density = [s](int, const Vec& x_next, const Vec&, const Vec&, const Vec& y_next) {
        return gaussian_density((y_next - x_next) / s) / s;
    };
    m.running_cost = [](int, const Vec&, const HiddenLaw&, const Vec&) { return 0.0; };
    const double g = p.gamma;
    m.terminal_cost = [g](const Vec& x, const HiddenLaw& mu) {
        const double c = x[0] - mu.mean()[0];
        return 0.5 * g * c * c - x[0];
    };
    m.sample_eps = [](Rng& rng) { return standard_normal(rng, 1); };
    m.sample_eta = [](Rng& rng) { return standard_normal(rng, 1); };
    const Vec x0 = Vec::Constant(1, p.x0);
    m.sample_initial = [x0](Rng&) { return std::make_pair(x0, x0); };
    m.initial_point = std::make_pair(x0, x0);
    m.hidden_uses_law = false;
    m.obs_uses_prev_obs = false;
    m.obs_uses_control = false;
    m.risk_aversion = p.gamma;
    m.validate();
    return m;
}

} // namespace mfpo

#endif
