#ifndef MFPO_QUANTIZE_HPP
#define MFPO_QUANTIZE_HPP

#include "core.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace mfpo {

/// Finite set of pairwise distinct centers in R^d, with Voronoi projection.
class Grid {
public:
    Grid() = default;

    explicit Grid(std::vector<Vec> centers) : centers_(std::move(centers)) {
        if (centers_.empty()) {
            throw ConfigError("grid needs at least one center");
        }
        const auto d = centers_.front().size();
        for (std::size_t a = 0; a < centers_.size(); ++a) {
            if (centers_[a].size() != d) {
                throw ConfigError("grid centers differ in dimension");
            }
            for (std::size_t b = 0; b < a; ++b) {
                if (centers_[a] == centers_[b]) {
                    throw ConfigError("grid centers must be pairwise distinct");
                }
            }
        }
    }

    static Grid scalar(std::initializer_list<double> values) {
        std::vector<Vec> c;
        for (double v : values) {
            c.push_back(Vec::Constant(1, v));
        }
        return Grid(std::move(c));
    }

    std::size_t size() const { return centers_.size(); }
    Eigen::Index dim() const { return centers_.front().size(); }
    const std::vector<Vec>& centers() const { return centers_; }
    const Vec& operator[](std::size_t k) const { return centers_[k]; }

    /// Index of a nearest center in Euclidean norm; ties go to the smallest index.
    /// Squared distances within a relative 1e-12 count as ties, so a point on a
    /// cell boundary does not flip with rounding of the centers.
    std::size_t project(const Vec& x) const {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centers_.size(); ++k) {
            const double dist = (x - centers_[k]).squaredNorm();
            if (dist < best_d * (1.0 - kTieTol)) {
                best_d = dist;
                best = k;
            }
        }
        return best;
    }

    /// Image of the grid under x -> shift + scale * x (componentwise scale).
    Grid affine(const Vec& shift, const Vec& scale) const {
        std::vector<Vec> c;
        c.reserve(centers_.size());
        for (const auto& x : centers_) {
            c.push_back(shift + scale.cwiseProduct(x));
        }
        return Grid(std::move(c));
    }

    bool operator==(const Grid& other) const { return centers_ == other.centers_; }

    static constexpr double kTieTol = 1e-12;

private:
    std::vector<Vec> centers_;
};

inline std::size_t project(const Grid& g, const Vec& x) {
    if (x.size() != g.dim()) {
        throw ConfigError("point dimension differs from grid dimension");
    }
    return g.project(x);
}

/// Weighted point cloud used as the target law of Lloyd iterations.
struct WeightedNodes {
    std::vector<Vec> points;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for the standard normal law (probabilists' weight),
/// nodes and weights from the Golub-Welsch eigenproblem. Weights sum to 1.
inline WeightedNodes gauss_hermite_1d(int degree) {
    if (degree < 1) {
        throw ConfigError("quadrature degree must be positive");
    }
    Mat jacobi = Mat::Zero(degree, degree);
    for (int k = 1; k < degree; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi);
    WeightedNodes out;
    for (int k = 0; k < degree; ++k) {
        out.points.push_back(Vec::Constant(1, es.eigenvalues()[k]));
        const double v = es.eigenvectors()(0, k);
        out.weights.push_back(v * v);
    }
    // Symmetrize: the rule is exactly symmetric in exact arithmetic.
    for (int k = 0; k < degree / 2; ++k) {
        const int m = degree - 1 - k;
        const double x = 0.5 * (out.points[m][0] - out.points[k][0]);
        const double w = 0.5 * (out.weights[k] + out.weights[m]);
        out.points[k][0] = -x;
        out.points[m][0] = x;
        out.weights[k] = out.weights[m] = w;
    }
    if (degree % 2 == 1) {
        out.points[degree / 2][0] = 0.0;
    }
    double s = 0.0;
    for (double w : out.weights) s += w;
    for (double& w : out.weights) w /= s;
    return out;
}

/// Tensor-product Gauss-Hermite rule for N(0, I_d).
inline WeightedNodes gauss_hermite(int degree, Eigen::Index dim) {
    const WeightedNodes one = gauss_hermite_1d(degree);
    WeightedNodes out;
    out.points.push_back(Vec(0));
    out.weights.push_back(1.0);
    for (Eigen::Index axis = 0; axis < dim; ++axis) {
        WeightedNodes next;
        for (std::size_t a = 0; a < out.points.size(); ++a) {
            for (std::size_t b = 0; b < one.points.size(); ++b) {
                Vec p(axis + 1);
                p.head(axis) = out.points[a];
                p[axis] = one.points[b][0];
                next.points.push_back(std::move(p));
                next.weights.push_back(out.weights[a] * one.weights[b]);
            }
        }
        out = std::move(next);
    }
    return out;
}

struct LloydOptions {
    int max_iters = 500;
    double tol = 1e-10;
    /// Tensor Gauss-Hermite degree per axis, used when dim <= quadrature_max_dim.
    int quadrature_degree = 64;
    Eigen::Index quadrature_max_dim = 2;
    /// Sample count of the Monte-Carlo rule used above quadrature_max_dim.
    std::size_t mc_samples = 100000;
    /// Independent initializations; the lowest final distortion wins.
    int restarts = 4;
    std::uint64_t seed = 20240601;
    /// For d = 1, integrate the Voronoi cells of N(0, 1) in closed form instead of by quadrature.
    bool exact_1d = true;
};

struct LloydResult {
    Grid grid;
    std::vector<double> distortion;  // per iteration, before the center update
    std::vector<double> cell_weights;  // mass of each Voronoi cell at the final grid
    int iterations = 0;
    bool converged = false;
    int reseeds = 0;
};

inline double distortion(const Grid& g, const WeightedNodes& nodes) {
    double d = 0.0;
    for (std::size_t k = 0; k < nodes.points.size(); ++k) {
        d += nodes.weights[k] * (nodes.points[k] - g[g.project(nodes.points[k])]).squaredNorm();
    }
    return d;
}

namespace detail {

inline void sort_centers(std::vector<Vec>& c) {
    std::sort(c.begin(), c.end(), [](const Vec& a, const Vec& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    });
}

inline LloydResult lloyd_single(std::vector<Vec> centers, const WeightedNodes& nodes, const LloydOptions& opt,
                                Rng& rng) {
    LloydResult res;
    const std::size_t n = centers.size();
    const Eigen::Index d = centers.front().size();
    std::vector<double> mass(n);
    std::vector<Vec> sum(n, Vec::Zero(d));
    for (int it = 0; it < opt.max_iters; ++it) {
        std::fill(mass.begin(), mass.end(), 0.0);
        for (auto& s : sum) s.setZero();
        double dist = 0.0;
        for (std::size_t k = 0; k < nodes.points.size(); ++k) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < n; ++c) {
                const double dd = (nodes.points[k] - centers[c]).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            mass[best] += nodes.weights[k];
            sum[best] += nodes.weights[k] * nodes.points[k];
            dist += nodes.weights[k] * best_d;
        }
        res.distortion.push_back(dist);
        double shift = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            Vec next;
            if (mass[c] > 0.0) {
                next = sum[c] / mass[c];
            } else {
                next = standard_normal(rng, d);
                ++res.reseeds;
                std::clog << "lloyd: empty Voronoi cell " << c << " at iteration " << it << ", reseeded\n";
            }
            shift = std::max(shift, (next - centers[c]).norm());
            centers[c] = std::move(next);
        }
        res.iterations = it + 1;
        if (shift < opt.tol) {
            res.converged = true;
            break;
        }
    }
    sort_centers(centers);
    res.grid = Grid(std::move(centers));
    res.cell_weights.assign(n, 0.0);
    for (std::size_t k = 0; k < nodes.points.size(); ++k) {
        res.cell_weights[res.grid.project(nodes.points[k])] += nodes.weights[k];
    }
    return res;
}

inline double normal_pdf(double x) { return std::isinf(x) ? 0.0 : std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Lloyd on N(0, 1) with exact cell integrals: mass Phi(b) - Phi(a), first moment
/// phi(a) - phi(b), second moment mass + a phi(a) - b phi(b).
inline LloydResult lloyd_normal_1d(std::vector<double> c, const LloydOptions& opt, Rng& rng) {
    LloydResult res;
    const std::size_t n = c.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> mass(n);
    for (int it = 0; it < opt.max_iters; ++it) {
        std::sort(c.begin(), c.end());
        double dist = 0.0, shift = 0.0;
        std::vector<double> next(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double a = k == 0 ? -inf : 0.5 * (c[k - 1] + c[k]);
            const double b = k + 1 == n ? inf : 0.5 * (c[k] + c[k + 1]);
            const double pa = normal_pdf(a), pb = normal_pdf(b);
            const double m0 = normal_cdf(b) - normal_cdf(a);
            const double m1 = pa - pb;
            const double m2 = m0 + (std::isinf(a) ? 0.0 : a * pa) - (std::isinf(b) ? 0.0 : b * pb);
            dist += m2 - 2.0 * c[k] * m1 + c[k] * c[k] * m0;
            mass[k] = m0;
            if (m0 > 0.0) {
                next[k] = m1 / m0;
            } else {
                next[k] = standard_normal(rng, 1)[0];
                ++res.reseeds;
                std::clog << "lloyd: empty Voronoi cell " << k << " at iteration " << it << ", reseeded\n";
            }
            shift = std::max(shift, std::abs(next[k] - c[k]));
        }
        res.distortion.push_back(dist);
        c = std::move(next);
        res.iterations = it + 1;
        if (shift < opt.tol) {
            res.converged = true;
            break;
        }
    }
    std::sort(c.begin(), c.end());
    // The optimal quantizer of a log-concave symmetric law is unique, hence symmetric.
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double h = 0.5 * (c[n - 1 - k] - c[k]);
        c[k] = -h;
        c[n - 1 - k] = h;
    }
    if (n % 2 == 1) c[n / 2] = 0.0;
    std::vector<Vec> centers;
    for (double v : c) centers.push_back(Vec::Constant(1, v));
    res.grid = Grid(std::move(centers));
    res.cell_weights.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double a = k == 0 ? -inf : 0.5 * (c[k - 1] + c[k]);
        const double b = k + 1 == n ? inf : 0.5 * (c[k] + c[k + 1]);
        res.cell_weights[k] = normal_cdf(b) - normal_cdf(a);
    }
    return res;
}

} // namespace detail

/// Lloyd iterations against an explicit weighted node set (quadrature or sample).
inline LloydResult lloyd(const WeightedNodes& nodes, std::size_t n, const LloydOptions& opt = {}) {
    if (n < 1) {
        throw ConfigError("grid size must be at least 1");
    }
    if (nodes.points.empty()) {
        throw ConfigError("Lloyd target has no nodes");
    }
    const Eigen::Index d = nodes.points.front().size();
    LloydResult best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        Rng rng = make_stream(opt.seed, {stream_tag::lloyd, static_cast<std::uint64_t>(r)});
        std::vector<Vec> init;
        // Initial centers: distinct draws from the standard normal.
        while (init.size() < n) {
            Vec v = standard_normal(rng, d);
            if (std::find(init.begin(), init.end(), v) == init.end()) {
                init.push_back(std::move(v));
            }
        }
        LloydResult res = detail::lloyd_single(std::move(init), nodes, opt, rng);
        const double final_d = distortion(res.grid, nodes);
        if (final_d < best_d - 1e-14) {
            best_d = final_d;
            best = std::move(res);
        }
    }
    return best;
}

/// Lloyd quantizer of N(0, I_d) with n centers: quadrature for small d, Monte Carlo above.
inline LloydResult lloyd_gaussian(Eigen::Index d, std::size_t n, const LloydOptions& opt = {}) {
    if (d < 1) {
        throw ConfigError("dimension must be positive");
    }
    if (d == 1 && opt.exact_1d) {
        if (n < 1) {
            throw ConfigError("grid size must be at least 1");
        }
        LloydResult best;
        double best_d = std::numeric_limits<double>::infinity();
        for (int r = 0; r < std::max(1, opt.restarts); ++r) {
            Rng rng = make_stream(opt.seed, {stream_tag::lloyd, static_cast<std::uint64_t>(r)});
            std::vector<double> init;
            while (init.size() < n) {
                const double v = standard_normal(rng, 1)[0];
                if (std::find(init.begin(), init.end(), v) == init.end()) init.push_back(v);
            }
            LloydResult res = detail::lloyd_normal_1d(std::move(init), opt, rng);
            const double final_d = res.distortion.back();
            if (final_d < best_d - 1e-14) {
                best_d = final_d;
                best = std::move(res);
            }
        }
        return best;
    }
    WeightedNodes nodes;
    if (d <= opt.quadrature_max_dim) {
        nodes = gauss_hermite(opt.quadrature_degree, d);
    } else {
        Rng rng = make_stream(opt.seed, {stream_tag::lloyd, 0xffff});
        for (std::size_t k = 0; k < opt.mc_samples; ++k) {
            nodes.points.push_back(standard_normal(rng, d));
            nodes.weights.push_back(1.0 / static_cast<double>(opt.mc_samples));
        }
    }
    return lloyd(nodes, n, opt);
}

} // namespace mfpo

#endif
