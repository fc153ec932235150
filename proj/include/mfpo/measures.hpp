#ifndef MFPO_MEASURES_HPP
#define MFPO_MEASURES_HPP

#include "core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

namespace mfpo {

/// Finite-support measure with dense storage over a grid (rank 1) or a product
/// grid of (x, y) pairs (rank 2, row-major: flat = i * ny + j).
///
/// Instances are immutable. A normalized measure has total mass 1 within
/// kMassTol; construction renormalizes drifts below kRenormTol and rejects
/// anything larger. Unnormalized measures keep their mass.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    static DiscreteMeasure normalized(std::vector<std::size_t> shape, std::vector<double> weights) {
        DiscreteMeasure m(std::move(shape), std::move(weights));
        const double s = m.mass_;
        if (std::abs(s - 1.0) > kMassTol) {
            if (std::abs(s - 1.0) > kRenormTol) {
                std::ostringstream os;
                os << "measure mass " << s << " deviates from 1 beyond renormalization tolerance";
                throw NumericalError(os.str());
            }
            for (auto& w : m.weights_) {
                w /= s;
            }
            m.mass_ = 1.0;
        }
        m.normalized_ = true;
        return m;
    }

    static DiscreteMeasure unnormalized(std::vector<std::size_t> shape, std::vector<double> weights) {
        return DiscreteMeasure(std::move(shape), std::move(weights));
    }

    /// Divides by the total mass; throws on zero mass.
    static DiscreteMeasure renormalized(std::vector<std::size_t> shape, std::vector<double> weights) {
        DiscreteMeasure m(std::move(shape), std::move(weights));
        if (!(m.mass_ > 0.0)) {
            throw NumericalError("cannot renormalize a measure of zero mass");
        }
        for (auto& w : m.weights_) {
            w /= m.mass_;
        }
        m.mass_ = 1.0;
        m.normalized_ = true;
        return m;
    }

    static DiscreteMeasure delta(std::vector<std::size_t> shape, std::size_t flat_index) {
        std::size_t n = count(shape);
        if (flat_index >= n) {
            throw IndexError("delta index out of range");
        }
        std::vector<double> w(n, 0.0);
        w[flat_index] = 1.0;
        return normalized(std::move(shape), std::move(w));
    }

    static DiscreteMeasure uniform(std::vector<std::size_t> shape) {
        std::size_t n = count(shape);
        return normalized(std::move(shape), std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    /// Builds from a sparse (support, weights) listing.
    static DiscreteMeasure from_support(std::vector<std::size_t> shape, std::span<const std::size_t> support,
                                        std::span<const double> weights, bool normalize = true) {
        if (support.size() != weights.size()) {
            throw ConfigError("support and weights differ in length");
        }
        std::vector<double> w(count(shape), 0.0);
        for (std::size_t k = 0; k < support.size(); ++k) {
            if (support[k] >= w.size()) {
                throw IndexError("support index out of range");
            }
            w[support[k]] += weights[k];
        }
        return normalize ? normalized(std::move(shape), std::move(w)) : unnormalized(std::move(shape), std::move(w));
    }

    static DiscreteMeasure pair_product(std::span<const double> px, std::span<const double> py) {
        std::vector<double> w(px.size() * py.size());
        for (std::size_t i = 0; i < px.size(); ++i) {
            for (std::size_t j = 0; j < py.size(); ++j) {
                w[i * py.size() + j] = px[i] * py[j];
            }
        }
        return normalized({px.size(), py.size()}, std::move(w));
    }

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return weights_.size(); }
    bool is_normalized() const { return normalized_; }
    double mass() const { return mass_; }

    std::span<const double> weights() const { return weights_; }
    double operator[](std::size_t flat) const { return weights_[flat]; }

    double at(std::size_t i, std::size_t j) const {
        if (rank() != 2 || i >= shape_[0] || j >= shape_[1]) {
            throw IndexError("pair index out of range");
        }
        return weights_[i * shape_[1] + j];
    }

    /// Flat indices carrying positive weight.
    std::vector<std::size_t> support() const {
        std::vector<std::size_t> s;
        for (std::size_t k = 0; k < weights_.size(); ++k) {
            if (weights_[k] > 0.0) {
                s.push_back(k);
            }
        }
        return s;
    }

    bool operator==(const DiscreteMeasure& other) const = default;

private:
    DiscreteMeasure(std::vector<std::size_t> shape, std::vector<double> weights)
        : shape_(std::move(shape)), weights_(std::move(weights)) {
        if (shape_.empty() || shape_.size() > 2) {
            throw ConfigError("measure rank must be 1 or 2");
        }
        if (count(shape_) != weights_.size()) {
            throw ConfigError("measure shape does not match weight count");
        }
        double s = 0.0;
        for (auto& w : weights_) {
            if (!(w >= 0.0)) {
                if (w > -1e-14) {
                    w = 0.0;
                } else {
                    throw NumericalError("negative or NaN weight in measure");
                }
            }
            s += w;
        }
        mass_ = s;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> weights_;
    double mass_ = 0.0;
    bool normalized_ = false;
};

inline void require_pair(const DiscreteMeasure& m) {
    if (m.rank() != 2) {
        throw ConfigError("expected a measure over (x, y) pairs");
    }
}

/// Marginal over x of a pair measure (sums over y).
inline DiscreteMeasure first_marginal(const DiscreteMeasure& m) {
    require_pair(m);
    const std::size_t nx = m.extent(0), ny = m.extent(1);
    std::vector<double> w(nx, 0.0);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            w[i] += m[i * ny + j];
        }
    }
    return m.is_normalized() ? DiscreteMeasure::normalized({nx}, std::move(w))
                             : DiscreteMeasure::unnormalized({nx}, std::move(w));
}

/// Marginal over y of a pair measure (sums over x).
inline DiscreteMeasure second_marginal(const DiscreteMeasure& m) {
    require_pair(m);
    const std::size_t nx = m.extent(0), ny = m.extent(1);
    std::vector<double> w(ny, 0.0);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            w[j] += m[i * ny + j];
        }
    }
    return m.is_normalized() ? DiscreteMeasure::normalized({ny}, std::move(w))
                             : DiscreteMeasure::unnormalized({ny}, std::move(w));
}

/// Weighted mean of grid points under a rank-1 measure.
inline Vec mean_of(const DiscreteMeasure& m, std::span<const Vec> centers) {
    if (m.rank() != 1 || centers.size() != m.size() || centers.empty()) {
        throw ConfigError("centers do not cover the measure support");
    }
    Vec mean = Vec::Zero(centers.front().size());
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (m[k] != 0.0) {
            mean += m[k] * centers[k];
        }
    }
    return mean;
}

/// First and second moments of a law on E x F, stacked as (x; y).
struct MomentPair {
    Vec mean;
    Mat quad;

    Mat covariance() const { return quad - mean * mean.transpose(); }

    /// <mu>(Lambda) = E[z' Lambda z] = trace(Lambda quad).
    double quadratic_form(const Mat& lambda) const { return (lambda * quad).trace(); }

    /// Symmetry and PSD checks on the stated tolerances.
    bool valid(double sym_tol = 1e-12, double psd_floor = -1e-10) const {
        if ((quad - quad.transpose()).cwiseAbs().maxCoeff() > sym_tol) {
            return false;
        }
        Mat cov = covariance();
        cov = 0.5 * (cov + cov.transpose());
        Eigen::SelfAdjointEigenSolver<Mat> es(cov, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() >= psd_floor;
    }
};

inline MomentPair moments(const DiscreteMeasure& m, std::span<const Vec> centers_x, std::span<const Vec> centers_y) {
    require_pair(m);
    const std::size_t nx = m.extent(0), ny = m.extent(1);
    if (centers_x.size() != nx || centers_y.size() != ny) {
        throw ConfigError("grid centers missing for some support index");
    }
    const Eigen::Index dx = centers_x.front().size(), dy = centers_y.front().size();
    MomentPair out{Vec::Zero(dx + dy), Mat::Zero(dx + dy, dx + dy)};
    Vec z(dx + dy);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            const double w = m[i * ny + j];
            if (w == 0.0) {
                continue;
            }
            z << centers_x[i], centers_y[j];
            out.mean += w * z;
            out.quad.noalias() += w * z * z.transpose();
        }
    }
    out.quad = 0.5 * (out.quad + out.quad.transpose());
    return out;
}

/// Sparse law of grid-valued paths ((i_0, j_0), ..., (i_n, j_n)); each step is
/// stored as the flat pair index i * ny + j.
class PathMeasure {
public:
    using Path = std::vector<std::uint32_t>;

    PathMeasure(std::size_t nx, std::size_t ny, std::size_t horizon, std::map<Path, double> entries)
        : nx_(nx), ny_(ny), horizon_(horizon), entries_(std::move(entries)) {
        double s = 0.0;
        for (const auto& [path, w] : entries_) {
            if (path.size() != horizon_ + 1) {
                throw ConfigError("path length differs from horizon + 1");
            }
            for (auto k : path) {
                if (k >= nx_ * ny_) {
                    throw IndexError("path step outside the product grid");
                }
            }
            if (!(w >= 0.0)) {
                throw NumericalError("negative path weight");
            }
            s += w;
        }
        if (std::abs(s - 1.0) > kMassTol) {
            if (std::abs(s - 1.0) > kRenormTol) {
                throw NumericalError("path measure mass deviates from 1");
            }
            for (auto& [path, w] : entries_) {
                w /= s;
            }
        }
    }

    /// Law of a single pair at time 0.
    static PathMeasure from_initial(const DiscreteMeasure& m0) {
        require_pair(m0);
        std::map<Path, double> e;
        for (std::size_t k = 0; k < m0.size(); ++k) {
            if (m0[k] > 0.0) {
                e[{static_cast<std::uint32_t>(k)}] = m0[k];
            }
        }
        return PathMeasure(m0.extent(0), m0.extent(1), 0, std::move(e));
    }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }
    std::size_t horizon() const { return horizon_; }
    const std::map<Path, double>& entries() const { return entries_; }

    std::size_t x_index(std::uint32_t step) const { return step / ny_; }
    std::size_t y_index(std::uint32_t step) const { return step % ny_; }

private:
    std::size_t nx_, ny_, horizon_;
    std::map<Path, double> entries_;
};

/// Law of the l-th pair of the path.
inline DiscreteMeasure marginal(const PathMeasure& paths, std::size_t l) {
    if (l > paths.horizon()) {
        throw IndexError("marginal time index beyond path horizon");
    }
    std::vector<double> w(paths.nx() * paths.ny(), 0.0);
    for (const auto& [path, weight] : paths.entries()) {
        w[path[l]] += weight;
    }
    return DiscreteMeasure::normalized({paths.nx(), paths.ny()}, std::move(w));
}

} // namespace mfpo

#endif
