// Shared fixtures for the unit and acceptance tests: random finite problems with
// mean-field kernels and costs, and brute-force path enumeration.

#ifndef MFPO_TESTS_SUPPORT_HPP
#define MFPO_TESTS_SUPPORT_HPP

#include <mfpo/dp.hpp>
#include <mfpo/filter.hpp>
#include <mfpo/marginal_flow.hpp>
#include <mfpo/problem.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <vector>

namespace mfpo::fixtures {

struct RandomSpec {
    std::size_t nx = 2, ny = 2, nc = 2;
    int horizon = 2;
    std::uint64_t seed = 1;
    /// Fraction of kernel entries forced to zero.
    double sparsity = 0.2;
};

inline std::vector<double> random_row(std::mt19937_64& rng, std::size_t n, double sparsity) {
    std::uniform_real_distribution<double> u(0.05, 1.0), coin(0.0, 1.0);
    std::vector<double> r(n);
    double s = 0.0;
    for (auto& v : r) {
        v = coin(rng) < sparsity ? 0.0 : u(rng);
        s += v;
    }
    if (s == 0.0) {
        r[rng() % n] = 1.0;
        s = 1.0;
    }
    for (auto& v : r) v /= s;
    return r;
}

/// Hidden rows depend on the hidden law through row_k ~ base_k (1 + 2 mu_k); costs
/// carry a term kappa (sum_i mu_i v_i)^2.
inline QuantizedProblem random_problem(const RandomSpec& s) {
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t T = static_cast<std::size_t>(s.horizon);

    std::vector<std::vector<double>> base(T);  // [n][(c * nx + i) * nx + k]
    for (auto& b : base) {
        for (std::size_t r = 0; r < s.nc * s.nx; ++r) {
            auto row = random_row(rng, s.nx, s.sparsity);
            b.insert(b.end(), row.begin(), row.end());
        }
    }
    std::vector<std::vector<ObsKernel>> obs(T);
    for (auto& per_c : obs) {
        for (std::size_t c = 0; c < s.nc; ++c) {
            ObsKernel k(s.nx, s.ny, s.ny);
            for (std::size_t x = 0; x < s.nx; ++x) {
                for (std::size_t j = 0; j < s.ny; ++j) {
                    auto row = random_row(rng, s.ny, s.sparsity);
                    std::copy(row.begin(), row.end(), k.row(x, j).begin());
                }
            }
            per_c.push_back(std::move(k));
        }
    }
    const std::size_t nx = s.nx, nc = s.nc;
    auto hidden = [base, nx, nc](int n, const DiscreteMeasure& mu) {
        HiddenKernel h(nc, nx, nx);
        for (std::size_t c = 0; c < nc; ++c) {
            for (std::size_t i = 0; i < nx; ++i) {
                auto row = h.row(c, i);
                double tot = 0.0;
                for (std::size_t k = 0; k < nx; ++k) {
                    row[k] = base[n][(c * nx + i) * nx + k] * (1.0 + 2.0 * mu[k]);
                    tot += row[k];
                }
                for (auto& v : row) v /= tot;
            }
        }
        return h;
    };

    std::vector<std::vector<double>> cx(T + 1, std::vector<double>(nx)), cc(T, std::vector<double>(nc));
    for (auto& r : cx) for (auto& v : r) v = 2.0 * u(rng);
    for (auto& r : cc) for (auto& v : r) v = u(rng);
    std::vector<double> vals(nx);
    for (auto& v : vals) v = 2.0 * u(rng);
    const double kappa = 1.0 + u(rng);
    auto mf = [vals, kappa](const DiscreteMeasure& mu) {
        double m = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) m += mu[i] * vals[i];
        return kappa * m * m;
    };

    QuantizedProblem p;
    p.horizon = s.horizon;
    p.nx = s.nx;
    p.ny = s.ny;
    p.num_controls = s.nc;
    p.kernels = std::make_shared<TabulatedKernels>(hidden, std::move(obs));
    p.running_costs = [cx, cc, mf, nx, nc](int n, const DiscreteMeasure& mu) {
        std::vector<double> t(nx * nc);
        const double m = mf(mu);
        for (std::size_t i = 0; i < nx; ++i) {
            for (std::size_t c = 0; c < nc; ++c) t[i * nc + c] = cx[n][i] + cc[n][c] + m;
        }
        return t;
    };
    p.terminal_costs = [cx, mf, nx, T](const DiscreteMeasure& mu) {
        std::vector<double> t(nx);
        const double m = mf(mu);
        for (std::size_t i = 0; i < nx; ++i) t[i] = cx[T][i] + m;
        return t;
    };
    p.initial = DiscreteMeasure::normalized({s.nx, s.ny}, random_row(rng, s.nx * s.ny, 0.0));
    return p;
}

inline ClosedLoopPolicy random_policy(const QuantizedProblem& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ClosedLoopPolicy pol;
    for (int n = 0; n < p.horizon; ++n) {
        ControlMap a(p.ny);
        for (auto& c : a) c = rng() % p.num_controls;
        pol.maps.push_back(std::move(a));
    }
    return pol;
}

/// Every pair path (as (x, y) index lists) with its probability under a closed-loop
/// policy, built time by time; hidden_laws[n] is the X_n marginal used at step n.
struct Enumeration {
    struct Path {
        std::vector<std::size_t> x, y;
        double prob = 0.0;
    };
    std::vector<Path> paths;
    std::vector<std::vector<double>> hidden_laws;
    std::vector<std::vector<double>> pair_laws;  // flat i * ny + j, n = 0..T
};

inline Enumeration enumerate_paths(const QuantizedProblem& p, const ClosedLoopPolicy& pol) {
    Enumeration e;
    for (std::size_t i = 0; i < p.nx; ++i) {
        for (std::size_t j = 0; j < p.ny; ++j) {
            e.paths.push_back({{i}, {j}, p.initial[i * p.ny + j]});
        }
    }
    auto laws = [&] {
        std::vector<double> hx(p.nx, 0.0), pj(p.nx * p.ny, 0.0);
        for (const auto& path : e.paths) {
            hx[path.x.back()] += path.prob;
            pj[path.x.back() * p.ny + path.y.back()] += path.prob;
        }
        e.hidden_laws.push_back(hx);
        e.pair_laws.push_back(pj);
    };
    laws();
    for (int n = 0; n < p.horizon; ++n) {
        const DiscreteMeasure mu = DiscreteMeasure::normalized({p.nx}, e.hidden_laws.back());
        const HiddenKernel& hk = p.kernels->hidden(n, mu);
        std::vector<Enumeration::Path> next;
        for (const auto& path : e.paths) {
            const std::size_t i = path.x.back(), j = path.y.back();
            const ControlIndex c = pol.maps[n][j];
            const ObsKernel& ok = p.kernels->obs(n, c);
            for (std::size_t k = 0; k < p.nx; ++k) {
                for (std::size_t l = 0; l < p.ny; ++l) {
                    auto q = path;
                    q.x.push_back(k);
                    q.y.push_back(l);
                    q.prob = path.prob * hk.row(c, i)[k] * ok.row(k, j)[l];
                    next.push_back(std::move(q));
                }
            }
        }
        e.paths = std::move(next);
        laws();
    }
    return e;
}

/// Conditional law of X_T given the observation sequence ys, and P(y_1..y_T | y_0).
inline std::pair<std::vector<double>, double> brute_force_filter(const QuantizedProblem& p, const Enumeration& e,
                                                                  const std::vector<std::size_t>& ys) {
    std::vector<double> w(p.nx, 0.0);
    double y0_mass = 0.0;
    for (std::size_t i = 0; i < p.nx; ++i) y0_mass += p.initial[i * p.ny + ys[0]];
    double s = 0.0;
    for (const auto& path : e.paths) {
        if (path.y == ys) {
            w[path.x.back()] += path.prob;
            s += path.prob;
        }
    }
    if (s > 0.0) {
        for (auto& v : w) v /= s;
    }
    return {w, s / y0_mass};
}

/// Observation sequences of positive probability under the enumeration.
inline std::vector<std::vector<std::size_t>> reachable_observations(const Enumeration& e) {
    std::map<std::vector<std::size_t>, double> seen;
    for (const auto& path : e.paths) {
        if (path.prob > 0.0) seen[path.y] += path.prob;
    }
    std::vector<std::vector<std::size_t>> out;
    for (const auto& [ys, w] : seen) out.push_back(ys);
    return out;
}

} // namespace mfpo::fixtures

#endif
