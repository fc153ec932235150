#ifndef MFPO_MARGINAL_FLOW_HPP
#define MFPO_MARGINAL_FLOW_HPP

#include "core.hpp"
#include "measures.hpp"
#include "problem.hpp"

#include <string>
#include <vector>

namespace mfpo {

/// Closed-loop policy: at each time n a control index per observation cell.
struct ClosedLoopPolicy {
    std::vector<ControlMap> maps;

    void validate(std::size_t ny, std::size_t num_controls) const {
        for (const auto& m : maps) {
            if (m.size() != ny) {
                throw ConfigError("control map does not cover every observation cell");
            }
            for (auto c : m) {
                if (c >= num_controls) {
                    throw ConfigError("control index out of range");
                }
            }
        }
    }
};

inline void check_control_map(const QuantizedProblem& p, const ControlMap& a) {
    if (a.size() != p.ny) {
        throw ConfigError("control map size differs from the number of observation cells");
    }
    for (auto c : a) {
        if (c >= p.num_controls) {
            throw ConfigError("control index out of range");
        }
    }
}

/// Contribution of observation cell j under control c to the pushed pair law:
/// out[x' * ny + y'] = sum_x P(x, x') h(x', y_j, y') m(x, j).
inline void add_cell_contribution(const DiscreteMeasure& m, const HiddenKernel& hk, const ObsKernel& ok,
                                  std::size_t j, ControlIndex c, double sign, std::vector<double>& out,
                                  std::vector<double>& scratch) {
    const std::size_t nx = m.extent(0), ny = m.extent(1);
    scratch.assign(nx, 0.0);
    for (std::size_t i = 0; i < nx; ++i) {
        const double w = m[i * ny + j];
        if (w == 0.0) {
            continue;
        }
        auto row = hk.row(c, i);
        for (std::size_t k = 0; k < nx; ++k) {
            scratch[k] += w * row[k];
        }
    }
    for (std::size_t k = 0; k < nx; ++k) {
        const double v = sign * scratch[k];
        if (v == 0.0) {
            continue;
        }
        auto orow = ok.row(k, j);
        for (std::size_t l = 0; l < ny; ++l) {
            out[k * ny + l] += v * orow[l];
        }
    }
}

/// One step of the quantized pair-law flow under the closed-loop map a at time n.
/// The hidden kernel is taken at the current hidden marginal.
inline DiscreteMeasure push_marginal(const DiscreteMeasure& m, const QuantizedProblem& p, const ControlMap& a, int n) {
    require_pair(m);
    check_control_map(p, a);
    if (n < 0 || n >= p.horizon) {
        throw IndexError("push time index outside [0, T)");
    }
    const DiscreteMeasure mu_x = first_marginal(m);
    const HiddenKernel& hk = p.kernels->hidden(n, mu_x);
    std::vector<double> out(p.nx * p.ny, 0.0), scratch;
    for (std::size_t j = 0; j < p.ny; ++j) {
        add_cell_contribution(m, hk, p.kernels->obs(n, a[j]), j, a[j], 1.0, out, scratch);
    }
    return DiscreteMeasure::normalized({p.nx, p.ny}, std::move(out));
}

/// Expected running cost of the pair law m under map a at time n.
inline double cost_running(const DiscreteMeasure& m, const QuantizedProblem& p, const ControlMap& a, int n) {
    require_pair(m);
    check_control_map(p, a);
    const auto table = p.running_costs(n, first_marginal(m));
    double total = 0.0;
    for (std::size_t i = 0; i < p.nx; ++i) {
        for (std::size_t j = 0; j < p.ny; ++j) {
            const double w = m[i * p.ny + j];
            if (w != 0.0) {
                total += w * table[i * p.num_controls + a[j]];
            }
        }
    }
    return total;
}

inline double cost_terminal(const DiscreteMeasure& m, const QuantizedProblem& p) {
    require_pair(m);
    const auto table = p.terminal_costs(first_marginal(m));
    double total = 0.0;
    for (std::size_t i = 0; i < p.nx; ++i) {
        for (std::size_t j = 0; j < p.ny; ++j) {
            const double w = m[i * p.ny + j];
            if (w != 0.0) {
                total += w * table[i];
            }
        }
    }
    return total;
}

/// Pair-law flow m_0..m_T under a closed-loop policy (no projection).
inline std::vector<DiscreteMeasure> marginal_flow(const QuantizedProblem& p, const ClosedLoopPolicy& policy) {
    if (policy.maps.size() != static_cast<std::size_t>(p.horizon)) {
        throw ConfigError("policy length differs from horizon");
    }
    std::vector<DiscreteMeasure> flow{p.initial};
    for (int n = 0; n < p.horizon; ++n) {
        flow.push_back(push_marginal(flow.back(), p, policy.maps[n], n));
    }
    return flow;
}

/// Exact expected cost of a closed-loop policy on the quantized chain.
inline double evaluate_closed_loop(const QuantizedProblem& p, const ClosedLoopPolicy& policy) {
    const auto flow = marginal_flow(p, policy);
    double total = 0.0;
    for (int n = 0; n < p.horizon; ++n) {
        total += cost_running(flow[n], p, policy.maps[n], n);
    }
    return total + cost_terminal(flow.back(), p);
}

} // namespace mfpo

#endif
