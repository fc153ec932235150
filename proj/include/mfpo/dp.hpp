#ifndef MFPO_DP_HPP
#define MFPO_DP_HPP

#include "codebook.hpp"
#include "core.hpp"
#include "marginal_flow.hpp"
#include "measures.hpp"
#include "problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace mfpo {

enum class OptimizerMode { automatic, enumerate, coordinate_descent, constant };

inline std::string to_string(OptimizerMode m) {
    switch (m) {
    case OptimizerMode::automatic: return "auto";
    case OptimizerMode::enumerate: return "enumerate";
    case OptimizerMode::coordinate_descent: return "cd";
    case OptimizerMode::constant: return "constant";
    }
    return "?";
}

inline OptimizerMode parse_optimizer_mode(const std::string& s) {
    if (s == "auto") return OptimizerMode::automatic;
    if (s == "enumerate") return OptimizerMode::enumerate;
    if (s == "cd" || s == "coordinate_descent") return OptimizerMode::coordinate_descent;
    if (s == "constant") return OptimizerMode::constant;
    throw ConfigError("unknown optimizer mode '" + s + "'");
}

struct OptimizerOptions {
    OptimizerMode mode = OptimizerMode::automatic;
    /// automatic picks enumerate up to this many maps, coordinate descent above.
    double auto_enumerate_limit = 4096;
    /// Hard refusal threshold for enumerate.
    double enumerate_limit = 1e6;
    int max_sweeps = 5;
};

struct MapChoice {
    ControlMap map;
    double value = 0.0;
    /// Set by coordinate descent when the last allowed sweep still moved.
    bool unconverged = false;
    OptimizerMode mode_used = OptimizerMode::enumerate;
};

/// The one-step objective a -> C_n(m, a) + continuation(push(m, a)), with the
/// push split into per-cell pieces so that changing one cell is cheap.
class StepObjective {
public:
    using Continuation = std::function<double(std::span<const double> pushed)>;

    StepObjective(const DiscreteMeasure& m, const QuantizedProblem& p, int n, Continuation cont)
        : nx_(p.nx), ny_(p.ny), nc_(p.num_controls), cont_(std::move(cont)) {
        require_pair(m);
        if (m.extent(0) != p.nx || m.extent(1) != p.ny) {
            throw ConfigError("measure shape differs from the problem grid");
        }
        const DiscreteMeasure mu_x = first_marginal(m);
        const HiddenKernel& hk = p.kernels->hidden(n, mu_x);
        const auto table = p.running_costs(n, mu_x);
        pieces_.assign(ny_ * nc_, std::vector<double>(nx_ * ny_, 0.0));
        running_.assign(ny_ * nc_, 0.0);
        std::vector<double> scratch;
        for (std::size_t j = 0; j < ny_; ++j) {
            double cell_mass = 0.0;
            for (std::size_t i = 0; i < nx_; ++i) cell_mass += m[i * ny_ + j];
            for (ControlIndex c = 0; c < nc_; ++c) {
                if (cell_mass > 0.0) {
                    add_cell_contribution(m, hk, p.kernels->obs(n, c), j, c, 1.0, pieces_[j * nc_ + c], scratch);
                }
                double r = 0.0;
                for (std::size_t i = 0; i < nx_; ++i) {
                    const double w = m[i * ny_ + j];
                    if (w != 0.0) r += w * table[i * nc_ + c];
                }
                running_[j * nc_ + c] = r;
            }
        }
    }

    std::size_t cells() const { return ny_; }
    std::size_t controls() const { return nc_; }

    double operator()(const ControlMap& a) const {
        std::vector<double> pushed(nx_ * ny_, 0.0);
        double r = 0.0;
        for (std::size_t j = 0; j < ny_; ++j) {
            const auto& piece = pieces_[j * nc_ + a[j]];
            for (std::size_t e = 0; e < pushed.size(); ++e) pushed[e] += piece[e];
            r += running_[j * nc_ + a[j]];
        }
        return r + cont_(pushed);
    }

    /// Objective with cell j switched to c, given the push and running cost of a.
    double with_cell(const std::vector<double>& pushed, double running, const ControlMap& a, std::size_t j,
                     ControlIndex c, std::vector<double>& work) const {
        const auto& old_piece = pieces_[j * nc_ + a[j]];
        const auto& new_piece = pieces_[j * nc_ + c];
        work.resize(pushed.size());
        for (std::size_t e = 0; e < pushed.size(); ++e) work[e] = pushed[e] - old_piece[e] + new_piece[e];
        return running - running_[j * nc_ + a[j]] + running_[j * nc_ + c] + cont_(work);
    }

    void state(const ControlMap& a, std::vector<double>& pushed, double& running) const {
        pushed.assign(nx_ * ny_, 0.0);
        running = 0.0;
        for (std::size_t j = 0; j < ny_; ++j) {
            const auto& piece = pieces_[j * nc_ + a[j]];
            for (std::size_t e = 0; e < pushed.size(); ++e) pushed[e] += piece[e];
            running += running_[j * nc_ + a[j]];
        }
    }

private:
    std::size_t nx_, ny_, nc_;
    Continuation cont_;
    std::vector<std::vector<double>> pieces_;
    std::vector<double> running_;
};

/// Minimizes the one-step objective over closed-loop maps. Ties go to the
/// lexicographically smallest map (cell 0 first), i.e. to smaller control indices.
inline MapChoice optimize_control_map(const StepObjective& f, const OptimizerOptions& opt = {}) {
    const std::size_t ny = f.cells(), nc = f.controls();
    const double count = control_map_count(nc, ny);
    OptimizerMode mode = opt.mode;
    if (mode == OptimizerMode::automatic) {
        mode = count <= opt.auto_enumerate_limit ? OptimizerMode::enumerate : OptimizerMode::coordinate_descent;
    }
    MapChoice best;
    best.mode_used = mode;
    best.value = std::numeric_limits<double>::infinity();

    if (mode == OptimizerMode::enumerate) {
        if (count > opt.enumerate_limit) {
            throw BudgetExceeded("enumerate refused: " + std::to_string(static_cast<long double>(count)) +
                                     " control maps exceed the limit",
                                 count);
        }
        const auto total = static_cast<std::uint64_t>(count);
        for (std::uint64_t code = 0; code < total; ++code) {
            ControlMap a = decode_control_map(code, nc, ny);
            const double v = f(a);
            if (v < best.value) {
                best.value = v;
                best.map = std::move(a);
            }
        }
        return best;
    }

    for (ControlIndex c = 0; c < nc; ++c) {
        ControlMap a(ny, c);
        const double v = f(a);
        if (v < best.value) {
            best.value = v;
            best.map = std::move(a);
        }
    }
    if (mode == OptimizerMode::constant) {
        return best;
    }

    std::vector<double> pushed, work;
    double running = 0.0;
    f.state(best.map, pushed, running);
    bool changed = true;
    for (int sweep = 0; sweep < opt.max_sweeps && changed; ++sweep) {
        changed = false;
        for (std::size_t j = 0; j < ny; ++j) {
            ControlIndex arg = best.map[j];
            double arg_v = best.value;
            for (ControlIndex c = 0; c < nc; ++c) {
                if (c == best.map[j]) continue;
                const double v = f.with_cell(pushed, running, best.map, j, c, work);
                if (v < arg_v - 1e-14 * (1.0 + std::abs(arg_v))) {
                    arg_v = v;
                    arg = c;
                }
            }
            if (arg != best.map[j]) {
                best.map[j] = arg;
                changed = true;
                f.state(best.map, pushed, running);
                best.value = f(best.map);
            }
        }
    }
    best.unconverged = changed;
    best.value = f(best.map);
    return best;
}

// ---------------------------------------------------------------------------
// Quantized marginal-flow DP over a codebook
// ---------------------------------------------------------------------------

struct ValueEntry {
    std::size_t codeword = 0;
    double value = 0.0;
    ControlMap control;  // empty at the terminal time
    std::size_t next_codeword = 0;
};

/// W~_n over the codewords of each time layer.
struct ValueTable {
    std::vector<std::vector<ValueEntry>> layers;  // index n = 0..T
    std::vector<std::map<std::size_t, std::size_t>> position;

    const ValueEntry& at(int n, std::size_t codeword) const {
        const auto& pos = position.at(static_cast<std::size_t>(n));
        auto it = pos.find(codeword);
        if (it == pos.end()) {
            throw IndexError("codeword " + std::to_string(codeword) + " has no value at time " + std::to_string(n));
        }
        return layers[static_cast<std::size_t>(n)][it->second];
    }
};

struct QuantizedDPOptions {
    OptimizerOptions optimizer;
};

struct QuantizedDPResult {
    double value = 0.0;
    ClosedLoopPolicy policy;
    /// Codewords visited by the policy, times 0..T.
    std::vector<std::size_t> trajectory;
    ValueTable table;
    bool unconverged = false;
    OptimizerMode mode_used = OptimizerMode::enumerate;
};

/// Codewords usable at time n: the layer-n members, or the whole book if that layer is empty.
inline std::vector<std::size_t> dp_members(const MeasureCodebook& cb, int n) {
    auto members = cb.layer_members(n);
    if (members.empty()) {
        members.resize(cb.size());
        std::iota(members.begin(), members.end(), 0);
    }
    return members;
}

/// Backward recursion W~_T = Gamma, W~_n(l) = min_a C_n(p^l, a) + W~_{n+1}(Proj push(p^l, a)).
inline QuantizedDPResult quantized_dp(const QuantizedProblem& p, const MeasureCodebook& cb,
                                      const QuantizedDPOptions& opt = {}) {
    p.validate();
    if (cb.empty()) {
        throw ConfigError("codebook is empty");
    }
    if (cb[0].extent(0) != p.nx || cb[0].extent(1) != p.ny) {
        throw ConfigError("codebook shape differs from the problem grid");
    }
    const int T = p.horizon;
    QuantizedDPResult out;
    out.table.layers.resize(T + 1);
    out.table.position.resize(T + 1);
    std::vector<std::vector<std::size_t>> members(T + 1);
    for (int n = 0; n <= T; ++n) members[n] = dp_members(cb, n);

    for (auto l : members[T]) {
        out.table.position[T][l] = out.table.layers[T].size();
        out.table.layers[T].push_back({l, cost_terminal(cb[l], p), {}, l});
    }
    bool first_mode = true;
    for (int n = T - 1; n >= 0; --n) {
        const auto& next_members = members[n + 1];
        const auto& next_layer = out.table.layers[n + 1];
        for (auto l : members[n]) {
            std::size_t arg_next = 0;
            auto project_value = [&](std::span<const double> q, std::size_t* which) {
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < next_members.size(); ++k) {
                    const double d = frobenius_sq(q, cb[next_members[k]].weights());
                    if (d < best_d) {
                        best_d = d;
                        best = k;
                    }
                }
                if (which) *which = next_members[best];
                return next_layer[best].value;
            };
            StepObjective f(cb[l], p, n, [&](std::span<const double> q) { return project_value(q, nullptr); });
            MapChoice choice = optimize_control_map(f, opt.optimizer);
            out.unconverged = out.unconverged || choice.unconverged;
            if (first_mode) {
                out.mode_used = choice.mode_used;
                first_mode = false;
            }
            // Fresh push of the chosen map fixes the successor and the stored value.
            const DiscreteMeasure q = push_marginal(cb[l], p, choice.map, n);
            const double cont = project_value(q.weights(), &arg_next);
            const double v = cost_running(cb[l], p, choice.map, n) + cont;
            out.table.position[n][l] = out.table.layers[n].size();
            out.table.layers[n].push_back({l, v, std::move(choice.map), arg_next});
        }
    }

    std::size_t l = codebook_project(cb, p.initial, members[0]);
    out.value = out.table.at(0, l).value;
    out.trajectory.push_back(l);
    for (int n = 0; n < T; ++n) {
        const auto& e = out.table.at(n, l);
        out.policy.maps.push_back(e.control);
        l = e.next_codeword;
        out.trajectory.push_back(l);
    }
    return out;
}

/// Largest violation of W~_n(l) = C_n(p^l, a*) + W~_{n+1}(next) over the table.
inline double dp_consistency_gap(const QuantizedProblem& p, const MeasureCodebook& cb, const ValueTable& t) {
    double gap = 0.0;
    const int T = static_cast<int>(t.layers.size()) - 1;
    for (int n = 0; n < T; ++n) {
        for (const auto& e : t.layers[n]) {
            const double rhs = cost_running(cb[e.codeword], p, e.control, n) + t.at(n + 1, e.next_codeword).value;
            gap = std::max(gap, std::abs(e.value - rhs));
        }
    }
    return gap;
}

// ---------------------------------------------------------------------------
// Exact path-measure DP (desk-scale oracle)
// ---------------------------------------------------------------------------

enum class ControlClass { closed_loop, path_dependent };

/// Control at one time: indexed by the current y-cell (closed loop) or by the
/// y-history y_0..y_n (path dependent).
struct PathControl {
    ControlMap by_cell;
    std::map<std::vector<std::uint32_t>, ControlIndex> by_history;
};

struct ExactDPOptions {
    ControlClass controls = ControlClass::path_dependent;
    /// Refuse when the number of enumerated control sequences exceeds this.
    double budget = 2e6;
};

struct ExactDPResult {
    double value = 0.0;
    std::vector<PathControl> policy;
    double sequences = 0.0;
};

namespace detail {

inline std::vector<std::uint32_t> y_history(const PathMeasure& M, const PathMeasure::Path& path) {
    std::vector<std::uint32_t> h;
    h.reserve(path.size());
    for (auto s : path) h.push_back(static_cast<std::uint32_t>(M.y_index(s)));
    return h;
}

inline std::vector<std::vector<std::uint32_t>> histories(const PathMeasure& M) {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& [path, w] : M.entries()) {
        if (w > 0.0) out.push_back(y_history(M, path));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

class ExactSolver {
public:
    ExactSolver(const QuantizedProblem& p, ControlClass cls) : p_(p), cls_(cls) {}

    /// Number of controls candidate at time n for measure M.
    std::vector<PathControl> candidates(const PathMeasure& M) const {
        std::vector<PathControl> out;
        if (cls_ == ControlClass::closed_loop) {
            const auto total = static_cast<std::uint64_t>(control_map_count(p_.num_controls, p_.ny));
            for (std::uint64_t code = 0; code < total; ++code) {
                out.push_back({decode_control_map(code, p_.num_controls, p_.ny), {}});
            }
            return out;
        }
        const auto hs = histories(M);
        const auto total = static_cast<std::uint64_t>(control_map_count(p_.num_controls, hs.size()));
        for (std::uint64_t code = 0; code < total; ++code) {
            ControlMap digits = decode_control_map(code, p_.num_controls, hs.size());
            PathControl pc;
            for (std::size_t h = 0; h < hs.size(); ++h) pc.by_history[hs[h]] = digits[h];
            out.push_back(std::move(pc));
        }
        return out;
    }

    ControlIndex control_for(const PathMeasure& M, const PathMeasure::Path& path, const PathControl& a) const {
        if (cls_ == ControlClass::closed_loop) {
            return a.by_cell[M.y_index(path.back())];
        }
        return a.by_history.at(y_history(M, path));
    }

    double running(const PathMeasure& M, const PathControl& a, int n, const DiscreteMeasure& mu_x) const {
        const auto table = p_.running_costs(n, mu_x);
        double total = 0.0;
        for (const auto& [path, w] : M.entries()) {
            total += w * table[M.x_index(path.back()) * p_.num_controls + control_for(M, path, a)];
        }
        return total;
    }

    /// Pushes every path; with `marginal_only` the pair law at n + 1 is returned
    /// through `last` and no path measure is built.
    PathMeasure push(const PathMeasure& M, const PathControl& a, int n, const DiscreteMeasure& mu_x,
                     bool marginal_only, std::vector<double>* last) const {
        const HiddenKernel& hk = p_.kernels->hidden(n, mu_x);
        std::map<PathMeasure::Path, double> next;
        if (last) last->assign(p_.nx * p_.ny, 0.0);
        for (const auto& [path, w] : M.entries()) {
            const std::size_t i = M.x_index(path.back()), j = M.y_index(path.back());
            const ControlIndex c = control_for(M, path, a);
            const ObsKernel& ok = p_.kernels->obs(n, c);
            auto hrow = hk.row(c, i);
            for (std::size_t k = 0; k < p_.nx; ++k) {
                if (hrow[k] == 0.0) continue;
                auto orow = ok.row(k, j);
                for (std::size_t l = 0; l < p_.ny; ++l) {
                    const double v = w * hrow[k] * orow[l];
                    if (v == 0.0) continue;
                    if (last) (*last)[k * p_.ny + l] += v;
                    if (!marginal_only) {
                        auto ext = path;
                        ext.push_back(static_cast<std::uint32_t>(k * p_.ny + l));
                        next[std::move(ext)] += v;
                    }
                }
            }
        }
        if (marginal_only) {
            return M;
        }
        return PathMeasure(p_.nx, p_.ny, M.horizon() + 1, std::move(next));
    }

    std::pair<double, std::vector<PathControl>> solve(const PathMeasure& M, int n) {
        const DiscreteMeasure mu_x = first_marginal(marginal(M, M.horizon()));
        double best = std::numeric_limits<double>::infinity();
        std::vector<PathControl> best_seq;
        for (auto& a : candidates(M)) {
            ++sequences_;
            double v = running(M, a, n, mu_x);
            std::vector<PathControl> rest;
            if (n + 1 == p_.horizon) {
                std::vector<double> last;
                push(M, a, n, mu_x, true, &last);
                v += cost_terminal(DiscreteMeasure::normalized({p_.nx, p_.ny}, std::move(last)), p_);
            } else {
                auto [cont, seq] = solve(push(M, a, n, mu_x, false, nullptr), n + 1);
                v += cont;
                rest = std::move(seq);
            }
            if (v < best) {
                best = v;
                best_seq.clear();
                best_seq.push_back(std::move(a));
                for (auto& r : rest) best_seq.push_back(std::move(r));
            }
        }
        return {best, std::move(best_seq)};
    }

    double sequences() const { return sequences_; }

private:
    const QuantizedProblem& p_;
    ControlClass cls_;
    double sequences_ = 0.0;
};

} // namespace detail

/// Upper bound on the control sequences the exact recursion enumerates.
inline double exact_dp_sequence_bound(const QuantizedProblem& p, ControlClass cls) {
    double total = 1.0;
    for (int n = 0; n < p.horizon; ++n) {
        const double choices = cls == ControlClass::closed_loop
                                   ? control_map_count(p.num_controls, p.ny)
                                   : std::pow(static_cast<double>(p.num_controls),
                                              std::pow(static_cast<double>(p.ny), n + 1));
        total *= choices;
    }
    return total;
}

/// Exact value of the quantized problem by backward induction over path measures,
/// enumerating every control at every reachable path measure.
inline ExactDPResult exact_path_dp(const QuantizedProblem& p, const ExactDPOptions& opt = {}) {
    p.validate();
    const double bound = exact_dp_sequence_bound(p, opt.controls);
    if (bound > opt.budget) {
        throw BudgetExceeded("exact path DP refused: up to " + std::to_string(static_cast<long double>(bound)) +
                                 " control sequences exceed the budget",
                             bound);
    }
    detail::ExactSolver solver(p, opt.controls);
    auto [v, seq] = solver.solve(PathMeasure::from_initial(p.initial), 0);
    ExactDPResult out;
    out.value = v;
    out.policy = std::move(seq);
    out.sequences = solver.sequences();
    return out;
}

} // namespace mfpo

#endif
