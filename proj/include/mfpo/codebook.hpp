#ifndef MFPO_CODEBOOK_HPP
#define MFPO_CODEBOOK_HPP

#include "core.hpp"
#include "marginal_flow.hpp"
#include "measures.hpp"
#include "problem.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace mfpo {

/// Finite family of pair laws p^1..p^L onto which pushed laws are projected.
/// Each codeword carries the time layer it was generated for; projection can
/// search the whole book or a single layer.
class MeasureCodebook {
public:
    MeasureCodebook() = default;

    void add(DiscreteMeasure p, int layer) {
        require_pair(p);
        if (!p.is_normalized()) {
            throw ConfigError("codewords must be normalized");
        }
        if (!words_.empty() && p.shape() != words_.front().shape()) {
            throw ConfigError("codewords must share one product grid");
        }
        words_.push_back(std::move(p));
        layers_.push_back(layer);
    }

    std::size_t size() const { return words_.size(); }
    bool empty() const { return words_.empty(); }
    const DiscreteMeasure& operator[](std::size_t l) const { return words_[l]; }
    int layer(std::size_t l) const { return layers_[l]; }
    const std::vector<DiscreteMeasure>& words() const { return words_; }

    std::vector<std::size_t> layer_members(int layer) const {
        std::vector<std::size_t> out;
        for (std::size_t l = 0; l < words_.size(); ++l) {
            if (layers_[l] == layer) out.push_back(l);
        }
        return out;
    }

private:
    std::vector<DiscreteMeasure> words_;
    std::vector<int> layers_;
};

inline double frobenius_sq(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

/// argmin over codewords of the Frobenius distance to q; ties to the smallest index.
inline std::size_t codebook_project(const MeasureCodebook& cb, const DiscreteMeasure& q) {
    if (cb.empty()) {
        throw ConfigError("codebook is empty");
    }
    if (q.shape() != cb[0].shape()) {
        throw ConfigError("measure shape differs from codebook shape");
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < cb.size(); ++l) {
        const double d = frobenius_sq(q.weights(), cb[l].weights());
        if (d < best_d) {
            best_d = d;
            best = l;
        }
    }
    return best;
}

/// Projection restricted to the codewords of one layer (member indices in ascending order).
inline std::size_t codebook_project(const MeasureCodebook& cb, const DiscreteMeasure& q,
                                    const std::vector<std::size_t>& members) {
    if (members.empty()) {
        throw ConfigError("codebook layer is empty");
    }
    std::size_t best = members.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (auto l : members) {
        const double d = frobenius_sq(q.weights(), cb[l].weights());
        if (d < best_d) {
            best_d = d;
            best = l;
        }
    }
    return best;
}

struct CodebookOptions {
    /// Maximum codewords per time layer; larger reachable sets are clustered.
    std::size_t max_per_layer = 256;
    /// Explore every control map when |C|^N is at most this; otherwise sample.
    double explore_enumerate_budget = 4096;
    /// Random maps explored per frontier law when sampling (constant maps always included).
    std::size_t random_maps = 28;
    /// Entries equal within this are the same law.
    double dedupe_tol = 1e-9;
    int kmeans_iters = 15;
    std::uint64_t seed = 7;
};

struct CodebookBuild {
    MeasureCodebook codebook;
    /// Distinct laws found per layer before clustering.
    std::vector<std::size_t> reachable;
    /// True when no layer was clustered and every control map was explored.
    bool lossless = true;
    bool enumerated_maps = true;
};

/// Number of closed-loop maps |C|^N as a double (may be huge).
inline double control_map_count(std::size_t num_controls, std::size_t ny) {
    return std::pow(static_cast<double>(num_controls), static_cast<double>(ny));
}

/// Decodes map number `code` in base |C| with cell 0 as the most significant digit.
inline ControlMap decode_control_map(std::uint64_t code, std::size_t num_controls, std::size_t ny) {
    ControlMap a(ny, 0);
    for (std::size_t k = ny; k-- > 0;) {
        a[k] = code % num_controls;
        code /= num_controls;
    }
    return a;
}

namespace detail {

struct LawKey {
    std::vector<std::int64_t> cells;
    bool operator<(const LawKey& o) const { return cells < o.cells; }
};

inline LawKey law_key(const DiscreteMeasure& m, double tol) {
    LawKey k;
    k.cells.reserve(m.size());
    for (double w : m.weights()) {
        k.cells.push_back(static_cast<std::int64_t>(std::llround(w / tol)));
    }
    return k;
}

/// Lloyd clustering of probability matrices in Frobenius metric.
inline std::vector<DiscreteMeasure> cluster_laws(const std::vector<DiscreteMeasure>& laws, std::size_t k,
                                                 int iters, Rng& rng) {
    const std::size_t n = laws.size(), dim = laws.front().size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<double>> centers(k);
    for (std::size_t c = 0; c < k; ++c) {
        auto w = laws[order[c]].weights();
        centers[c].assign(w.begin(), w.end());
    }
    std::vector<std::size_t> assign(n, 0);
    for (int it = 0; it < iters; ++it) {
        bool changed = false;
        for (std::size_t a = 0; a < n; ++a) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = frobenius_sq(laws[a].weights(), centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (it == 0 || assign[a] != best) changed = true;
            assign[a] = best;
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t a = 0; a < n; ++a) {
            auto w = laws[a].weights();
            for (std::size_t e = 0; e < dim; ++e) sums[assign[a]][e] += w[e];
            counts[assign[a]]++;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t e = 0; e < dim; ++e) centers[c][e] = sums[c][e] / static_cast<double>(counts[c]);
        }
    }
    std::vector<DiscreteMeasure> out;
    out.reserve(k);
    for (auto& c : centers) {
        out.push_back(DiscreteMeasure::renormalized(laws.front().shape(), std::move(c)));
    }
    return out;
}

} // namespace detail

/// Forward exploration of the pair laws reachable from the quantized initial law,
/// one layer per time. Layers with at most max_per_layer distinct laws are kept
/// verbatim; larger ones are clustered to max_per_layer centroids.
inline CodebookBuild codebook_build(const QuantizedProblem& p, const CodebookOptions& opt = {}) {
    p.validate();
    if (opt.max_per_layer < 1) {
        throw ConfigError("codebook cap must be at least 1");
    }
    CodebookBuild out;
    const double map_count = control_map_count(p.num_controls, p.ny);
    out.enumerated_maps = map_count <= opt.explore_enumerate_budget;
    out.lossless = out.enumerated_maps;

    std::vector<DiscreteMeasure> frontier{p.initial};
    out.codebook.add(p.initial, 0);
    out.reachable.push_back(1);
    for (int n = 0; n < p.horizon; ++n) {
        std::map<detail::LawKey, std::size_t> seen;
        std::vector<DiscreteMeasure> next;
        auto visit = [&](const DiscreteMeasure& m, const ControlMap& a) {
            DiscreteMeasure q = push_marginal(m, p, a, n);
            auto key = detail::law_key(q, opt.dedupe_tol);
            if (seen.emplace(std::move(key), next.size()).second) {
                next.push_back(std::move(q));
            }
        };
        for (std::size_t f = 0; f < frontier.size(); ++f) {
            if (out.enumerated_maps) {
                const auto total = static_cast<std::uint64_t>(map_count);
                for (std::uint64_t code = 0; code < total; ++code) {
                    visit(frontier[f], decode_control_map(code, p.num_controls, p.ny));
                }
            } else {
                for (ControlIndex c = 0; c < p.num_controls; ++c) {
                    visit(frontier[f], ControlMap(p.ny, c));
                }
                Rng rng = make_stream(opt.seed, {stream_tag::codebook, static_cast<std::uint64_t>(n), f});
                std::uniform_int_distribution<std::size_t> pick(0, p.num_controls - 1);
                for (std::size_t r = 0; r < opt.random_maps; ++r) {
                    ControlMap a(p.ny);
                    for (auto& c : a) c = pick(rng);
                    visit(frontier[f], a);
                }
            }
        }
        out.reachable.push_back(next.size());
        if (next.size() > opt.max_per_layer) {
            out.lossless = false;
            Rng rng = make_stream(opt.seed, {stream_tag::codebook, 0xc1u, static_cast<std::uint64_t>(n)});
            next = detail::cluster_laws(next, opt.max_per_layer, opt.kmeans_iters, rng);
        }
        for (const auto& q : next) {
            out.codebook.add(q, n + 1);
        }
        frontier = std::move(next);
    }
    return out;
}

} // namespace mfpo

#endif
