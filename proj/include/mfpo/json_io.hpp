#ifndef MFPO_JSON_IO_HPP
#define MFPO_JSON_IO_HPP

#include "codebook.hpp"
#include "core.hpp"
#include "dp.hpp"
#include "lq_analytic.hpp"
#include "measures.hpp"
#include "quantize.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mfpo {

using json = nlohmann::json;

inline json to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

inline json to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Vec vec_from_json(const json& j) {
    if (j.is_number()) return Vec::Constant(1, j.get<double>());
    if (!j.is_array()) throw ConfigError("expected a number array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    return v;
}

inline Mat mat_from_json(const json& j) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError("expected a matrix (array of rows)");
    const auto rows = static_cast<Eigen::Index>(j.size()), cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ConfigError("ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

/// {"shape": [...], "support": [flat indices], "weights": [...], "normalized": bool}
inline json to_json(const DiscreteMeasure& m) {
    json out;
    out["shape"] = m.shape();
    json support = json::array(), weights = json::array();
    for (auto k : m.support()) {
        support.push_back(k);
        weights.push_back(m[k]);
    }
    out["support"] = std::move(support);
    out["weights"] = std::move(weights);
    out["normalized"] = m.is_normalized();
    return out;
}

inline DiscreteMeasure measure_from_json(const json& j) {
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    const auto support = j.at("support").get<std::vector<std::size_t>>();
    const auto weights = j.at("weights").get<std::vector<double>>();
    if (j.value("normalized", true)) {
        return DiscreteMeasure::from_support(shape, support, weights);
    }
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> dense(n, 0.0);
    for (std::size_t k = 0; k < support.size(); ++k) dense.at(support[k]) = weights.at(k);
    return DiscreteMeasure::unnormalized(shape, std::move(dense));
}

inline json to_json(const Grid& g) {
    json centers = json::array();
    for (const auto& c : g.centers()) centers.push_back(to_json(c));
    return json{{"dim", g.dim()}, {"centers", std::move(centers)}};
}

inline Grid grid_from_json(const json& j) {
    std::vector<Vec> c;
    for (const auto& v : j.at("centers")) c.push_back(vec_from_json(v));
    return Grid(std::move(c));
}

inline json to_json(const MeasureCodebook& cb) {
    json words = json::array();
    for (std::size_t l = 0; l < cb.size(); ++l) {
        words.push_back(json{{"layer", cb.layer(l)}, {"measure", to_json(cb[l])}});
    }
    return json{{"codewords", std::move(words)}};
}

inline MeasureCodebook codebook_from_json(const json& j) {
    MeasureCodebook cb;
    for (const auto& w : j.at("codewords")) cb.add(measure_from_json(w.at("measure")), w.at("layer").get<int>());
    return cb;
}

inline json to_json(const ClosedLoopPolicy& p) {
    json maps = json::array();
    for (const auto& m : p.maps) maps.push_back(m);
    return maps;
}

inline json to_json(const ValueTable& t) {
    json layers = json::array();
    for (const auto& layer : t.layers) {
        json entries = json::array();
        for (const auto& e : layer) {
            entries.push_back(
                {{"codeword", e.codeword}, {"value", e.value}, {"control", e.control}, {"next", e.next_codeword}});
        }
        layers.push_back(std::move(entries));
    }
    return layers;
}

inline json to_json(const RiccatiSolution& s) {
    json steps = json::array();
    for (int n = 0; n <= s.horizon; ++n) {
        json st{{"n", n}, {"Lambda", to_json(s.Lambda[n])}, {"Theta", to_json(s.Theta[n])}, {"chi", s.chi[n]}};
        if (n < s.horizon) {
            st["G"] = to_json(s.G[n]);
            st["Xi"] = to_json(s.Xi[n]);
            st["Shat"] = to_json(s.Shat[n]);
            st["K"] = to_json(s.K[n]);
            st["N"] = to_json(s.N[n]);
            st["S"] = to_json(s.S[n]);
            st["Stilde"] = to_json(s.Stilde[n]);
            st["M"] = to_json(s.M[n]);
        }
        steps.push_back(std::move(st));
    }
    return json{{"horizon", s.horizon}, {"d", s.d}, {"steps", std::move(steps)}};
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int k = 15; k >= 0; --k) {
        s[static_cast<std::size_t>(k)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace mfpo

#endif
