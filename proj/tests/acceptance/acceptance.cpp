// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails.

#include <mfpo/mfpo.hpp>

#include "../support.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace mfpo;

namespace {

const std::string kCli = MFPO_CLI_PATH;
const std::string kDefault = std::string(MFPO_CONFIG_DIR) + "/default.json";

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& name, Verdict& v) {
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << name << ":" << v.detail.str()
              << std::endl;
    if (!v.pass) ++failures;
}

template <class F>
void run_criterion(int id, const std::string& name, F body) {
    Verdict v;
    try {
        body(v);
    } catch (const std::exception& e) {
        v.pass = false;
        v.detail << " [error: " << e.what() << "]";
    }
    report(id, name, v);
}

// ---------------------------------------------------------------------------

void lq_benchmark(Verdict& v) {
    const ExperimentConfig cfg = load_config(kDefault);
    const auto rep = run_lq_benchmark(*cfg.lq, cfg.seed);
    v.detail << " W_0=" << format_double(rep.w0);
    for (const auto& r : rep.rows) {
        v.detail << " N=" << r.N << ":rel=" << format_double(r.rel_error) << ",t=" << format_double(r.seconds) << "s";
        if (r.N == 2) continue;
        v.require(r.status == "ok", "N=" + std::to_string(r.N) + " status " + r.status);
        v.require(r.rel_error <= 0.10, "N=" + std::to_string(r.N) + " relative error above 10%");
        v.require(r.seconds <= 600.0, "N=" + std::to_string(r.N) + " slower than 10 minutes");
    }
    for (std::size_t n : {4u, 10u, 20u}) {
        bool found = false;
        for (const auto& r : rep.rows) found = found || r.N == n;
        v.require(found, "no row for N=" + std::to_string(n));
    }
}

// ---------------------------------------------------------------------------

void oracle_equivalence(Verdict& v) {
    struct Shape {
        std::size_t n, c;
        int t;
    };
    int instances = 0;
    double worst = 0.0;
    for (const Shape s : {Shape{1, 3, 2}, Shape{2, 2, 2}, Shape{2, 3, 2}, Shape{3, 3, 1}, Shape{3, 2, 2},
                          Shape{3, 3, 2}}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto p = fixtures::random_problem({s.n, s.n, s.c, s.t, 7919 * seed + 31 * s.n + s.c, 0.2});
            CodebookOptions co;
            co.max_per_layer = 1000000;
            co.explore_enumerate_budget = 1e9;
            auto build = codebook_build(p, co);
            v.require(build.lossless, "codebook not lossless");
            QuantizedDPOptions qo;
            qo.optimizer.mode = OptimizerMode::enumerate;
            const double dp = quantized_dp(p, build.codebook, qo).value;
            ExactDPOptions cl;
            cl.controls = ControlClass::closed_loop;
            cl.budget = 1e9;
            const double closed = exact_path_dp(p, cl).value;
            ExactDPOptions pd;
            pd.budget = 1e9;
            const double path = exact_path_dp(p, pd).value;
            const double err = std::abs(dp - closed);
            worst = std::max(worst, err);
            v.require(err <= 1e-12, "quantized DP differs from closed-loop oracle by " + format_double(err));
            v.require(path <= closed + 1e-12, "path-dependent value above closed-loop value");
            ++instances;
        }
    }
    v.detail << " instances=" << instances << " max|dp-exact|=" << format_double(worst);
}

// ---------------------------------------------------------------------------

struct LQDraw {
    std::mt19937_64 rng;
    std::normal_distribution<double> g;
    explicit LQDraw(std::uint64_t s) : rng(s) {}
    Mat gauss(Eigen::Index d, double s = 1.0) {
        return Mat::NullaryExpr(d, d, [&](Eigen::Index, Eigen::Index) { return s * g(rng); });
    }
    Vec vec(Eigen::Index d) {
        return Vec::NullaryExpr(d, [&](Eigen::Index) { return g(rng); });
    }
    Mat psd(Eigen::Index d) {
        const Mat a = gauss(d);
        return a * a.transpose();
    }
    LQParams params(Eigen::Index d, int T) {
        LQParams p;
        p.horizon = T;
        for (int n = 0; n < T; ++n) {
            p.B.push_back(gauss(d, 0.5));
            p.Bbar.push_back(gauss(d, 0.5));
            p.D.push_back(Mat::Identity(d, d) + gauss(d, 0.3));
            p.J_next.push_back(Mat::Identity(d, d) + gauss(d, 0.3));
            p.R.push_back(psd(d) + 0.5 * Mat::Identity(d, d));
        }
        for (int n = 0; n <= T; ++n) {
            const Mat q = psd(d);
            p.Q.push_back(q);
            p.Qbar.push_back(psd(d) - 0.5 * q);
        }
        p.x0_mean = vec(d);
        return p;
    }
};

void riccati_validation(Verdict& v) {
    LQDraw r(31337);
    double worst_eig = 0.0, worst_foc = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index d = 1 + trial % 3;
        const int T = 1 + trial % 4;
        const auto p = r.params(d, T);
        const auto s = riccati_backward(p);
        for (int n = 0; n <= T; ++n) {
            const double asym = (s.Lambda[n] - s.Lambda[n].transpose()).cwiseAbs().maxCoeff();
            const double e1 = min_eigenvalue(s.Lambda[n]) / (1.0 + s.Lambda[n].norm());
            const Mat both = s.Lambda[n] + s.Theta[n];
            const double e2 = min_eigenvalue(both) / (1.0 + both.norm());
            worst_eig = std::min({worst_eig, e1, e2});
            v.require(asym <= 1e-12, "Lambda not symmetric");
        }
        for (int n = 0; n < T; ++n) {
            const Vec mu_bar = r.vec(2 * d);
            std::vector<Vec> phis, controls;
            Vec sum = Vec::Zero(d);
            for (int k = 0; k < 6; ++k) {
                phis.push_back(r.vec(d));
                sum += phis.back();
            }
            for (auto& p_k : phis) p_k += mu_bar.head(d) - sum / 6.0;
            Vec abar = Vec::Zero(d);
            for (const auto& p_k : phis) {
                controls.push_back(optimal_feedback(s, n, p_k, mu_bar));
                abar += controls.back() / 6.0;
            }
            const double scale = foc_scale(s, n) * (1.0 + mu_bar.norm() + abar.norm());
            const double res = foc_residual(s, n, mu_bar, abar, phis, controls) / scale;
            worst_foc = std::max(worst_foc, res);
            v.require(res <= 1e-8, "FOC residual above 1e-8");
            auto perturbed = [&](double eps) {
                auto c = controls;
                c[0][0] += eps;
                Vec ab = Vec::Zero(d);
                for (const auto& a : c) ab += a / 6.0;
                return foc_residual(s, n, mu_bar, ab, phis, c);
            };
            const double r1 = perturbed(1e-3), r2 = perturbed(2e-3);
            v.require(r1 > 0.0 && std::abs(r2 / r1 - 2.0) < 1e-3, "residual growth not linear");
        }
    }
    v.require(worst_eig >= -1e-9, "eigenvalue below floor");
    v.detail << " min scaled eigenvalue=" << format_double(worst_eig) << " max scaled FOC=" << format_double(worst_foc);

    for (Eigen::Index d : {1, 2}) {
        const Mat Z = Mat::Zero(d, d), I = Mat::Identity(d, d);
        Mat D = I, J = I, bbar = 0.3 * I;
        if (d == 2) {
            D(0, 1) = 1.0;
            J(0, 1) = 0.5;
            bbar(0, 1) = -0.2;
        }
        auto p = LQParams::constant(3, Z, bbar, D, J, I, 0.5 * I, I);
        p.x0_mean = Vec::Constant(d, 0.7);
        const auto s = riccati_backward(p);
        const double w0 = w0_value(s, lq_initial_moments(p));
        const auto e = evaluate_policy_cost(lq_model(p, {Vec::Zero(d)}), LQFeedbackStrategy{s}, 100000, 4242, 0);
        const double z = (e.value - w0) / e.std_error;
        v.detail << " d=" << d << ":MC=" << format_double(e.value) << ",W0=" << format_double(w0)
                 << ",z=" << format_double(z);
        v.require(std::abs(z) <= 3.0, "Monte-Carlo cost off by more than 3 SE (d=" + std::to_string(d) + ")");
    }
}

// ---------------------------------------------------------------------------

void filter_correctness(Verdict& v) {
    int sequences = 0;
    double worst = 0.0;
    for (std::size_t N = 1; N <= 3; ++N) {
        for (int T = 1; T <= 3; ++T) {
            for (std::uint64_t seed = 1; seed <= 3; ++seed) {
                auto p = fixtures::random_problem({N, N, 2, T, 5000 + 100 * N + 10 * static_cast<std::uint64_t>(T) + seed, 0.2});
                auto pol = fixtures::random_policy(p, seed + 17);
                auto e = fixtures::enumerate_paths(p, pol);
                for (const auto& ys : fixtures::reachable_observations(e)) {
                    auto st = ks_init(p.initial, ys[0]);
                    for (int n = 0; n < T; ++n) {
                        st = ks_update(st, p, DiscreteMeasure::normalized({N}, e.hidden_laws[n]),
                                       pol.maps[n][ys[n]], ys[n + 1]);
                    }
                    auto [want, mass] = fixtures::brute_force_filter(p, e, ys);
                    for (std::size_t i = 0; i < N; ++i) worst = std::max(worst, std::abs(st.normalized[i] - want[i]));
                    worst = std::max(worst, std::abs(st.mass() - mass));
                    ++sequences;
                }
            }
        }
    }
    v.require(worst <= 1e-12, "filter differs from brute force by " + format_double(worst));
    v.detail << " sequences=" << sequences << " max error=" << format_double(worst);

    std::mt19937_64 rng(808);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 3; ++trial) {
        Vec m(2);
        m << g(rng), g(rng);
        Mat L(2, 2);
        L << 1.0, 0.0, 0.5 * g(rng), 0.8;
        Mat J(2, 2);
        J << 1.0, 0.3 * g(rng), 0.0, 1.0;
        Vec y(2);
        y << g(rng), g(rng);
        const std::size_t n = 100000;
        std::vector<Vec> pts(n);
        for (auto& x : pts) x = m + L * Vec::NullaryExpr(2, [&](Eigen::Index) { return g(rng); });
        const Vec est = phi(DiscreteMeasure::uniform({n}), pts, J, y);
        const Vec want = gaussian_posterior_mean(m, L * L.transpose(), J, y);
        std::vector<double> w(n);
        double sw = 0.0;
        for (std::size_t k = 0; k < n; ++k) sw += (w[k] = std::exp(-0.5 * (J * pts[k] - y).squaredNorm()));
        for (Eigen::Index c = 0; c < 2; ++c) {
            double var = 0.0;
            for (std::size_t k = 0; k < n; ++k) var += w[k] * w[k] * std::pow(pts[k][c] - est[c], 2);
            const double z = (est[c] - want[c]) / (std::sqrt(var) / sw);
            v.require(std::abs(z) <= 3.0, "posterior mean off by more than 3 SE");
            v.detail << " z=" << format_double(z);
        }
    }
}

// ---------------------------------------------------------------------------

void quantizer(Verdict& v) {
    const auto r = lloyd_gaussian(1, 2);
    const double target = std::sqrt(2.0 / std::numbers::pi);
    const double lo = std::min(r.grid[0][0], r.grid[1][0]), hi = std::max(r.grid[0][0], r.grid[1][0]);
    v.detail << " centers=(" << format_double(lo) << ", " << format_double(hi) << ")";
    v.require(std::abs(hi - target) <= 1e-3 && std::abs(lo + target) <= 1e-3, "centers away from sqrt(2/pi)");
    for (std::size_t n : {2u, 4u, 10u, 20u}) {
        const auto q = lloyd_gaussian(1, n);
        for (std::size_t k = 1; k < q.distortion.size(); ++k) {
            v.require(q.distortion[k] <= q.distortion[k - 1] + 1e-12,
                      "distortion increased (N=" + std::to_string(n) + ")");
        }
    }
    const auto q2 = lloyd_gaussian(2, 10);
    for (std::size_t k = 1; k < q2.distortion.size(); ++k) {
        v.require(q2.distortion[k] <= q2.distortion[k - 1] + 1e-12, "distortion increased (d=2)");
    }
}

// ---------------------------------------------------------------------------

void portfolio_tables(Verdict& v) {
    const ExperimentConfig cfg = load_config(kDefault);
    auto pc = *cfg.portfolio;
    pc.n_paths = {10000, 250};
    const auto rep = run_portfolio(pc, cfg.seed);
    bool a = true, b = true, c = true, d = true;
    for (const auto& t : rep.tables) {
        for (const auto& col : t.columns) {
            a = a && col.v0 == 0.5 * t.gamma * col.variance - col.mean;
        }
        const auto& prop = t.columns.at(0);
        const auto& bh = t.columns.at(1);
        if (t.n_paths == 10000) {
            const bool lower = prop.variance < bh.variance;
            b = b && lower;
            v.detail << " g=" << t.gamma << ":Var " << format_double(prop.variance) << (lower ? "<" : ">=")
                     << format_double(bh.variance);
            if (t.gamma == 16.0) {
                const bool ok = t.gap < 0.0 || t.gap_lo <= 0.0;
                d = ok;
                v.detail << " gap16=" << format_double(t.gap) << " [" << format_double(t.gap_lo) << ", "
                         << format_double(t.gap_hi) << "]";
            }
        }
        if (t.n_paths == 250) {
            for (const auto& col : t.columns) {
                const bool in = col.mean >= 0.98 && col.mean <= 1.08 && col.variance >= 0.002 && col.variance <= 0.010;
                if (!in) {
                    v.detail << " out-of-range(g=" << t.gamma << "," << col.strategy << ":E=" << format_double(col.mean)
                             << ",Var=" << format_double(col.variance) << ")";
                }
                c = c && in;
            }
        }
    }
    v.require(a, "(a) identity");
    v.require(b, "(b) proposed variance below buy-and-hold");
    v.require(c, "(c) plausible ranges at 250 paths");
    v.require(d, "(d) gamma=16 V0 comparison");
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const int status = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Verdict& v) {
    const fs::path root = fs::temp_directory_path() / "mfpo_acceptance_determinism";
    fs::remove_all(root);
    std::size_t files = 0;
    for (const std::string verb : {"bench-lq", "bench-portfolio", "quantize-cache", "dump-riccati"}) {
        std::vector<fs::path> dirs;
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path d = root / (verb + "_" + std::to_string(rep));
            fs::create_directories(d);
            v.require(run_cli(verb + " --config " + kDefault + " --out " + d.string()) == 0, verb + " exited nonzero");
            dirs.push_back(d);
        }
        for (const auto& e : fs::directory_iterator(dirs[0])) {
            const fs::path other = dirs[1] / e.path().filename();
            v.require(fs::exists(other) && slurp(e.path()) == slurp(other),
                      verb + " " + e.path().filename().string() + " differs");
            ++files;
        }
    }
    v.require(files >= 7, "expected output files missing");
    v.detail << " files compared=" << files;
    fs::remove_all(root);
}

} // namespace

int main() {
    run_criterion(1, "LQ benchmark relative error <= 10% for N in {4,10,20}", lq_benchmark);
    run_criterion(2, "quantized DP equals exact closed-loop oracle", oracle_equivalence);
    run_criterion(3, "Riccati PSD, first-order condition, Monte-Carlo value", riccati_validation);
    run_criterion(4, "grid filter vs brute force, Gaussian posterior mean", filter_correctness);
    run_criterion(5, "Lloyd N=2 centers +-sqrt(2/pi), monotone distortion", quantizer);
    run_criterion(6, "portfolio tables", portfolio_tables);
    run_criterion(7, "bitwise determinism of every verb", determinism);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
