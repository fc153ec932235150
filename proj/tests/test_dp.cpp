#include <mfpo/codebook.hpp>
#include <mfpo/dp.hpp>

#include "support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace mfpo;

namespace {

CodebookOptions lossless_options() {
    CodebookOptions o;
    o.max_per_layer = 100000;
    o.explore_enumerate_budget = 1e6;
    return o;
}

QuantizedDPOptions enumerate_options() {
    QuantizedDPOptions o;
    o.optimizer.mode = OptimizerMode::enumerate;
    return o;
}

/// Minimum of the closed-loop cost over every sequence of control maps.
double best_map_sequence(const QuantizedProblem& p) {
    const auto per_step = static_cast<std::uint64_t>(control_map_count(p.num_controls, p.ny));
    std::uint64_t total = 1;
    for (int n = 0; n < p.horizon; ++n) total *= per_step;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t code = 0; code < total; ++code) {
        ClosedLoopPolicy pol;
        std::uint64_t rest = code;
        for (int n = 0; n < p.horizon; ++n) {
            pol.maps.push_back(decode_control_map(rest % per_step, p.num_controls, p.ny));
            rest /= per_step;
        }
        best = std::min(best, evaluate_closed_loop(p, pol));
    }
    return best;
}

struct Shape {
    std::size_t n;
    int horizon;
    std::size_t controls;
};

} // namespace

TEST(QuantizedDP, AgreesWithExactOracles) {
    for (const Shape s : {Shape{2, 2, 3}, Shape{3, 1, 3}, Shape{3, 2, 2}}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            fixtures::RandomSpec spec{s.n, s.n, s.controls, s.horizon, 1000 * seed + s.n, 0.2};
            auto p = fixtures::random_problem(spec);
            auto build = codebook_build(p, lossless_options());
            ASSERT_TRUE(build.lossless);
            auto dp = quantized_dp(p, build.codebook, enumerate_options());

            ExactDPOptions cl;
            cl.controls = ControlClass::closed_loop;
            const double closed = exact_path_dp(p, cl).value;
            EXPECT_NEAR(dp.value, closed, 1e-12 * (1.0 + std::abs(closed))) << "n " << s.n << " seed " << seed;
            EXPECT_NEAR(dp.value, best_map_sequence(p), 1e-12 * (1.0 + std::abs(closed)));
            EXPECT_NEAR(evaluate_closed_loop(p, dp.policy), dp.value, 1e-12 * (1.0 + std::abs(closed)));

            const double path = exact_path_dp(p).value;
            EXPECT_LE(path, closed + 1e-12);
        }
    }
}

TEST(QuantizedDP, ConsistencyGapIsZeroOnLosslessBook) {
    fixtures::RandomSpec spec{3, 3, 2, 2, 9, 0.2};
    auto p = fixtures::random_problem(spec);
    auto build = codebook_build(p, lossless_options());
    auto dp = quantized_dp(p, build.codebook, enumerate_options());
    EXPECT_LT(dp_consistency_gap(p, build.codebook, dp.table), 1e-12);
    EXPECT_EQ(dp.trajectory.size(), 3u);
    EXPECT_EQ(dp.policy.maps.size(), 2u);
}

TEST(QuantizedDP, ClusteredBookStillConsistent) {
    fixtures::RandomSpec spec{3, 3, 3, 2, 21, 0.2};
    auto p = fixtures::random_problem(spec);
    auto opt = lossless_options();
    opt.max_per_layer = 4;
    auto build = codebook_build(p, opt);
    EXPECT_FALSE(build.lossless);
    auto dp = quantized_dp(p, build.codebook);
    EXPECT_LT(dp_consistency_gap(p, build.codebook, dp.table), 1e-12);
    EXPECT_TRUE(std::isfinite(dp.value));
}

TEST(QuantizedDP, EmptyCodebookThrows) {
    auto p = fixtures::random_problem({2, 2, 2, 1, 3, 0.2});
    EXPECT_THROW(quantized_dp(p, MeasureCodebook{}), ConfigError);
}

TEST(Optimizer, ModesOnOneStep) {
    fixtures::RandomSpec spec{4, 4, 3, 1, 55, 0.1};
    auto p = fixtures::random_problem(spec);
    auto cont = [&](std::span<const double> q) {
        return cost_terminal(DiscreteMeasure::normalized({p.nx, p.ny}, std::vector<double>(q.begin(), q.end())), p);
    };
    StepObjective f(p.initial, p, 0, cont);

    OptimizerOptions e;
    e.mode = OptimizerMode::enumerate;
    auto full = optimize_control_map(f, e);
    EXPECT_EQ(full.mode_used, OptimizerMode::enumerate);
    double direct = std::numeric_limits<double>::infinity();
    for (std::uint64_t code = 0; code < 81; ++code) {
        const ControlMap a = decode_control_map(code, 3, 4);
        direct = std::min(direct, cost_running(p.initial, p, a, 0) +
                                      cost_terminal(push_marginal(p.initial, p, a, 0), p));
    }
    EXPECT_NEAR(full.value, direct, 1e-12);

    OptimizerOptions cd;
    cd.mode = OptimizerMode::coordinate_descent;
    auto local = optimize_control_map(f, cd);
    EXPECT_GE(local.value, full.value - 1e-12);

    OptimizerOptions k;
    k.mode = OptimizerMode::constant;
    auto flat = optimize_control_map(f, k);
    EXPECT_GE(flat.value, local.value - 1e-12);
    for (auto c : flat.map) EXPECT_EQ(c, flat.map.front());

    OptimizerOptions a;
    a.auto_enumerate_limit = 10;
    EXPECT_EQ(optimize_control_map(f, a).mode_used, OptimizerMode::coordinate_descent);
    a.auto_enumerate_limit = 81;
    EXPECT_EQ(optimize_control_map(f, a).mode_used, OptimizerMode::enumerate);

    e.enumerate_limit = 80;
    EXPECT_THROW(optimize_control_map(f, e), BudgetExceeded);
}

TEST(ExactDP, SequenceBound) {
    auto p = fixtures::random_problem({2, 2, 3, 2, 1, 0.2});
    EXPECT_DOUBLE_EQ(exact_dp_sequence_bound(p, ControlClass::closed_loop), 81.0);
    EXPECT_DOUBLE_EQ(exact_dp_sequence_bound(p, ControlClass::path_dependent), 9.0 * 81.0);
}

TEST(ExactDP, BudgetIsEnforced) {
    auto p = fixtures::random_problem({3, 3, 3, 3, 1, 0.2});
    ExactDPOptions o;
    o.budget = 1000;
    try {
        exact_path_dp(p, o);
        FAIL() << "expected BudgetExceeded";
    } catch (const BudgetExceeded& e) {
        EXPECT_GT(e.count(), 1000.0);
    }
}

TEST(ExactDP, SingleControlMatchesEvaluation) {
    auto p = fixtures::random_problem({3, 2, 1, 3, 8, 0.2});
    ClosedLoopPolicy pol{std::vector<ControlMap>(3, ControlMap(2, 0))};
    const double v = evaluate_closed_loop(p, pol);
    EXPECT_NEAR(exact_path_dp(p).value, v, 1e-12);
    ExactDPOptions cl;
    cl.controls = ControlClass::closed_loop;
    EXPECT_NEAR(exact_path_dp(p, cl).value, v, 1e-12);
}
