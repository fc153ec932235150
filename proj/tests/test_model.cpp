#include <mfpo/model.hpp>
#include <mfpo/quantize.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mfpo;

namespace {

Mat m2(double a, double b, double c, double d) {
    Mat m(2, 2);
    m << a, b, c, d;
    return m;
}

LQParams reference_params() {
    const Mat Z = Mat::Zero(2, 2), D = m2(1, 1, 0, 1), Q = Mat::Ones(2, 2), R = Mat::Identity(2, 2);
    return LQParams::constant(3, Z, Z, D, D, Q, Q, R);
}

std::vector<Vec> diagonal_controls() {
    std::vector<Vec> c;
    for (double s : {-2.0, -1.0, 1.0, 2.0}) c.push_back(Vec::Constant(2, s));
    return c;
}

ModelSpec zero_noise(ModelSpec m) {
    const auto dx = m.dim_eps, dy = m.dim_eta;
    m.sample_eps = [dx](Rng&) { return Vec::Zero(dx); };
    m.sample_eta = [dy](Rng&) { return Vec::Zero(dy); };
    return m;
}

/// Integral of y -> f(y) over R^d by Gauss-Hermite under N(0, scale^2 I) importance weights.
template <class F>
double integrate(F f, Eigen::Index d, double scale = 2.0) {
    const auto q = gauss_hermite(64, d);
    double total = 0.0;
    for (std::size_t k = 0; k < q.points.size(); ++k) {
        const Vec y = scale * q.points[k];
        const double g = gaussian_density(q.points[k]) / std::pow(scale, static_cast<double>(d));
        total += q.weights[k] * f(y) / g;
    }
    return total;
}

} // namespace

TEST(LQModel, ObservationDensityAtMode) {
    auto m = lq_model(reference_params(), diagonal_controls());
    Vec x(2);
    x << 0.3, -0.4;
    const Vec y = m2(1, 1, 0, 1) * x;
    EXPECT_NEAR(m.obs_density(0, x, Vec::Zero(2), Vec::Zero(2), y), 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(LQModel, ObservationDensityIntegratesToOne) {
    auto m = lq_model(reference_params(), diagonal_controls());
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x(2), y(2), a = Vec::Ones(2);
        x << u(rng), u(rng);
        y << u(rng), u(rng);
        const double total = integrate([&](const Vec& yn) { return m.obs_density(0, x, y, a, yn); }, 2);
        EXPECT_NEAR(total, 1.0, 1e-8);
    }
}

TEST(LQModel, ReferenceMatrices) {
    auto p = reference_params();
    EXPECT_NO_THROW(p.validate());
    EXPECT_TRUE(p.D[0].isApprox(m2(1, 1, 0, 1)));
    EXPECT_TRUE(p.Q[3].isApprox(Mat::Ones(2, 2)));
}

TEST(LQModel, ZeroDriftStepIsControlPlusNoise) {
    const Mat Z = Mat::Zero(2, 2), I = Mat::Identity(2, 2);
    auto p = LQParams::constant(2, Z, Z, I, I, I, Z, I);
    auto m = zero_noise(lq_model(p, {Vec::Ones(2)}));
    std::vector<Vec> pts{Vec::Constant(2, 5.0)};
    HiddenLaw law(pts);
    Rng rng(1);
    auto [xn, yn] = step(m, 0, Vec::Constant(2, -3.0), Vec::Zero(2), law, Vec::Ones(2), rng);
    EXPECT_TRUE(xn.isApprox(Vec::Ones(2)));
    EXPECT_TRUE(yn.isApprox(Vec::Ones(2)));
}

TEST(LQModel, CostsFollowTheFormulas) {
    auto m = lq_model(reference_params(), diagonal_controls());
    Vec x(2), mean(2), a(2);
    x << 1.0, 2.0;
    mean << 0.5, -1.0;
    a << 1.0, 1.0;
    std::vector<Vec> pts{mean};
    HiddenLaw law(pts);
    // (x1 + x2)^2 + (m1 + m2)^2 + |a|^2
    EXPECT_NEAR(m.running_cost(0, x, law, a), 9.0 + 0.25 + 2.0, 1e-14);
    EXPECT_NEAR(m.terminal_cost(x, law), 9.0 + 0.25, 1e-14);
}

TEST(LQModel, DependsOnLawOnlyThroughMean) {
    const Mat Z = Mat::Zero(2, 2), I = Mat::Identity(2, 2);
    auto p = LQParams::constant(1, 0.5 * I, m2(0.3, 0.1, -0.2, 0.4), I, I, I, I, I);
    auto m = lq_model(p, {Vec::Ones(2)});
    std::vector<Vec> a{Vec::Constant(2, 1.0), Vec::Constant(2, -1.0)}, b{Vec::Constant(2, 3.0), Vec::Constant(2, -3.0)};
    HiddenLaw la(a), lb(b);
    Vec x(2), eps(2);
    x << 0.2, 0.7;
    eps << -0.1, 0.3;
    EXPECT_TRUE(m.step_hidden(0, x, la, Vec::Ones(2), eps).isApprox(m.step_hidden(0, x, lb, Vec::Ones(2), eps)));
}

TEST(LQModel, InvalidParamsThrow) {
    const Mat Z = Mat::Zero(2, 2), I = Mat::Identity(2, 2);
    EXPECT_THROW(lq_model(LQParams::constant(1, Z, Z, Z, I, I, I, I), {Vec::Ones(2)}), ConfigError);
    EXPECT_THROW(lq_model(LQParams::constant(1, Z, Z, I, I, -I, Z, I), {Vec::Ones(2)}), ConfigError);
    EXPECT_THROW(lq_model(LQParams::constant(1, Z, Z, I, I, I, Z, Z), {Vec::Ones(2)}), ConfigError);
    EXPECT_THROW(lq_model(reference_params(), {Vec::Ones(3)}), ConfigError);
    EXPECT_THROW(lq_model(reference_params(), {}), ConfigError);
}

TEST(LQModel, StepIsReproducible) {
    auto m = lq_model(reference_params(), diagonal_controls());
    std::vector<Vec> pts{Vec::Zero(2)};
    HiddenLaw law(pts);
    Rng r1 = make_stream(42, {1}), r2 = make_stream(42, {1});
    auto a = step(m, 1, Vec::Ones(2), Vec::Zero(2), law, Vec::Ones(2), r1);
    auto b = step(m, 1, Vec::Ones(2), Vec::Zero(2), law, Vec::Ones(2), r2);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    EXPECT_THROW(step(m, 3, Vec::Ones(2), Vec::Zero(2), law, Vec::Ones(2), r1), IndexError);
}

TEST(PortfolioModel, TerminalCostOfDelta) {
    PortfolioParams p;
    auto m = portfolio_model(p);
    std::vector<Vec> pts{Vec::Constant(1, 1.3)};
    HiddenLaw law(pts);
    EXPECT_NEAR(m.terminal_cost(Vec::Constant(1, 1.3), law), -1.3, 1e-15);
}

TEST(PortfolioModel, TwoPointCriterion) {
    PortfolioParams p;
    p.gamma = 2.0;
    auto m = portfolio_model(p);
    std::vector<Vec> pts{Vec::Constant(1, 0.0), Vec::Constant(1, 2.0)};
    HiddenLaw law(pts);
    const double v = 0.5 * (m.terminal_cost(pts[0], law) + m.terminal_cost(pts[1], law));
    EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(PortfolioModel, CostIdentityOnSamples) {
    PortfolioParams p;
    p.gamma = 7.0;
    auto m = portfolio_model(p);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(1.05, 0.08);
    std::vector<Vec> pts;
    for (int k = 0; k < 500; ++k) pts.push_back(Vec::Constant(1, g(rng)));
    HiddenLaw law(pts);
    double avg = 0.0, mean = 0.0, var = 0.0;
    for (const auto& x : pts) {
        avg += m.terminal_cost(x, law);
        mean += x[0];
    }
    avg /= 500.0;
    mean /= 500.0;
    for (const auto& x : pts) var += (x[0] - mean) * (x[0] - mean);
    var /= 500.0;
    EXPECT_NEAR(avg, 0.5 * 7.0 * var - mean, 1e-12);
}

TEST(PortfolioModel, TabulatedCellsSatisfyTheCriterionIdentity) {
    struct Cell {
        double gamma, mean, var, v0;
    };
    const Cell cells[] = {
        {2, 1.02027868, 0.00481573, -1.01546295},  {2, 1.04535767, 0.00680738, -1.03855029},
        {2, 1.01155139, 0.00688046, -1.00467093},  {4, 1.02681514, 0.00467356, -1.01746802},
        {4, 1.03881421, 0.00653589, -1.02574243},  {4, 1.01034027, 0.00636125, -0.99761777},
        {8, 1.02314645, 0.00452504, -1.00504629},  {8, 1.03975832, 0.00651461, -1.01369988},
        {8, 1.00942357, 0.00684134, -0.98205821},  {16, 1.01748989, 0.00433524, -0.98280797},
        {16, 1.03562335, 0.00693694, -0.98012783}, {16, 1.01643678, 0.006672365, -0.96305786},
    };
    for (const auto& c : cells) {
        EXPECT_NEAR(0.5 * c.gamma * c.var - c.mean, c.v0, 1e-8) << "gamma " << c.gamma << " mean " << c.mean;
    }
}

TEST(PortfolioModel, WealthDynamics) {
    PortfolioParams p;
    p.dt = 0.25;
    auto m = portfolio_model(p);
    std::vector<Vec> pts{Vec::Constant(1, 1.0)};
    HiddenLaw law(pts);
    const Vec x = m.step_hidden(0, Vec::Constant(1, 1.0), law, Vec::Constant(1, 2.0), Vec::Constant(1, 1.0));
    EXPECT_NEAR(x[0], 1.0 + 2.0 * (0.02 * 0.25 + 0.05 * 0.5), 1e-15);
}

TEST(PortfolioModel, DensityIntegratesToOne) {
    PortfolioParams p;
    p.obs_std = 0.7;
    auto m = portfolio_model(p);
    const double total = integrate(
        [&](const Vec& y) { return m.obs_density(0, Vec::Constant(1, 0.4), Vec::Zero(1), Vec::Ones(1), y); }, 1, 1.0);
    EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(PortfolioModel, InvalidParamsThrow) {
    PortfolioParams p;
    p.sigma = 0.0;
    EXPECT_THROW(portfolio_model(p), ConfigError);
    p = PortfolioParams{};
    p.controls.clear();
    EXPECT_THROW(portfolio_model(p), ConfigError);
}
