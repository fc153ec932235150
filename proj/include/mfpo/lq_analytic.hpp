#ifndef MFPO_LQ_ANALYTIC_HPP
#define MFPO_LQ_ANALYTIC_HPP

#include "core.hpp"
#include "measures.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mfpo {

/// Coefficients of W_n(mu) = <mu>(Lambda_n) + mean^T Theta_n mean + chi_n and of
/// the feedback a_n = G_n (Xi_n Phi_n + Shat_n^T mean).
struct RiccatiSolution {
    int horizon = 0;
    Eigen::Index d = 0;
    std::vector<Mat> Lambda, Theta;  // n = 0..T, 2d x 2d
    std::vector<double> chi;         // n = 0..T
    // n = 0..T-1
    std::vector<Mat> G, Xi, Shat;
    std::vector<Mat> K, N, S, Stilde;
    std::vector<Mat> M;  // D^T J^T Lambda J D + R, so that G = -M^{-1}
};

namespace detail {

inline Mat solve_checked(const Mat& A, const Mat& rhs, const std::string& name, int n) {
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& sv = svd.singularValues();
    const double smallest = sv(sv.size() - 1);
    if (!(smallest > 0.0) || sv(0) / smallest > 1e12) {
        throw NumericalError("matrix " + name + " at time " + std::to_string(n) +
                             " is singular or has condition number above 1e12");
    }
    return A.partialPivLu().solve(rhs);
}

inline Mat blkdiag(const Mat& a, const Mat& b) {
    Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

inline Mat sym(const Mat& a) { return 0.5 * (a + a.transpose()); }

} // namespace detail

/// Backward sweep from Lambda_T = blkdiag(Q_T, 0), Theta_T = blkdiag(Qbar_T, 0), chi_T = 0.
/// With L = J^T Lambda_{n+1} J (J = [I; J_{n+1}]) and Th = J^T Theta_{n+1} J:
///   K = Qbar + (B+Bbar)^T Th (B+Bbar) + Bbar^T L Bbar + B^T L Bbar + Bbar^T L B
///   N = D^T Th D, S = (B+Bbar)^T Th D + Bbar^T L D, Stilde = S + B^T L D
///   M = D^T L D + R, G = -M^{-1}, Xi = D^T L B
///   Shat = S - Stilde (N + M)^{-1} N
///   Lambda_n = Q + B^T (L - L D M^{-1} D^T L) B
///   Theta_n = K + B^T L D M^{-1} D^T L B - Stilde (N + M)^{-1} Stilde^T
///   chi_n = Tr(L) + Tr(I^T Lambda_{n+1} I) + chi_{n+1}
/// (bold B = [B 0], Bbar = [Bbar 0], Q = blkdiag(Q, 0), I = [0; I]).
inline RiccatiSolution riccati_backward(const LQParams& p) {
    p.validate();
    const int T = p.horizon;
    const Eigen::Index d = p.dim();
    const Mat Z = Mat::Zero(d, d);
    const Mat I = Mat::Identity(d, d);
    RiccatiSolution s;
    s.horizon = T;
    s.d = d;
    s.Lambda.assign(T + 1, Mat());
    s.Theta.assign(T + 1, Mat());
    s.chi.assign(T + 1, 0.0);
    for (auto* v : {&s.G, &s.Xi, &s.Shat, &s.K, &s.N, &s.S, &s.Stilde, &s.M}) v->assign(T, Mat());

    s.Lambda[T] = detail::blkdiag(p.Q[T], Z);
    s.Theta[T] = detail::blkdiag(p.Qbar[T], Z);
    s.chi[T] = 0.0;

    Mat Ibold = Mat::Zero(2 * d, d);
    Ibold.bottomRows(d) = I;

    for (int n = T - 1; n >= 0; --n) {
        Mat Jb(2 * d, d);
        Jb.topRows(d) = I;
        Jb.bottomRows(d) = p.J_next[n];
        Mat Bb = Mat::Zero(d, 2 * d), Bbb = Mat::Zero(d, 2 * d);
        Bb.leftCols(d) = p.B[n];
        Bbb.leftCols(d) = p.Bbar[n];
        const Mat A = Bb + Bbb;
        const Mat& D = p.D[n];
        const Mat L = detail::sym(Jb.transpose() * s.Lambda[n + 1] * Jb);
        const Mat Th = detail::sym(Jb.transpose() * s.Theta[n + 1] * Jb);

        const Mat K = detail::blkdiag(p.Qbar[n], Z) + A.transpose() * Th * A + Bbb.transpose() * L * Bbb +
                      Bb.transpose() * L * Bbb + Bbb.transpose() * L * Bb;
        const Mat N = detail::sym(D.transpose() * Th * D);
        const Mat S = A.transpose() * Th * D + Bbb.transpose() * L * D;
        const Mat St = S + Bb.transpose() * L * D;
        const Mat M = detail::sym(D.transpose() * L * D + p.R[n]);
        const Mat NM = detail::sym(N + M);

        const Mat Minv = detail::solve_checked(M, Mat::Identity(d, d), "M (D^T J^T Lambda J D + R)", n);
        const Mat G = -Minv;
        const Mat Xi = D.transpose() * L * p.B[n];
        const Mat NMinv_N = detail::solve_checked(NM, N, "N + M (D^T J^T (Lambda + Theta) J D + R)", n);
        const Mat Shat = S - St * NMinv_N;

        const Mat LD = L * D;
        const Mat fluct = LD * Minv * LD.transpose();
        const Mat mean_gain = St * detail::solve_checked(NM, St.transpose(), "N + M", n);

        s.Lambda[n] = detail::sym(detail::blkdiag(p.Q[n], Z) + Bb.transpose() * (L - fluct) * Bb);
        s.Theta[n] = detail::sym(K + Bb.transpose() * fluct * Bb - mean_gain);
        s.chi[n] = L.trace() + (Ibold.transpose() * s.Lambda[n + 1] * Ibold).trace() + s.chi[n + 1];
        s.K[n] = detail::sym(K);
        s.N[n] = N;
        s.S[n] = S;
        s.Stilde[n] = St;
        s.M[n] = M;
        s.G[n] = G;
        s.Xi[n] = Xi;
        s.Shat[n] = Shat;
    }
    return s;
}

/// a = G_n (Xi_n phi + Shat_n^T mu_bar), mu_bar the stacked (x, y) mean.
inline Vec optimal_feedback(const RiccatiSolution& s, int n, const Vec& phi_value, const Vec& mu_bar) {
    if (n < 0 || n >= s.horizon) {
        throw IndexError("feedback time index outside [0, T)");
    }
    return s.G[n] * (s.Xi[n] * phi_value + s.Shat[n].transpose() * mu_bar);
}

/// Mean control implied by the feedback: -(N + M)^{-1} Stilde^T mu_bar.
inline Vec mean_control(const RiccatiSolution& s, int n, const Vec& mu_bar) {
    return -(s.N[n] + s.M[n]).ldlt().solve(s.Stilde[n].transpose() * mu_bar);
}

/// Max over y of |N a_bar + S^T mu_bar + Xi phi(y) + M a(y)|, the first-order condition.
inline double foc_residual(const RiccatiSolution& s, int n, const Vec& mu_bar, const Vec& a_bar,
                           const std::vector<Vec>& phi_values, const std::vector<Vec>& controls) {
    if (phi_values.size() != controls.size()) {
        throw ConfigError("phi values and controls differ in count");
    }
    const Vec common = s.N[n] * a_bar + s.S[n].transpose() * mu_bar;
    double r = 0.0;
    for (std::size_t k = 0; k < controls.size(); ++k) {
        const Vec v = common + s.Xi[n] * phi_values[k] + s.M[n] * controls[k];
        r = std::max(r, v.cwiseAbs().maxCoeff());
    }
    return r;
}

/// Scale used by the residual contract: 1 + the largest coefficient norm at time n.
inline double foc_scale(const RiccatiSolution& s, int n) {
    return 1.0 + std::max({s.N[n].norm(), s.S[n].norm(), s.Xi[n].norm(), s.M[n].norm()});
}

/// <mu>(Lambda_0) + mean^T Theta_0 mean + chi_0.
inline double w_value(const RiccatiSolution& s, int n, const MomentPair& mp) {
    return mp.quadratic_form(s.Lambda[n]) + mp.mean.dot(s.Theta[n] * mp.mean) + s.chi[n];
}

inline double w0_value(const RiccatiSolution& s, const MomentPair& mp) { return w_value(s, 0, mp); }

/// Moments of the reference initial law: X_0 ~ N(x0_mean, I), Y_0 ~ N(0, I) independent.
inline MomentPair lq_initial_moments(const LQParams& p) {
    const Eigen::Index d = p.dim();
    MomentPair mp;
    mp.mean = Vec::Zero(2 * d);
    mp.mean.head(d) = p.initial_mean();
    mp.quad = Mat::Identity(2 * d, 2 * d) + mp.mean * mp.mean.transpose();
    return mp;
}

inline double min_eigenvalue(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(detail::sym(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

} // namespace mfpo

#endif
