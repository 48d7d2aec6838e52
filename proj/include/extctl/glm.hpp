#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

namespace extctl {

/// Logistic function, evaluated without overflow for large |t|.
inline double logistic(double t) noexcept {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// log(1 + e^t) without overflow.
inline double log1p_exp(double t) noexcept {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

/// Upper tail of the standard normal, 1 - Phi(z).
inline double normal_upper_tail(double z) noexcept { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

struct GlmOptions {
    int max_iter = 100;
    double tol_ll = 1e-10;         // relative change in log-likelihood
    double tol_score = 1e-8;       // max-norm of the weighted score
    double tol_step = 1e-6;        // max-norm of the final Newton step
    double divergence_bound = 30;  // |coef| beyond this signals separation
};

struct GlmFit {
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance_model;  // inverse weighted observed information
    double log_likelihood = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Weighted logistic regression by Newton-Raphson with step halving.
/// Maximizes sum_j w_j [y_j eta_j - log(1 + exp(eta_j))].
///
/// Throws SeparationError when the coefficients diverge, SingularError when
/// the weighted information is rank deficient and NonConvergence after
/// max_iter iterations.
GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const std::optional<Eigen::VectorXd>& w = std::nullopt,
                    const GlmOptions& opts = {});

/// Weighted log-likelihood at an arbitrary coefficient vector.
double logistic_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, const Eigen::VectorXd& beta);

/// Robust covariance (-A)^-1 B (-A)^-1 with A the weighted Hessian and B the
/// sum of outer products of per-observation weighted scores.
Eigen::MatrixXd sandwich_covariance(const GlmFit& fit, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y,
                                    const std::optional<Eigen::VectorXd>& w = std::nullopt);

/// Reference-category multinomial logit. Row k-1 of `coefficients` holds the
/// linear predictor of category k+1 against category 1.
struct MultinomialFit {
    Eigen::MatrixXd coefficients;  // (categories - 1) x p
    int categories = 0;
    double log_likelihood = 0.0;
    bool converged = false;
    int iterations = 0;

    /// n x categories matrix of fitted probabilities.
    [[nodiscard]] Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
};

/// Labels take values 1..categories; every category must be observed.
MultinomialFit fit_multinomial(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                               int categories, const GlmOptions& opts = {});

struct WaldTest {
    double z = 0.0;
    double p_value = 0.5;
    bool reject = false;
};

/// One-sided test of H0: parameter <= 0. Rejects when p < alpha (strict).
WaldTest wald_one_sided(double estimate, double variance, double alpha = 0.05);

}  // namespace extctl
