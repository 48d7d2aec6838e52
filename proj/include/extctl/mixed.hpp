#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "extctl/model.hpp"

namespace extctl {

/// Random-intercept logistic model configuration.
///
/// The variance component sigma_delta carries a gamma-shaped penalty
/// (eta - 1) log(sigma) - lambda sigma, which keeps the estimate away from
/// the boundary when few studies are available.
struct ReSpec {
    double penalty_eta = 2.0;
    double penalty_lambda = 0.01;
    int quadrature_nodes = 31;
    /// Extra fixed-effect columns (one row per patient, collection order).
    /// Used by PS-RE for the generalized propensity log-odds.
    std::optional<Eigen::MatrixXd> extra_ps_features;

    void validate() const;
};

struct ReFit {
    double beta0 = 0.0;
    Eigen::VectorXd beta;
    double gamma = 0.0;
    Eigen::VectorXd zeta;           // one entry per extra feature column (0 if dropped)
    std::vector<int> kept_features;  // extra feature columns that entered the model
    double sigma_delta = 0.0;
    double delta1 = 0.0;
    double var_gamma = 0.0;
    double penalized_loglik = 0.0;
    bool converged = false;
    int iterations = 0;

    /// Fixed-effect vector in design order [beta0, beta..., gamma, kept zeta...].
    [[nodiscard]] Eigen::VectorXd theta() const;
};

/// Gauss-Hermite rule for the weight exp(-x^2).
struct GaussHermite {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

/// Nodes and weights for an n-point rule; cached, safe to call concurrently.
const GaussHermite& gauss_hermite(int n);

/// Design matrix of one study for the random-intercept model:
/// [1, covariates..., treatment, extra...].
Eigen::MatrixXd re_design(const Dataset& d, const Eigen::MatrixXd* extra = nullptr);

/// log of the integral over delta of prod_j P(Y_j | delta, theta) phi(delta/sigma)/sigma,
/// by Gauss-Hermite quadrature. At sigma == 0 the plain log-likelihood at delta = 0.
double study_marginal_loglik(const Eigen::VectorXd& theta, double sigma, const Dataset& d,
                             const ReSpec& spec, const Eigen::MatrixXd* extra = nullptr);

/// Penalty plus the sum of study marginal log-likelihoods.
double penalized_marginal_loglik(double sigma, const Eigen::VectorXd& theta,
                                 const StudyCollection& c, const ReSpec& spec);

/// Posterior-mode estimate of the trial intercept deviation given (sigma, theta).
double estimate_delta1(double sigma, const Eigen::VectorXd& theta, const Dataset& d1,
                       const Eigen::MatrixXd* extra = nullptr);

/// Penalized marginal maximum likelihood for the random-intercept model,
/// followed by delta1 recovery and the Hessian-based variance of gamma.
ReFit fit_re(const StudyCollection& c, const ReSpec& spec = {});

/// Analytic Hessian of the penalized marginal log-likelihood in
/// (sigma, theta); returns the gamma entry of its negative inverse.
double re_gamma_variance(const ReFit& fit, const StudyCollection& c, const ReSpec& spec);

/// Plug-in risk difference averaged over the trial's covariate rows.
/// `extra` holds the trial rows of the extra feature columns, if any.
double tau_hat_re(const ReFit& fit, const Dataset& d1, const Eigen::MatrixXd* extra = nullptr);

namespace detail {

/// Studies collapsed into distinct design rows with binomial counts.
struct PatternBlock {
    Eigen::MatrixXd z;
    Eigen::VectorXd trials;
    Eigen::VectorXd successes;
};

PatternBlock compress(const Eigen::MatrixXd& design, const std::vector<int>& outcomes);

/// Penalized objective in (log sigma, theta) with analytic derivatives.
class ReObjective {
public:
    ReObjective(std::vector<PatternBlock> blocks, const ReSpec& spec);

    struct Value {
        double f = 0.0;
        Eigen::VectorXd grad;     // d/d(log sigma, theta)
        Eigen::MatrixXd hessian;  // only when requested
    };

    /// x = (log sigma, theta).
    [[nodiscard]] Value evaluate(const Eigen::VectorXd& x, bool with_hessian) const;
    [[nodiscard]] int dim() const noexcept { return dim_; }

private:
    std::vector<PatternBlock> blocks_;
    ReSpec spec_;
    int dim_ = 0;
};

}  // namespace detail

}  // namespace extctl
