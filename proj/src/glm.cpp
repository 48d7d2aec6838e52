#include "extctl/glm.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "extctl/errors.hpp"

namespace extctl {

namespace {

Eigen::VectorXd unit_weights(const Eigen::MatrixXd& x, const std::optional<Eigen::VectorXd>& w) {
    return w ? *w : Eigen::VectorXd::Ones(x.rows());
}

// Inverse of a symmetric positive definite matrix; SingularError when the
// smallest pivot is negligible relative to the largest.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(dmax > 0.0) || d.minCoeff() <= 1e-11 * dmax) {
        throw SingularError(std::string(what) + ": information matrix is rank deficient");
    }
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

double logistic_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    double ll = 0.0;
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
        if (w[j] == 0.0) continue;
        ll += w[j] * (y[j] * eta[j] - log1p_exp(eta[j]));
    }
    return ll;
}

GlmFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const std::optional<Eigen::VectorXd>& w_opt, const GlmOptions& opts) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (y.size() != n || (w_opt && w_opt->size() != n)) {
        throw std::invalid_argument("fit_logistic: dimension mismatch");
    }
    const Eigen::VectorXd w = unit_weights(x, w_opt);
    bool any0 = false;
    bool any1 = false;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (w[j] < 0.0 || !std::isfinite(w[j])) throw std::invalid_argument("fit_logistic: negative weight");
        if (w[j] > 0.0) {
            any0 = any0 || y[j] == 0.0;
            any1 = any1 || y[j] == 1.0;
        }
    }
    if (!any0 || !any1) throw SeparationError("fit_logistic: response is constant among weighted rows");

    GlmFit fit;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double ll = logistic_log_likelihood(x, y, w, beta);
    double ll_prev = -std::numeric_limits<double>::infinity();
    Eigen::MatrixXd info(p, p);
    Eigen::VectorXd score(p);

    auto derivatives = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = x * b;
        Eigen::VectorXd resid(n);
        Eigen::VectorXd var(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double pj = logistic(eta[j]);
            resid[j] = w[j] * (y[j] - pj);
            var[j] = w[j] * pj * (1.0 - pj);
        }
        score = x.transpose() * resid;
        info = x.transpose() * var.asDiagonal() * x;
    };

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        derivatives(beta);
        fit.iterations = iter;
        const bool ll_stable = std::abs(ll - ll_prev) <= opts.tol_ll * (std::abs(ll) + opts.tol_ll);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        const Eigen::VectorXd d = ldlt.vectorD();
        if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-11 * d.cwiseAbs().maxCoeff()) {
            // Vanishing curvature along a direction is what separation looks like
            // once the fitted probabilities saturate.
            if (beta.lpNorm<Eigen::Infinity>() > 0.5 * opts.divergence_bound) {
                throw SeparationError("fit_logistic: coefficients diverging");
            }
            throw SingularError("fit_logistic: information matrix is rank deficient");
        }
        const Eigen::VectorXd step = ldlt.solve(score);
        // Under separation the score vanishes while Newton steps stay near one
        // unit, so a small score alone does not mean convergence.
        if (ll_stable && score.lpNorm<Eigen::Infinity>() <= opts.tol_score &&
            step.lpNorm<Eigen::Infinity>() <= opts.tol_step) {
            fit.converged = true;
            break;
        }
        double t = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double ll_new = logistic_log_likelihood(x, y, w, candidate);
        while (!(ll_new >= ll - 1e-12 * std::abs(ll)) && t > 1e-10) {
            t *= 0.5;
            candidate = beta + t * step;
            ll_new = logistic_log_likelihood(x, y, w, candidate);
        }
        if (candidate.lpNorm<Eigen::Infinity>() > opts.divergence_bound) {
            throw SeparationError("fit_logistic: |coefficient| exceeded divergence bound");
        }
        beta = candidate;
        ll_prev = ll;
        ll = ll_new;
    }
    if (!fit.converged) throw NonConvergence("fit_logistic: iteration limit reached");

    fit.coefficients = beta;
    fit.log_likelihood = ll;
    fit.covariance_model = spd_inverse(info, "fit_logistic");
    return fit;
}

Eigen::MatrixXd sandwich_covariance(const GlmFit& fit, const Eigen::MatrixXd& x,
                                    const Eigen::VectorXd& y,
                                    const std::optional<Eigen::VectorXd>& w_opt) {
    if (!fit.converged) throw std::invalid_argument("sandwich_covariance: fit did not converge");
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    const Eigen::VectorXd w = unit_weights(x, w_opt);
    const Eigen::VectorXd eta = x * fit.coefficients;
    Eigen::MatrixXd neg_hessian = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd var(n);
    Eigen::VectorXd score_scale(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double pj = logistic(eta[j]);
        var[j] = w[j] * pj * (1.0 - pj);
        score_scale[j] = w[j] * (y[j] - pj);
    }
    neg_hessian = x.transpose() * var.asDiagonal() * x;
    meat = x.transpose() * score_scale.cwiseAbs2().asDiagonal() * x;
    const Eigen::MatrixXd bread = spd_inverse(neg_hessian, "sandwich_covariance");
    Eigen::MatrixXd v = bread * meat * bread;
    return 0.5 * (v + v.transpose());
}

Eigen::MatrixXd MultinomialFit::predict(const Eigen::MatrixXd& x) const {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd probs(n, categories);
    const Eigen::MatrixXd eta = x * coefficients.transpose();  // n x (K-1)
    for (Eigen::Index j = 0; j < n; ++j) {
        double m = 0.0;
        for (int k = 0; k + 1 < categories; ++k) m = std::max(m, eta(j, k));
        double total = std::exp(-m);
        probs(j, 0) = total;
        for (int k = 1; k < categories; ++k) {
            probs(j, k) = std::exp(eta(j, k - 1) - m);
            total += probs(j, k);
        }
        probs.row(j) /= total;
    }
    return probs;
}

MultinomialFit fit_multinomial(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                               int categories, const GlmOptions& opts) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (categories < 2) throw std::invalid_argument("fit_multinomial: need at least two categories");
    if (static_cast<Eigen::Index>(labels.size()) != n) {
        throw std::invalid_argument("fit_multinomial: dimension mismatch");
    }
    std::vector<int> counts(static_cast<std::size_t>(categories), 0);
    for (int label : labels) {
        if (label < 1 || label > categories) throw std::invalid_argument("fit_multinomial: label out of range");
        ++counts[static_cast<std::size_t>(label - 1)];
    }
    for (int c : counts) {
        if (c == 0) throw SeparationError("fit_multinomial: a category is never observed");
    }

    const int km1 = categories - 1;
    const Eigen::Index dim = km1 * p;
    MultinomialFit fit;
    fit.categories = categories;
    fit.coefficients = Eigen::MatrixXd::Zero(km1, p);

    auto loglik = [&](const MultinomialFit& f) {
        const Eigen::MatrixXd probs = f.predict(x);
        double ll = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) ll += std::log(probs(j, labels[j] - 1));
        return ll;
    };

    double ll = loglik(fit);
    double ll_prev = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad(dim);
    Eigen::MatrixXd info(dim, dim);
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        fit.iterations = iter;
        const Eigen::MatrixXd probs = fit.predict(x);
        grad.setZero();
        info.setZero();
        for (Eigen::Index j = 0; j < n; ++j) {
            const Eigen::VectorXd xj = x.row(j).transpose();
            const Eigen::MatrixXd xx = xj * xj.transpose();
            for (int k = 0; k < km1; ++k) {
                const double pk = probs(j, k + 1);
                const double yk = labels[j] == k + 2 ? 1.0 : 0.0;
                grad.segment(k * p, p) += (yk - pk) * xj;
                for (int l = 0; l <= k; ++l) {
                    const double pl = probs(j, l + 1);
                    const double c = (k == l ? pk * (1.0 - pk) : -pk * pl);
                    info.block(k * p, l * p, p, p) += c * xx;
                }
            }
        }
        for (int k = 0; k < km1; ++k) {
            for (int l = 0; l < k; ++l) {
                info.block(l * p, k * p, p, p) = info.block(k * p, l * p, p, p).transpose();
            }
        }
        const bool ll_stable = std::abs(ll - ll_prev) <= opts.tol_ll * (std::abs(ll) + opts.tol_ll);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        const Eigen::VectorXd d = ldlt.vectorD();
        if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-11 * d.cwiseAbs().maxCoeff()) {
            if (fit.coefficients.lpNorm<Eigen::Infinity>() > 0.5 * opts.divergence_bound) {
                throw SeparationError("fit_multinomial: coefficients diverging");
            }
            throw SingularError("fit_multinomial: information matrix is rank deficient");
        }
        const Eigen::VectorXd step = ldlt.solve(grad);
        if (ll_stable && grad.lpNorm<Eigen::Infinity>() <= opts.tol_score &&
            step.lpNorm<Eigen::Infinity>() <= opts.tol_step) {
            fit.converged = true;
            break;
        }
        const MultinomialFit base = fit;
        double t = 1.0;
        double ll_new = 0.0;
        for (;;) {
            for (int k = 0; k < km1; ++k) {
                fit.coefficients.row(k) = base.coefficients.row(k) + t * step.segment(k * p, p).transpose();
            }
            ll_new = loglik(fit);
            if (ll_new >= ll - 1e-12 * std::abs(ll) || t <= 1e-10) break;
            t *= 0.5;
        }
        if (fit.coefficients.lpNorm<Eigen::Infinity>() > opts.divergence_bound) {
            throw SeparationError("fit_multinomial: |coefficient| exceeded divergence bound");
        }
        ll_prev = ll;
        ll = ll_new;
    }
    if (!fit.converged) throw NonConvergence("fit_multinomial: iteration limit reached");
    fit.log_likelihood = ll;
    return fit;
}

WaldTest wald_one_sided(double estimate, double variance, double alpha) {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
        throw std::invalid_argument("wald_one_sided: variance must be positive");
    }
    WaldTest t;
    t.z = estimate / std::sqrt(variance);
    t.p_value = normal_upper_tail(t.z);
    t.reject = t.p_value < alpha;
    return t;
}

}  // namespace extctl
