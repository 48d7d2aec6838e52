#include "extctl/mixed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"

namespace extctl {

namespace {

constexpr double kLogSigmaMin = -13.815510557964274;  // log(1e-6)
constexpr double kLogSigmaMax = 3.2188758248682006;   // log(25)

double log_sum_exp(const Eigen::VectorXd& a) {
    const double m = a.maxCoeff();
    return m + std::log((a.array() - m).exp().sum());
}

}  // namespace

void ReSpec::validate() const {
    if (!(penalty_eta > 0.0)) throw ConfigError("ReSpec: penalty_eta must be positive");
    if (!(penalty_lambda >= 0.0)) throw ConfigError("ReSpec: penalty_lambda must be nonnegative");
    if (quadrature_nodes < 11 || quadrature_nodes % 2 == 0) {
        throw ConfigError("ReSpec: quadrature_nodes must be odd and >= 11");
    }
}

Eigen::VectorXd ReFit::theta() const {
    const Eigen::Index q = beta.size();
    Eigen::VectorXd t(q + 2 + static_cast<Eigen::Index>(kept_features.size()));
    t[0] = beta0;
    t.segment(1, q) = beta;
    t[q + 1] = gamma;
    for (std::size_t k = 0; k < kept_features.size(); ++k) {
        t[q + 2 + static_cast<Eigen::Index>(k)] = zeta[kept_features[k]];
    }
    return t;
}

const GaussHermite& gauss_hermite(int n) {
    static std::mutex mutex;
    static std::map<int, GaussHermite> cache;
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;

    // Golub-Welsch: eigen-decomposition of the Jacobi matrix of the Hermite recurrence.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussHermite rule;
    rule.nodes = eig.eigenvalues();
    rule.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().cwiseAbs2();
    // Symmetrize so that the middle node is exactly zero.
    for (int k = 0; k < n / 2; ++k) {
        const double x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
        const double w = 0.5 * (rule.weights[n - 1 - k] + rule.weights[k]);
        rule.nodes[k] = -x;
        rule.nodes[n - 1 - k] = x;
        rule.weights[k] = rule.weights[n - 1 - k] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return cache.emplace(n, std::move(rule)).first->second;
}

Eigen::MatrixXd re_design(const Dataset& d, const Eigen::MatrixXd* extra) {
    const Eigen::Index n = static_cast<Eigen::Index>(d.size());
    const Eigen::Index q = n > 0 ? static_cast<Eigen::Index>(d.records.front().covariates.size()) : 0;
    const Eigen::Index k = extra ? extra->cols() : 0;
    if (extra && extra->rows() != n) throw std::invalid_argument("re_design: extra rows mismatch");
    Eigen::MatrixXd z(n, q + 2 + k);
    for (Eigen::Index j = 0; j < n; ++j) {
        const PatientRecord& r = d.records[static_cast<std::size_t>(j)];
        z(j, 0) = 1.0;
        for (Eigen::Index c = 0; c < q; ++c) z(j, 1 + c) = r.covariates[static_cast<std::size_t>(c)];
        z(j, q + 1) = r.treatment;
        if (k > 0) z.row(j).tail(k) = extra->row(j);
    }
    return z;
}

namespace detail {

PatternBlock compress(const Eigen::MatrixXd& design, const std::vector<int>& outcomes) {
    std::map<std::vector<double>, std::size_t> index;
    std::vector<std::vector<double>> rows;
    std::vector<double> trials;
    std::vector<double> successes;
    for (Eigen::Index j = 0; j < design.rows(); ++j) {
        std::vector<double> key(static_cast<std::size_t>(design.cols()));
        for (Eigen::Index c = 0; c < design.cols(); ++c) key[static_cast<std::size_t>(c)] = design(j, c);
        auto [it, inserted] = index.try_emplace(key, rows.size());
        if (inserted) {
            rows.push_back(key);
            trials.push_back(0.0);
            successes.push_back(0.0);
        }
        trials[it->second] += 1.0;
        successes[it->second] += outcomes[static_cast<std::size_t>(j)];
    }
    PatternBlock b;
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    b.z.resize(m, design.cols());
    b.trials.resize(m);
    b.successes.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        for (Eigen::Index c = 0; c < design.cols(); ++c) {
            b.z(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        b.trials[r] = trials[static_cast<std::size_t>(r)];
        b.successes[r] = successes[static_cast<std::size_t>(r)];
    }
    return b;
}

ReObjective::ReObjective(std::vector<PatternBlock> blocks, const ReSpec& spec)
    : blocks_(std::move(blocks)), spec_(spec) {
    spec_.extra_ps_features.reset();
    dim_ = blocks_.empty() ? 1 : static_cast<int>(blocks_.front().z.cols()) + 1;
}

ReObjective::Value ReObjective::evaluate(const Eigen::VectorXd& x, bool with_hessian) const {
    const GaussHermite& gh = gauss_hermite(spec_.quadrature_nodes);
    const int nodes = spec_.quadrature_nodes;
    const Eigen::Index p = dim_ - 1;
    const double u = x[0];
    const double sigma = std::exp(u);
    const Eigen::VectorXd theta = x.tail(p);

    Value out;
    out.f = (spec_.penalty_eta - 1.0) * u - spec_.penalty_lambda * sigma;
    out.grad = Eigen::VectorXd::Zero(dim_);
    out.grad[0] = (spec_.penalty_eta - 1.0) - spec_.penalty_lambda * sigma;
    if (with_hessian) {
        out.hessian = Eigen::MatrixXd::Zero(dim_, dim_);
        out.hessian(0, 0) = -spec_.penalty_lambda * sigma;
    }

    Eigen::VectorXd log_terms(nodes);
    Eigen::MatrixXd node_grad(dim_, nodes);
    std::vector<Eigen::MatrixXd> node_hess;
    if (with_hessian) node_hess.assign(static_cast<std::size_t>(nodes), Eigen::MatrixXd(dim_, dim_));
    Eigen::VectorXd zt(dim_);

    for (const PatternBlock& b : blocks_) {
        const Eigen::VectorXd eta0 = b.z * theta;
        for (int k = 0; k < nodes; ++k) {
            const double delta = std::numbers::sqrt2 * sigma * gh.nodes[k];
            double lk = 0.0;
            auto g = node_grad.col(k);
            g.setZero();
            Eigen::MatrixXd* h = with_hessian ? &node_hess[static_cast<std::size_t>(k)] : nullptr;
            if (h) h->setZero();
            for (Eigen::Index r = 0; r < b.z.rows(); ++r) {
                const double e = eta0[r] + delta;
                const double pr = logistic(e);
                const double n = b.trials[r];
                const double s = b.successes[r];
                lk += s * e - n * log1p_exp(e);
                const double res = s - n * pr;
                zt[0] = delta;
                zt.tail(p) = b.z.row(r).transpose();
                g += res * zt;
                if (h) {
                    h->noalias() -= (n * pr * (1.0 - pr)) * zt * zt.transpose();
                    (*h)(0, 0) += res * delta;
                }
            }
            log_terms[k] = std::log(gh.weights[k]) - 0.5 * std::log(std::numbers::pi) + lk;
        }
        const double lse = log_sum_exp(log_terms);
        out.f += lse;
        const Eigen::VectorXd post = (log_terms.array() - lse).exp();
        const Eigen::VectorXd gi = node_grad * post;
        out.grad += gi;
        if (with_hessian) {
            Eigen::MatrixXd hi = -gi * gi.transpose();
            for (int k = 0; k < nodes; ++k) {
                hi += post[k] * (node_hess[static_cast<std::size_t>(k)] +
                                 node_grad.col(k) * node_grad.col(k).transpose());
            }
            out.hessian += hi;
        }
    }
    return out;
}

}  // namespace detail

namespace {

using detail::PatternBlock;
using detail::ReObjective;

std::vector<int> outcomes_of(const Dataset& d) {
    std::vector<int> y;
    y.reserve(d.size());
    for (const PatientRecord& r : d.records) y.push_back(r.outcome);
    return y;
}

// Extra-feature columns that are not (numerically) in the span of the base
// design and the previously kept columns, in order.
std::vector<int> independent_feature_columns(const Eigen::MatrixXd& base, const Eigen::MatrixXd& extra) {
    std::vector<int> kept;
    Eigen::MatrixXd current = base;
    for (Eigen::Index c = 0; c < extra.cols(); ++c) {
        const Eigen::VectorXd f = extra.col(c);
        const double norm = f.norm();
        if (!(norm > 0.0)) continue;
        const Eigen::VectorXd coef = current.colPivHouseholderQr().solve(f);
        const double resid = (f - current * coef).norm();
        if (resid > 1e-7 * norm) {
            kept.push_back(static_cast<int>(c));
            current.conservativeResize(Eigen::NoChange, current.cols() + 1);
            current.col(current.cols() - 1) = f;
        }
    }
    return kept;
}

struct ReProblem {
    std::vector<PatternBlock> blocks;
    std::vector<Eigen::MatrixXd> designs;  // uncompressed, per study
    std::vector<std::vector<int>> outcomes;
    std::vector<int> kept;
    Eigen::MatrixXd trial_extra;  // trial rows of the kept extra columns
};

ReProblem build_problem(const StudyCollection& c, const ReSpec& spec,
                        const std::optional<std::vector<int>>& kept_override) {
    ReProblem prob;
    const Eigen::MatrixXd* all_extra = spec.extra_ps_features ? &*spec.extra_ps_features : nullptr;
    if (all_extra && all_extra->rows() != static_cast<Eigen::Index>(c.total_size())) {
        throw std::invalid_argument("fit_re: extra feature rows do not match patient count");
    }
    if (all_extra) {
        if (kept_override) {
            prob.kept = *kept_override;
        } else {
            Eigen::MatrixXd base(static_cast<Eigen::Index>(c.total_size()), static_cast<Eigen::Index>(c.q) + 2);
            Eigen::Index row = 0;
            for (const Dataset& d : c.datasets) {
                const Eigen::MatrixXd z = re_design(d);
                base.middleRows(row, z.rows()) = z;
                row += z.rows();
            }
            prob.kept = independent_feature_columns(base, *all_extra);
        }
    }
    Eigen::Index offset = 0;
    for (const Dataset& d : c.datasets) {
        const Eigen::Index n = static_cast<Eigen::Index>(d.size());
        Eigen::MatrixXd extra;
        if (all_extra && !prob.kept.empty()) {
            extra.resize(n, static_cast<Eigen::Index>(prob.kept.size()));
            for (std::size_t k = 0; k < prob.kept.size(); ++k) {
                extra.col(static_cast<Eigen::Index>(k)) = all_extra->col(prob.kept[k]).segment(offset, n);
            }
        }
        const bool has_extra = extra.size() > 0;
        Eigen::MatrixXd z = re_design(d, has_extra ? &extra : nullptr);
        if (d.is_rct() && has_extra) prob.trial_extra = extra;
        std::vector<int> y = outcomes_of(d);
        prob.blocks.push_back(detail::compress(z, y));
        prob.designs.push_back(std::move(z));
        prob.outcomes.push_back(std::move(y));
        offset += n;
    }
    return prob;
}

struct NewtonResult {
    Eigen::VectorXd x;
    double f = -std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
};

NewtonResult maximize(const ReObjective& obj, Eigen::VectorXd x) {
    NewtonResult res;
    x[0] = std::clamp(x[0], kLogSigmaMin, kLogSigmaMax);
    ReObjective::Value val = obj.evaluate(x, true);
    const Eigen::Index dim = x.size();
    for (int it = 1; it <= 200; ++it) {
        res.iterations = it;
        Eigen::VectorXd g = val.grad;
        Eigen::MatrixXd a = -val.hessian;
        const bool at_lower = x[0] <= kLogSigmaMin && g[0] < 0.0;
        const bool at_upper = x[0] >= kLogSigmaMax && g[0] > 0.0;
        if (at_lower || at_upper) {
            g[0] = 0.0;
            a.row(0).setZero();
            a.col(0).setZero();
            a(0, 0) = 1.0;
        }
        if (!std::isfinite(val.f) || !g.allFinite()) break;
        if (g.lpNorm<Eigen::Infinity>() < 1e-8) {
            res.converged = true;
            break;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        double mu = 0.0;
        const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
        while (llt.info() != Eigen::Success) {
            mu = mu == 0.0 ? 1e-8 * scale : mu * 10.0;
            llt.compute(a + mu * Eigen::MatrixXd::Identity(dim, dim));
            if (mu > 1e12 * scale) break;
        }
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd step = llt.solve(g);
        if (g.dot(step) < 1e-16 * std::max(1.0, std::abs(val.f))) {
            res.converged = true;
            break;
        }
        double t = 1.0;
        bool improved = false;
        Eigen::VectorXd cand;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            cand = x + t * step;
            cand[0] = std::clamp(cand[0], kLogSigmaMin, kLogSigmaMax);
            const double fc = obj.evaluate(cand, false).f;
            if (std::isfinite(fc) && fc >= val.f - 1e-13 * std::abs(val.f)) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            res.converged = g.lpNorm<Eigen::Infinity>() < 1e-5;
            break;
        }
        x = cand;
        val = obj.evaluate(x, true);
    }
    res.x = x;
    res.f = val.f;
    return res;
}

// Var(gamma) from the analytic Hessian of the penalized objective in
// (sigma, theta) coordinates, obtained from the (log sigma, theta) one.
double gamma_variance_impl(const ReObjective& obj, const Eigen::VectorXd& xu, Eigen::Index gamma_index) {
    const ReObjective::Value val = obj.evaluate(xu, true);
    const double sigma = std::exp(xu[0]);
    Eigen::MatrixXd hess = val.hessian;
    hess(0, 0) = (hess(0, 0) - val.grad[0]) / (sigma * sigma);
    hess.row(0).tail(hess.cols() - 1) /= sigma;
    hess.col(0).tail(hess.rows() - 1) /= sigma;
    const Eigen::MatrixXd neg = -0.5 * (hess + hess.transpose());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg);
    const Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-14 * d.cwiseAbs().maxCoeff())) {
        throw SingularError("re_gamma_variance: Hessian is not negative definite");
    }
    Eigen::VectorXd e = Eigen::VectorXd::Zero(hess.rows());
    e[gamma_index] = 1.0;
    const double v = ldlt.solve(e)[gamma_index];
    if (!(v > 0.0) || !std::isfinite(v)) throw SingularError("re_gamma_variance: nonpositive variance");
    return v;
}

}  // namespace

double study_marginal_loglik(const Eigen::VectorXd& theta, double sigma, const Dataset& d,
                             const ReSpec& spec, const Eigen::MatrixXd* extra) {
    if (sigma < 0.0) throw std::invalid_argument("study_marginal_loglik: sigma must be nonnegative");
    const Eigen::MatrixXd z = re_design(d, extra);
    const Eigen::VectorXd eta = z * theta;
    auto loglik_at = [&](double delta) {
        double ll = 0.0;
        for (Eigen::Index j = 0; j < eta.size(); ++j) {
            const double e = eta[j] + delta;
            ll += d.records[static_cast<std::size_t>(j)].outcome * e - log1p_exp(e);
        }
        return ll;
    };
    if (sigma == 0.0) return loglik_at(0.0);
    const GaussHermite& gh = gauss_hermite(spec.quadrature_nodes);
    Eigen::VectorXd terms(spec.quadrature_nodes);
    for (int k = 0; k < spec.quadrature_nodes; ++k) {
        terms[k] = std::log(gh.weights[k]) - 0.5 * std::log(std::numbers::pi) +
                   loglik_at(std::numbers::sqrt2 * sigma * gh.nodes[k]);
    }
    return log_sum_exp(terms);
}

double penalized_marginal_loglik(double sigma, const Eigen::VectorXd& theta, const StudyCollection& c,
                                 const ReSpec& spec) {
    if (!(sigma > 0.0)) return -std::numeric_limits<double>::infinity();
    double f = (spec.penalty_eta - 1.0) * std::log(sigma) - spec.penalty_lambda * sigma;
    const Eigen::MatrixXd* all_extra = spec.extra_ps_features ? &*spec.extra_ps_features : nullptr;
    Eigen::Index offset = 0;
    for (const Dataset& d : c.datasets) {
        const Eigen::Index n = static_cast<Eigen::Index>(d.size());
        if (all_extra) {
            const Eigen::MatrixXd rows = all_extra->middleRows(offset, n);
            f += study_marginal_loglik(theta, sigma, d, spec, &rows);
        } else {
            f += study_marginal_loglik(theta, sigma, d, spec);
        }
        offset += n;
    }
    return f;
}

double estimate_delta1(double sigma, const Eigen::VectorXd& theta, const Dataset& d1,
                       const Eigen::MatrixXd* extra) {
    if (sigma < 0.0) throw std::invalid_argument("estimate_delta1: sigma must be nonnegative");
    if (sigma == 0.0) return 0.0;
    const PatternBlock b = detail::compress(re_design(d1, extra), outcomes_of(d1));
    const Eigen::VectorXd eta0 = b.z * theta;
    const double prec = 1.0 / (sigma * sigma);
    // Derivative of the (concave) log posterior kernel and its slope.
    auto slope = [&](double delta, double* curvature) {
        double s = -delta * prec;
        double c = -prec;
        for (Eigen::Index r = 0; r < eta0.size(); ++r) {
            const double pr = logistic(eta0[r] + delta);
            s += b.successes[r] - b.trials[r] * pr;
            c -= b.trials[r] * pr * (1.0 - pr);
        }
        if (curvature) *curvature = c;
        return s;
    };
    double lo = -6.0 * sigma;
    double hi = 6.0 * sigma;
    while (slope(lo, nullptr) < 0.0) lo *= 2.0;
    while (slope(hi, nullptr) > 0.0) hi *= 2.0;
    double x = 0.0;
    if (x <= lo || x >= hi) x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double curv = 0.0;
        const double s = slope(x, &curv);
        if (s > 0.0) lo = x; else hi = x;
        double next = x - s / curv;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) < 1e-13 * std::max(1.0, std::abs(x)) || hi - lo < 1e-14) return next;
        x = next;
    }
    return x;
}

ReFit fit_re(const StudyCollection& c, const ReSpec& spec) {
    spec.validate();
    if (c.datasets.empty()) throw std::invalid_argument("fit_re: empty collection");
    ReProblem prob = build_problem(c, spec, std::nullopt);
    const Eigen::Index p = prob.blocks.front().z.cols();
    const Eigen::Index q = static_cast<Eigen::Index>(c.q);

    // Starting fixed effects from the pooled logistic fit (no study effects).
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(p);
    {
        Eigen::Index total = 0;
        for (const auto& z : prob.designs) total += z.rows();
        Eigen::MatrixXd x(total, p);
        Eigen::VectorXd y(total);
        Eigen::Index row = 0;
        for (std::size_t i = 0; i < prob.designs.size(); ++i) {
            x.middleRows(row, prob.designs[i].rows()) = prob.designs[i];
            for (int v : prob.outcomes[i]) y[row++] = v;
        }
        try {
            theta0 = fit_logistic(x, y).coefficients;
        } catch (const NumericalError&) {
            theta0.setZero();
        }
    }

    const ReObjective obj(prob.blocks, spec);
    NewtonResult best;
    for (double sigma0 : {0.1, 0.5}) {
        Eigen::VectorXd x0(p + 1);
        x0[0] = std::log(sigma0);
        x0.tail(p) = theta0;
        NewtonResult r = maximize(obj, x0);
        if (!best.x.size() || (r.converged && !best.converged) ||
            (r.converged == best.converged && r.f > best.f)) {
            best = std::move(r);
        }
    }

    ReFit fit;
    fit.kept_features = prob.kept;
    fit.iterations = best.iterations;
    fit.penalized_loglik = best.f;
    fit.sigma_delta = std::exp(best.x[0]);
    const Eigen::VectorXd theta = best.x.tail(p);
    fit.beta0 = theta[0];
    fit.beta = theta.segment(1, q);
    fit.gamma = theta[q + 1];
    const Eigen::Index n_extra = spec.extra_ps_features ? spec.extra_ps_features->cols() : 0;
    fit.zeta = Eigen::VectorXd::Zero(n_extra);
    for (std::size_t k = 0; k < prob.kept.size(); ++k) {
        fit.zeta[prob.kept[k]] = theta[q + 2 + static_cast<Eigen::Index>(k)];
    }
    if (!best.converged || !theta.allFinite()) {
        throw NonConvergence("fit_re: penalized likelihood maximization did not converge");
    }
    const Eigen::MatrixXd* trial_extra = prob.trial_extra.size() > 0 ? &prob.trial_extra : nullptr;
    fit.delta1 = estimate_delta1(fit.sigma_delta, theta, c.rct(), trial_extra);

    fit.var_gamma = gamma_variance_impl(obj, best.x, q + 2);
    fit.converged = true;
    return fit;
}

double re_gamma_variance(const ReFit& fit, const StudyCollection& c, const ReSpec& spec) {
    if (!fit.converged) throw std::invalid_argument("re_gamma_variance: fit did not converge");
    const ReProblem prob = build_problem(c, spec, fit.kept_features);
    const ReObjective obj(prob.blocks, spec);
    const Eigen::VectorXd theta = fit.theta();
    Eigen::VectorXd xu(theta.size() + 1);
    xu[0] = std::log(fit.sigma_delta);
    xu.tail(theta.size()) = theta;
    return gamma_variance_impl(obj, xu, static_cast<Eigen::Index>(c.q) + 2);
}

double tau_hat_re(const ReFit& fit, const Dataset& d1, const Eigen::MatrixXd* extra) {
    if (d1.records.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < d1.size(); ++j) {
        const PatientRecord& r = d1.records[j];
        double eta = fit.beta0 + fit.delta1;
        for (std::size_t k = 0; k < r.covariates.size(); ++k) eta += r.covariates[k] * fit.beta[static_cast<Eigen::Index>(k)];
        if (extra && fit.zeta.size() > 0) eta += extra->row(static_cast<Eigen::Index>(j)).dot(fit.zeta);
        total += logistic(eta + fit.gamma) - logistic(eta);
    }
    return total / static_cast<double>(d1.size());
}

}  // namespace extctl
