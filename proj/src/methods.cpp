#include "extctl/methods.hpp"

#include <cmath>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"
#include "extctl/propensity.hpp"

namespace extctl {

void MethodConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(ttp_screen_alpha > 0.0 && ttp_screen_alpha < 1.0)) throw ConfigError("TTP screen level must lie in (0, 1)");
    if (!(psw_C >= 0.0)) throw ConfigError("PSW constant C must be nonnegative");
    if (strata_S < 2) throw ConfigError("number of strata must be at least 2");
    re_spec.validate();
}

namespace {

void fill_test(AnalysisResult& r, double estimate, double variance, double alpha) {
    const WaldTest t = wald_one_sided(estimate, variance, alpha);
    r.se_stat = std::sqrt(variance);
    r.z_value = t.z;
    r.p_value = t.p_value;
    r.reject = t.reject;
}

// [1, covariates, treatment] for the given datasets.
Eigen::MatrixXd outcome_design(const std::vector<const Dataset*>& ds, Eigen::VectorXd& y) {
    Eigen::Index n = 0;
    for (const Dataset* d : ds) n += static_cast<Eigen::Index>(d->size());
    const std::size_t q = ds.front()->records.front().covariates.size();
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(q) + 2);
    y.resize(n);
    Eigen::Index row = 0;
    for (const Dataset* d : ds) {
        for (const PatientRecord& r : d->records) {
            x(row, 0) = 1.0;
            for (std::size_t k = 0; k < q; ++k) x(row, static_cast<Eigen::Index>(k) + 1) = r.covariates[k];
            x(row, static_cast<Eigen::Index>(q) + 1) = r.treatment;
            y[row] = r.outcome;
            ++row;
        }
    }
    return x;
}

// n1^-1 sum_j [F(base_j + gamma) - F(base_j)] over the trial rows.
double plug_in_tau(const Dataset& d1, double intercept, const Eigen::VectorXd& beta, double gamma) {
    double total = 0.0;
    for (const PatientRecord& r : d1.records) {
        double eta = intercept;
        for (std::size_t k = 0; k < r.covariates.size(); ++k) eta += r.covariates[k] * beta[static_cast<Eigen::Index>(k)];
        total += logistic(eta + gamma) - logistic(eta);
    }
    return total / static_cast<double>(d1.size());
}

std::size_t external_count(const StudyCollection& c) { return c.total_size() - c.rct().size(); }

}  // namespace

AnalysisResult pooled_proportion_test(const Dataset& d, double alpha, Method tag) {
    const ArmSummary treated = arm_summary(d, 1);
    const ArmSummary control = arm_summary(d, 0);
    if (!treated.rate || !control.rate) throw DegenerateArm("proportion test: a treatment arm is empty");
    AnalysisResult r;
    r.method = tag;
    r.tau_hat = *treated.rate - *control.rate;
    const double n1 = static_cast<double>(treated.n);
    const double n0 = static_cast<double>(control.n);
    const double pbar = static_cast<double>(treated.responders + control.responders) / (n1 + n0);
    const double variance = pbar * (1.0 - pbar) * (1.0 / n1 + 1.0 / n0);
    if (variance > 0.0) {
        fill_test(r, *r.tau_hat, variance, alpha);
    } else {
        // Every outcome identical: no evidence either way.
        r.z_value = 0.0;
        r.p_value = 0.5;
        r.reject = false;
        r.diagnostics.message = "zero pooled variance";
    }
    return r;
}

AnalysisResult zprop(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    AnalysisResult r = pooled_proportion_test(c.rct(), cfg.alpha, Method::ZPROP);
    r.diagnostics.included_studies = {1};
    return r;
}

AnalysisResult glm_rct_only(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    Eigen::VectorXd y;
    const Eigen::MatrixXd x = outcome_design({&c.rct()}, y);
    const GlmFit fit = fit_logistic(x, y);
    const Eigen::Index gi = x.cols() - 1;
    // Robust covariance, the same estimator PSW uses, so that PSW reduces to
    // this method when external weights vanish.
    const Eigen::MatrixXd v = sandwich_covariance(fit, x, y);
    AnalysisResult r;
    r.method = Method::GLM;
    r.gamma_hat = fit.coefficients[gi];
    r.tau_hat = plug_in_tau(c.rct(), fit.coefficients[0], fit.coefficients.segment(1, gi - 1), *r.gamma_hat);
    fill_test(r, *r.gamma_hat, v(gi, gi), cfg.alpha);
    r.diagnostics.iterations = fit.iterations;
    r.diagnostics.included_studies = {1};
    return r;
}

AnalysisResult ttp_pool(const StudyCollection& c, const std::set<int>& selected, const MethodConfig& cfg) {
    const Dataset pooled = pool(c, selected);
    AnalysisResult r = pooled_proportion_test(pooled, cfg.alpha, Method::TTP);
    r.diagnostics.included_studies.assign(selected.begin(), selected.end());
    r.diagnostics.n_external_used = pooled.size() - c.rct().size();
    return r;
}

AnalysisResult ttp(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    const ArmSummary trial_control = arm_summary(c.rct(), 0);
    if (!trial_control.rate) throw DegenerateArm("TTP: trial control arm is empty");
    std::set<int> selected{1};
    for (std::size_t i = 1; i < c.datasets.size(); ++i) {
        const Dataset& d = c.datasets[i];
        const ArmSummary ext = arm_summary(d, 0);
        if (!ext.rate) continue;
        const double n_a = static_cast<double>(trial_control.n);
        const double n_b = static_cast<double>(ext.n);
        const double pbar = static_cast<double>(trial_control.responders + ext.responders) / (n_a + n_b);
        const double variance = pbar * (1.0 - pbar) * (1.0 / n_a + 1.0 / n_b);
        double p_two_sided = 1.0;
        if (variance > 0.0) {
            const double z = (*ext.rate - *trial_control.rate) / std::sqrt(variance);
            p_two_sided = 2.0 * normal_upper_tail(std::abs(z));
        }
        if (!(p_two_sided < cfg.ttp_screen_alpha)) selected.insert(d.study_index);
    }
    return ttp_pool(c, selected, cfg);
}

AnalysisResult psw(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    const PsScores ps = fit_trial_membership_ps(c);
    const Eigen::VectorXd w = odds_weights(ps, c, cfg.psw_C);
    std::vector<const Dataset*> ds;
    for (const Dataset& d : c.datasets) ds.push_back(&d);
    Eigen::VectorXd y;
    const Eigen::MatrixXd x = outcome_design(ds, y);
    const GlmFit fit = fit_logistic(x, y, w);
    const Eigen::MatrixXd v = sandwich_covariance(fit, x, y, w);
    const Eigen::Index gi = x.cols() - 1;
    AnalysisResult r;
    r.method = Method::PSW;
    r.gamma_hat = fit.coefficients[gi];
    r.tau_hat = plug_in_tau(c.rct(), fit.coefficients[0], fit.coefficients.segment(1, gi - 1), *r.gamma_hat);
    fill_test(r, *r.gamma_hat, v(gi, gi), cfg.alpha);
    r.diagnostics.iterations = fit.iterations;
    for (const Dataset& d : c.datasets) r.diagnostics.included_studies.push_back(d.study_index);
    const auto n1 = static_cast<Eigen::Index>(c.rct().size());
    r.diagnostics.n_external_used = static_cast<std::size_t>((w.tail(w.size() - n1).array() > 0.0).count());
    return r;
}

AnalysisResult fixed_effects(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    const auto I = static_cast<Eigen::Index>(c.study_count());
    const auto q = static_cast<Eigen::Index>(c.q);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.total_size()), I + q + 1);
    Eigen::VectorXd y(x.rows());
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < I; ++i) {
        for (const PatientRecord& rec : c.datasets[static_cast<std::size_t>(i)].records) {
            x(row, i) = 1.0;
            for (Eigen::Index k = 0; k < q; ++k) x(row, I + k) = rec.covariates[static_cast<std::size_t>(k)];
            x(row, I + q) = rec.treatment;
            y[row] = rec.outcome;
            ++row;
        }
    }
    const GlmFit fit = fit_logistic(x, y);
    const Eigen::Index gi = I + q;
    AnalysisResult r;
    r.method = Method::FE;
    r.gamma_hat = fit.coefficients[gi];
    r.tau_hat = plug_in_tau(c.rct(), fit.coefficients[0], fit.coefficients.segment(I, q), *r.gamma_hat);
    fill_test(r, *r.gamma_hat, fit.covariance_model(gi, gi), cfg.alpha);
    r.diagnostics.iterations = fit.iterations;
    for (const Dataset& d : c.datasets) r.diagnostics.included_studies.push_back(d.study_index);
    r.diagnostics.n_external_used = external_count(c);
    return r;
}

namespace {

AnalysisResult re_result(Method tag, const ReFit& fit, const StudyCollection& c, const MethodConfig& cfg,
                         const Eigen::MatrixXd* trial_extra) {
    AnalysisResult r;
    r.method = tag;
    r.gamma_hat = fit.gamma;
    r.tau_hat = tau_hat_re(fit, c.rct(), trial_extra);
    fill_test(r, fit.gamma, fit.var_gamma, cfg.alpha);
    r.diagnostics.iterations = fit.iterations;
    for (const Dataset& d : c.datasets) r.diagnostics.included_studies.push_back(d.study_index);
    r.diagnostics.n_external_used = external_count(c);
    return r;
}

}  // namespace

AnalysisResult random_effects(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    ReSpec spec = cfg.re_spec;
    spec.extra_ps_features.reset();
    const ReFit fit = fit_re(c, spec);
    return re_result(Method::RE, fit, c, cfg, nullptr);
}

AnalysisResult pss_re(const StudyCollection& c, const MethodConfig& cfg, Rng& rng) {
    StudyCollection augmented;
    augmented.q = c.q;
    augmented.covariate_names = c.covariate_names;
    augmented.datasets.push_back(c.rct());
    std::vector<std::size_t> matches;
    std::string notes;
    for (std::size_t i = 1; i < c.datasets.size(); ++i) {
        const Dataset& di = c.datasets[i];
        PairwisePs ps;
        try {
            ps = fit_pairwise_ps(c.rct(), di);
        } catch (const NumericalError& e) {
            // Non-overlapping populations: this study contributes nothing.
            matches.push_back(0);
            notes += "study " + std::to_string(di.study_index) + " excluded (" + e.what() + "); ";
            continue;
        }
        const StrataBoundaries b = stratify_rct(ps.trial, cfg.strata_S);
        StratifiedSubset sub = select_stratified_subset(di, ps.external, b, rng);
        matches.push_back(sub.per_stratum);
        if (sub.per_stratum > 0) augmented.datasets.push_back(std::move(sub.subset));
    }
    ReSpec spec = cfg.re_spec;
    spec.extra_ps_features.reset();
    const ReFit fit = fit_re(augmented, spec);
    AnalysisResult r = re_result(Method::PSS_RE, fit, augmented, cfg, nullptr);
    r.diagnostics.stratum_matches = std::move(matches);
    if (augmented.study_count() == 1) notes += "no external patients selected; trial-only fit";
    r.diagnostics.message = notes;
    return r;
}

AnalysisResult ps_re(const StudyCollection& c, const MethodConfig& cfg, Rng&) {
    const GpsScores gps = fit_generalized_ps(c);
    ReSpec spec = cfg.re_spec;
    spec.extra_ps_features = gps_log_odds_features(gps);
    const ReFit fit = fit_re(c, spec);
    const Eigen::MatrixXd trial_extra = spec.extra_ps_features->topRows(static_cast<Eigen::Index>(c.rct().size()));
    return re_result(Method::PS_RE, fit, c, cfg, &trial_extra);
}

AnalysisResult analyze(Method m, const StudyCollection& c, const MethodConfig& cfg, Rng& rng) {
    try {
        switch (m) {
            case Method::ZPROP: return zprop(c, cfg, rng);
            case Method::GLM: return glm_rct_only(c, cfg, rng);
            case Method::TTP: return ttp(c, cfg, rng);
            case Method::PSW: return psw(c, cfg, rng);
            case Method::FE: return fixed_effects(c, cfg, rng);
            case Method::RE: return random_effects(c, cfg, rng);
            case Method::PSS_RE: return pss_re(c, cfg, rng);
            case Method::PS_RE: return ps_re(c, cfg, rng);
        }
    } catch (const NumericalError& e) {
        AnalysisResult r;
        r.method = m;
        r.diagnostics.converged = false;
        r.diagnostics.message = e.what();
        return r;
    } catch (const std::invalid_argument& e) {
        AnalysisResult r;
        r.method = m;
        r.diagnostics.converged = false;
        r.diagnostics.message = e.what();
        return r;
    }
    throw std::logic_error("analyze: unknown method");
}

}  // namespace extctl
