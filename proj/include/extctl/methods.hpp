#pragma once

#include <set>

#include "extctl/mixed.hpp"
#include "extctl/model.hpp"
#include "extctl/rng.hpp"

namespace extctl {

struct MethodConfig {
    double alpha = 0.05;            // one-sided level of the final test
    double ttp_screen_alpha = 0.2;  // two-sided level of the TTP compatibility screen
    double psw_C = 1.0;
    int strata_S = 5;
    ReSpec re_spec;

    void validate() const;
};

// Each method maps a collection to one result. Numerical failures propagate
// as exceptions; use analyze() to obtain a failure-marked result instead.

/// Two-sample z-test for proportions on the trial alone.
AnalysisResult zprop(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Covariate-adjusted logistic regression on the trial alone.
AnalysisResult glm_rct_only(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Test-then-pool.
AnalysisResult ttp(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Propensity-score (odds) weighted logistic regression with sandwich variance.
AnalysisResult psw(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Study-specific intercepts, shared covariate and treatment effects.
AnalysisResult fixed_effects(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Random study intercepts, penalized marginal likelihood.
AnalysisResult random_effects(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Propensity-stratified subsets of each external study, then random effects.
AnalysisResult pss_re(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);
/// Generalized propensity log-odds as covariates in the random-effects model.
AnalysisResult ps_re(const StudyCollection& c, const MethodConfig& cfg, Rng& rng);

/// Pooled-variance two-sample z-test of treated vs control response in `d`.
AnalysisResult pooled_proportion_test(const Dataset& d, double alpha, Method tag);

/// Test-then-pool step 2 for an explicit selection (step 1 skipped).
AnalysisResult ttp_pool(const StudyCollection& c, const std::set<int>& selected, const MethodConfig& cfg);

/// Dispatch by method; numerical failures become a result with reject = false,
/// no tau estimate and diagnostics.converged = false.
AnalysisResult analyze(Method m, const StudyCollection& c, const MethodConfig& cfg, Rng& rng);

}  // namespace extctl
