#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "extctl/glm.hpp"
#include "extctl/model.hpp"
#include "extctl/rng.hpp"

namespace extctl {

/// [1, covariates] rows for every patient of the datasets, in order.
Eigen::MatrixXd covariate_design(const std::vector<const Dataset*>& datasets);

struct PsScores {
    Eigen::VectorXd scores;  // aligned with collection order
    GlmFit model;
};

/// Logistic model of trial membership on covariates over the whole collection.
PsScores fit_trial_membership_ps(const StudyCollection& c);

/// Weight 1 for trial patients and C e/(1-e) for external patients.
Eigen::VectorXd odds_weights(const PsScores& s, const StudyCollection& c, double C);

struct PairwisePs {
    Eigen::VectorXd trial;     // scores of D1 patients
    Eigen::VectorXd external;  // scores of Di patients
    GlmFit model;
};

/// Membership model fitted on D1 and one external dataset.
PairwisePs fit_pairwise_ps(const Dataset& d1, const Dataset& di);

/// Strata of the trial defined by type-1 sample quantiles of its scores.
///
/// `cuts` are the raw (s/S)-quantiles. `intervals` are the effective strata
/// (lo, hi]: raw strata that contain no trial patient, which happens when
/// tied scores produce repeated cuts, are merged into their neighbour so
/// that the strata tile (0, 1].
struct StrataBoundaries {
    std::vector<double> cuts;
    int S = 0;
    std::vector<std::pair<double, double>> intervals;
    int collapsed = 0;        // S - intervals.size()
    bool degenerate = false;  // fewer than two effective strata

    [[nodiscard]] int stratum_of(double score) const;
};

StrataBoundaries stratify_rct(const Eigen::VectorXd& scores_d1, int S);

struct StratifiedSubset {
    Dataset subset;
    std::size_t per_stratum = 0;              // L_i
    std::vector<std::size_t> stratum_counts;  // m_s
};

/// Draws L_i = min_s m_s patients uniformly without replacement from each
/// stratum. The subset keeps the original record order.
StratifiedSubset select_stratified_subset(const Dataset& di, const Eigen::VectorXd& scores_di,
                                          const StrataBoundaries& b, Rng& rng);

struct GpsScores {
    Eigen::MatrixXd probabilities;  // n x I, collection order
    MultinomialFit model;
};

/// Multinomial logit of study label on covariates.
GpsScores fit_generalized_ps(const StudyCollection& c);

/// Columns log(e_k / (1 - e_k)) for studies k = 2..I.
Eigen::MatrixXd gps_log_odds_features(const GpsScores& g);

}  // namespace extctl
