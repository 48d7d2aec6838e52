#include "extctl/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "extctl/errors.hpp"

namespace extctl {

Eigen::MatrixXd covariate_design(const std::vector<const Dataset*>& datasets) {
    Eigen::Index n = 0;
    Eigen::Index q = 0;
    for (const Dataset* d : datasets) {
        n += static_cast<Eigen::Index>(d->size());
        if (!d->records.empty()) q = static_cast<Eigen::Index>(d->records.front().covariates.size());
    }
    Eigen::MatrixXd x(n, q + 1);
    Eigen::Index row = 0;
    for (const Dataset* d : datasets) {
        for (const PatientRecord& r : d->records) {
            x(row, 0) = 1.0;
            for (Eigen::Index k = 0; k < q; ++k) x(row, k + 1) = r.covariates[static_cast<std::size_t>(k)];
            ++row;
        }
    }
    return x;
}

namespace {

std::vector<const Dataset*> all_datasets(const StudyCollection& c) {
    std::vector<const Dataset*> out;
    for (const Dataset& d : c.datasets) out.push_back(&d);
    return out;
}

Eigen::VectorXd fitted_probabilities(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = x * beta;
    return eta.unaryExpr([](double t) { return logistic(t); });
}

}  // namespace

PsScores fit_trial_membership_ps(const StudyCollection& c) {
    const Eigen::MatrixXd x = covariate_design(all_datasets(c));
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.rows());
    y.head(static_cast<Eigen::Index>(c.rct().size())).setOnes();
    PsScores out;
    out.model = fit_logistic(x, y);
    out.scores = fitted_probabilities(x, out.model.coefficients);
    return out;
}

Eigen::VectorXd odds_weights(const PsScores& s, const StudyCollection& c, double C) {
    if (!(C >= 0.0)) throw std::invalid_argument("odds_weights: C must be nonnegative");
    Eigen::VectorXd w(s.scores.size());
    Eigen::Index row = 0;
    for (const Dataset& d : c.datasets) {
        for (std::size_t j = 0; j < d.size(); ++j, ++row) {
            const double e = s.scores[row];
            w[row] = d.is_rct() ? 1.0 : C * e / (1.0 - e);
        }
    }
    return w;
}

PairwisePs fit_pairwise_ps(const Dataset& d1, const Dataset& di) {
    const Eigen::MatrixXd x = covariate_design({&d1, &di});
    const Eigen::Index n1 = static_cast<Eigen::Index>(d1.size());
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.rows());
    y.head(n1).setOnes();
    PairwisePs out;
    out.model = fit_logistic(x, y);
    const Eigen::VectorXd e = fitted_probabilities(x, out.model.coefficients);
    out.trial = e.head(n1);
    out.external = e.tail(x.rows() - n1);
    return out;
}

int StrataBoundaries::stratum_of(double score) const {
    for (std::size_t s = 0; s < intervals.size(); ++s) {
        if (score <= intervals[s].second) return static_cast<int>(s);
    }
    return static_cast<int>(intervals.size()) - 1;
}

StrataBoundaries stratify_rct(const Eigen::VectorXd& scores_d1, int S) {
    const auto n = static_cast<std::size_t>(scores_d1.size());
    if (S < 2) throw std::invalid_argument("stratify_rct: S must be at least 2");
    if (n < static_cast<std::size_t>(S)) throw std::invalid_argument("stratify_rct: fewer trial patients than strata");

    std::vector<double> sorted(scores_d1.data(), scores_d1.data() + n);
    std::sort(sorted.begin(), sorted.end());

    StrataBoundaries b;
    b.S = S;
    const auto s_count = static_cast<std::size_t>(S);
    for (std::size_t s = 1; s < s_count; ++s) {
        // Inverse empirical CDF: the ceil(n s / S)-th order statistic.
        const std::size_t k = (n * s + s_count - 1) / s_count;
        b.cuts.push_back(sorted[std::max<std::size_t>(k, 1) - 1]);
    }

    std::vector<double> bounds{0.0};
    bounds.insert(bounds.end(), b.cuts.begin(), b.cuts.end());
    bounds.push_back(1.0);
    std::vector<double> kept_upper;
    for (std::size_t s = 0; s < s_count; ++s) {
        const double lo = bounds[s];
        const double hi = bounds[s + 1];
        const bool occupied = std::any_of(sorted.begin(), sorted.end(),
                                          [&](double v) { return v > lo && v <= hi; });
        if (occupied) kept_upper.push_back(hi);
    }
    double lo = 0.0;
    for (std::size_t t = 0; t < kept_upper.size(); ++t) {
        const double hi = t + 1 == kept_upper.size() ? 1.0 : kept_upper[t];
        b.intervals.emplace_back(lo, hi);
        lo = hi;
    }
    b.collapsed = S - static_cast<int>(b.intervals.size());
    b.degenerate = b.intervals.size() < 2;
    return b;
}

StratifiedSubset select_stratified_subset(const Dataset& di, const Eigen::VectorXd& scores_di,
                                          const StrataBoundaries& b, Rng& rng) {
    if (static_cast<std::size_t>(scores_di.size()) != di.size()) {
        throw std::invalid_argument("select_stratified_subset: scores not aligned with dataset");
    }
    StratifiedSubset out;
    out.subset.study_index = di.study_index;
    std::vector<std::vector<std::size_t>> members(b.intervals.size());
    for (std::size_t j = 0; j < di.size(); ++j) {
        members[static_cast<std::size_t>(b.stratum_of(scores_di[static_cast<Eigen::Index>(j)]))].push_back(j);
    }
    out.stratum_counts.reserve(members.size());
    for (const auto& m : members) out.stratum_counts.push_back(m.size());
    out.per_stratum = members.empty() ? 0 : *std::min_element(out.stratum_counts.begin(), out.stratum_counts.end());
    if (out.per_stratum == 0) return out;

    std::vector<std::size_t> chosen;
    const std::size_t L = out.per_stratum;
    for (auto& m : members) {
        if (m.size() > L) {
            // Partial Fisher-Yates: the first L slots become a uniform sample.
            for (std::size_t t = 0; t < L; ++t) {
                std::uniform_int_distribution<std::size_t> pick(t, m.size() - 1);
                std::swap(m[t], m[pick(rng)]);
            }
        }
        chosen.insert(chosen.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(L));
    }
    std::sort(chosen.begin(), chosen.end());
    out.subset.records.reserve(chosen.size());
    for (std::size_t j : chosen) out.subset.records.push_back(di.records[j]);
    return out;
}

GpsScores fit_generalized_ps(const StudyCollection& c) {
    const int I = static_cast<int>(c.study_count());
    if (I < 2) throw std::invalid_argument("fit_generalized_ps: need at least two studies");
    const Eigen::MatrixXd x = covariate_design(all_datasets(c));
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(x.rows()));
    for (int i = 0; i < I; ++i) {
        labels.insert(labels.end(), c.datasets[static_cast<std::size_t>(i)].size(), i + 1);
    }
    GpsScores out;
    out.model = fit_multinomial(x, labels, I);
    out.probabilities = out.model.predict(x);
    return out;
}

Eigen::MatrixXd gps_log_odds_features(const GpsScores& g) {
    const Eigen::Index I = g.probabilities.cols();
    Eigen::MatrixXd f(g.probabilities.rows(), std::max<Eigen::Index>(I - 1, 0));
    for (Eigen::Index k = 1; k < I; ++k) {
        f.col(k - 1) = g.probabilities.col(k).unaryExpr([](double e) { return std::log(e) - std::log1p(-e); });
    }
    return f;
}

}  // namespace extctl
