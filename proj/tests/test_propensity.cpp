#include <doctest.h>

#include <cmath>

#include "extctl/errors.hpp"
#include "extctl/propensity.hpp"
#include "helpers.hpp"

using namespace extctl;

namespace {

Eigen::VectorXd evenly(int n, double lo, double step) {
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v[j] = lo + step * j;
    return v;
}

StudyCollection covariate_free(int n1, int n_ext, int I) {
    StudyCollection c;
    c.datasets.push_back(fixtures::counts(1, n1 / 2, n1 / 4, n1 - n1 / 2, n1 / 5));
    for (int i = 2; i <= I; ++i) c.datasets.push_back(fixtures::counts(i, 0, 0, n_ext, n_ext / 3));
    return c;
}

}  // namespace

TEST_CASE("covariate-free membership scores equal the trial share") {
    const PsScores s = fit_trial_membership_ps(covariate_free(100, 25, 4));
    REQUIRE(s.scores.size() == 175);
    for (Eigen::Index j = 0; j < 175; ++j) CHECK(s.scores[j] == doctest::Approx(100.0 / 175.0).epsilon(1e-10));
}

TEST_CASE("a constant covariate is unidentified") {
    StudyCollection c = fixtures::scenario_draw(1, Effect::Null, 2);
    for (Dataset& d : c.datasets) {
        for (PatientRecord& r : d.records) r.covariates[0] = 1.0;
    }
    CHECK_THROWS_AS(fit_trial_membership_ps(c), SingularError);
}

TEST_CASE("identical covariate laws give flat membership scores") {
    ScenarioSpec spec = scenario_spec(1, Effect::Null);
    spec.n1 = 4000;
    spec.n_ext = 2000;
    Rng rng = substream(8, {});
    const StudyCollection c = generate_collection(spec, rng).collection;
    const PsScores s = fit_trial_membership_ps(c);
    for (int k = 1; k <= 2; ++k) {
        CHECK(std::abs(s.model.coefficients[k]) < 3.0 * std::sqrt(s.model.covariance_model(k, k)));
    }
    CHECK(std::abs(s.scores.mean() - 0.4) < 0.01);
    CHECK((s.scores.array() - 0.4).abs().maxCoeff() < 0.05);
}

TEST_CASE("odds weights") {
    const StudyCollection c = covariate_free(4, 2, 2);
    PsScores s;
    s.scores.resize(6);
    s.scores << 0.9, 0.2, 0.5, 0.7, 0.5, 2.0 / 3.0;
    const Eigen::VectorXd w1 = odds_weights(s, c, 1.0);
    CHECK(w1.head(4) == Eigen::VectorXd::Ones(4));
    CHECK(w1[4] == doctest::Approx(1.0));
    CHECK(w1[5] == doctest::Approx(2.0));
    const Eigen::VectorXd w0 = odds_weights(s, c, 0.0);
    CHECK(w0.head(4) == Eigen::VectorXd::Ones(4));
    CHECK(w0.tail(2) == Eigen::VectorXd::Zero(2));
    CHECK(odds_weights(s, c, 3.0)[5] == doctest::Approx(6.0));
    CHECK_THROWS(odds_weights(s, c, -1.0));
}

TEST_CASE("pairwise scores of a covariate copy are flat") {
    const StudyCollection c = fixtures::scenario_draw(1, Effect::Null, 5);
    Dataset copy = c.rct();
    copy.study_index = 2;
    for (PatientRecord& r : copy.records) r.treatment = 0;
    const PairwisePs ps = fit_pairwise_ps(c.rct(), copy);
    CHECK((ps.trial.array() - 0.5).abs().maxCoeff() < 1e-8);
    CHECK((ps.external.array() - 0.5).abs().maxCoeff() < 1e-8);
}

TEST_CASE("a covariate present only in the trial separates") {
    const Dataset d1 = fixtures::dataset(1, {{1, 0, 1, 1}, {1, 1, 1, 0}, {1, 0, 0, 1}, {1, 1, 0, 0}, {1, 0, 1, 0}});
    const Dataset d2 = fixtures::dataset(2, {{0, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 0, 1}, {0, 1, 0, 0}});
    CHECK_THROWS_AS(fit_pairwise_ps(d1, d2), SeparationError);
}

TEST_CASE("shifted covariate laws raise the trial's scores") {
    double trial = 0.0;
    double ext = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const StudyCollection c = fixtures::scenario_draw(5, Effect::Null, 40, s);
        const PairwisePs ps = fit_pairwise_ps(c.rct(), c.datasets[1]);
        trial += ps.trial.mean();
        ext += ps.external.mean();
    }
    CHECK(trial > ext);
}

TEST_CASE("strata cuts by inverse empirical CDF") {
    const StrataBoundaries b = stratify_rct(evenly(10, 0.1, 0.1), 5);
    REQUIRE(b.cuts.size() == 4);
    CHECK(b.cuts[0] == doctest::Approx(0.2));
    CHECK(b.cuts[1] == doctest::Approx(0.4));
    CHECK(b.cuts[2] == doctest::Approx(0.6));
    CHECK(b.cuts[3] == doctest::Approx(0.8));
    CHECK(b.intervals.size() == 5);
    CHECK_FALSE(b.degenerate);

    Eigen::VectorXd sym(4);
    sym << 0.3, 0.45, 0.55, 0.7;
    const StrataBoundaries m = stratify_rct(sym, 2);
    REQUIRE(m.cuts.size() == 1);
    CHECK(m.cuts[0] == doctest::Approx(0.45));

    const StrataBoundaries tie = stratify_rct(Eigen::VectorXd::Constant(20, 0.4), 5);
    CHECK(tie.degenerate);
    CHECK(tie.collapsed == 4);
    CHECK_THROWS(stratify_rct(evenly(3, 0.1, 0.1), 5));
}

TEST_CASE("strata of distinct scores are balanced") {
    Rng rng = substream(4, {});
    for (int n : {37, 50, 101}) {
        Eigen::VectorXd s(n);
        for (int j = 0; j < n; ++j) s[j] = 0.05 + 0.9 * uniform01(rng);
        const StrataBoundaries b = stratify_rct(s, 5);
        for (std::size_t k = 1; k < b.cuts.size(); ++k) CHECK(b.cuts[k] >= b.cuts[k - 1]);
        std::vector<int> count(5, 0);
        for (int j = 0; j < n; ++j) ++count[static_cast<std::size_t>(b.stratum_of(s[j]))];
        for (int k : count) {
            CHECK(k >= n / 5);
            CHECK(k <= (n + 4) / 5);
        }
    }
}

TEST_CASE("stratified subset sizes") {
    const StrataBoundaries b = stratify_rct(evenly(10, 0.1, 0.1), 5);
    // Stratum counts (3, 5, 2, 4, 6).
    std::vector<double> scores;
    for (auto [score, k] : {std::pair{0.15, 3}, {0.35, 5}, {0.55, 2}, {0.75, 4}, {0.95, 6}}) {
        scores.insert(scores.end(), static_cast<std::size_t>(k), score);
    }
    Dataset di;
    di.study_index = 2;
    for (double v : scores) di.records.push_back({{v}, 0, 0});
    const Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
    Rng rng = substream(1, {});
    const StratifiedSubset sub = select_stratified_subset(di, sv, b, rng);
    CHECK(sub.stratum_counts == std::vector<std::size_t>{3, 5, 2, 4, 6});
    CHECK(sub.per_stratum == 2);
    CHECK(sub.subset.size() == 10);

    std::vector<int> per(5, 0);
    for (const PatientRecord& r : sub.subset.records) ++per[static_cast<std::size_t>(b.stratum_of(r.covariates[0]))];
    CHECK(per == std::vector<int>(5, 2));

    Rng again = substream(1, {});
    CHECK(select_stratified_subset(di, sv, b, again).subset == sub.subset);
}

TEST_CASE("an empty stratum yields no subset") {
    const StrataBoundaries b = stratify_rct(evenly(10, 0.1, 0.1), 5);
    Eigen::VectorXd sv(6);
    sv << 0.1, 0.3, 0.5, 0.7, 0.3, 0.5;  // nothing above 0.8
    Rng rng = substream(1, {});
    const StratifiedSubset sub = select_stratified_subset(fixtures::counts(2, 0, 0, 6, 2), sv, b, rng);
    CHECK(sub.per_stratum == 0);
    CHECK(sub.subset.size() == 0);
}

TEST_CASE("a saturated dataset is returned whole") {
    const StrataBoundaries b = stratify_rct(evenly(10, 0.1, 0.1), 5);
    Eigen::VectorXd sv(10);
    sv << 0.1, 0.9, 0.3, 0.7, 0.5, 0.15, 0.35, 0.55, 0.75, 0.95;
    Dataset di = fixtures::counts(2, 0, 0, 10, 4);
    Rng rng = substream(2, {});
    const StratifiedSubset sub = select_stratified_subset(di, sv, b, rng);
    CHECK(sub.per_stratum == 2);
    CHECK(sub.subset == di);
}

TEST_CASE("generalized propensity scores") {
    SUBCASE("two studies reduce to the membership model") {
        StudyCollection c = fixtures::scenario_draw(5, Effect::Null, 9);
        c.datasets.resize(2);
        const GpsScores g = fit_generalized_ps(c);
        const PsScores s = fit_trial_membership_ps(c);
        CHECK((g.probabilities.col(0) - s.scores).lpNorm<Eigen::Infinity>() < 1e-8);
        const Eigen::MatrixXd f = gps_log_odds_features(g);
        REQUIRE(f.cols() == 1);
        const Eigen::VectorXd expected = (1.0 - s.scores.array()).log() - s.scores.array().log();
        CHECK((f.col(0) - expected).lpNorm<Eigen::Infinity>() < 1e-7);
    }
    SUBCASE("rows sum to one") {
        const StudyCollection c = fixtures::scenario_draw(9, Effect::Null, 3);
        const GpsScores g = fit_generalized_ps(c);
        CHECK(g.probabilities.cols() == 4);
        CHECK((g.probabilities.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK(g.probabilities.minCoeff() > 0.0);
    }
    SUBCASE("identical laws give the study shares") {
        ScenarioSpec spec = scenario_spec(1, Effect::Null);
        spec.n1 = 4000;
        spec.n_ext = 1000;
        Rng rng = substream(10, {});
        const GpsScores g = fit_generalized_ps(generate_collection(spec, rng).collection);
        const Eigen::RowVectorXd mean = g.probabilities.colwise().mean();
        CHECK(mean[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-6));
        CHECK((g.probabilities.col(0).array() - 4.0 / 7.0).abs().maxCoeff() < 0.05);
    }
}

TEST_CASE("log-odds features") {
    GpsScores g;
    g.probabilities.resize(2, 3);
    g.probabilities << 0.25, 0.5, 0.25, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0;
    const Eigen::MatrixXd f = gps_log_odds_features(g);
    REQUIRE(f.cols() == 2);
    CHECK(std::abs(f(0, 0)) < 1e-15);
    CHECK(f(1, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(f(1, 0) > f(0, 0));
    CHECK(f(0, 1) < f(0, 0));
}
