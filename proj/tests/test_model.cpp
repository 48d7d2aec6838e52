#include <doctest.h>

#include <algorithm>
#include <random>

#include "extctl/methods.hpp"
#include "helpers.hpp"

using namespace extctl;
using fixtures::collection;
using fixtures::dataset;

namespace {

StudyCollection four_studies(std::size_t n1, std::size_t n_ext) {
    StudyCollection c;
    c.q = 1;
    c.covariate_names = {"x1"};
    for (int i = 1; i <= 4; ++i) {
        Dataset d;
        d.study_index = i;
        const std::size_t n = i == 1 ? n1 : n_ext;
        for (std::size_t j = 0; j < n; ++j) {
            d.records.push_back({{static_cast<double>(j % 2)}, i == 1 ? static_cast<int>(j % 3 != 0) : 0,
                                 static_cast<int>((j * 7 + static_cast<std::size_t>(i)) % 5 < 2)});
        }
        c.datasets.push_back(d);
    }
    return c;
}

}  // namespace

TEST_CASE("validate_collection accepts a well formed collection") {
    CHECK(validate_collection(four_studies(100, 25)).empty());
}

TEST_CASE("validate_collection flags a treated external patient") {
    StudyCollection c = four_studies(100, 25);
    c.datasets[2].records[4].treatment = 1;
    const ValidationReport r = validate_collection(c);
    REQUIRE(r.size() == 1);
    CHECK(r[0].study_index == 3);
    CHECK(r[0].message == "external dataset contains treated patient");
}

TEST_CASE("validate_collection flags a covariate dimension mismatch") {
    StudyCollection c = collection({dataset(1, {{0, 1, 1, 1, 0}, {1, 0, 0, 0, 1}}),
                                    dataset(2, {{0, 1, 0, 1}, {1, 1, 0, 0}})});
    const ValidationReport r = validate_collection(c);
    REQUIRE(r.size() == 1);
    CHECK(r[0].message == "covariate dimension mismatch");
}

TEST_CASE("validate_collection flags empty and non-binary data") {
    StudyCollection c = four_studies(10, 5);
    c.datasets[1].records.clear();
    c.datasets[3].records[0].outcome = 2;
    const ValidationReport r = validate_collection(c);
    REQUIRE(r.size() == 2);
    CHECK(r[0].message == "empty dataset");
    CHECK(r[1].message == "non-binary outcome");
}

TEST_CASE("pool concatenates in study order") {
    const StudyCollection c = four_studies(100, 25);
    CHECK(pool(c, {1}) .records == c.datasets[0].records);
    CHECK(pool(c, {1, 2}).size() == 125);
    const Dataset all = pool(c, {1, 2, 3, 4});
    REQUIRE(all.size() == 175);
    CHECK(std::equal(c.datasets[0].records.begin(), c.datasets[0].records.end(), all.records.begin()));
    CHECK(std::equal(c.datasets[3].records.begin(), c.datasets[3].records.end(), all.records.begin() + 150));
    CHECK_THROWS_AS(pool(c, {2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(pool(c, {1, 9}), std::invalid_argument);
}

TEST_CASE("pool is stable under incremental selection") {
    const StudyCollection c = four_studies(30, 12);
    Dataset step = pool(c, {1, 2});
    step.records.insert(step.records.end(), c.datasets[2].records.begin(), c.datasets[2].records.end());
    CHECK(step.records == pool(c, {1, 2, 3}).records);
}

TEST_CASE("arm_summary counts") {
    Dataset d;
    for (int j = 0; j < 10; ++j) d.records.push_back({{}, 0, j < 4 ? 1 : 0});
    const ArmSummary a = arm_summary(d, 0);
    CHECK(a.n == 10);
    CHECK(a.responders == 4);
    REQUIRE(a.rate.has_value());
    CHECK(*a.rate == doctest::Approx(0.4));
    const ArmSummary t = arm_summary(d, 1);
    CHECK(t.n == 0);
    CHECK(t.responders == 0);
    CHECK_FALSE(t.rate.has_value());
}

TEST_CASE("arm sizes add up to the dataset size") {
    const StudyCollection c = fixtures::scenario_draw(5, Effect::Null, 3);
    for (const Dataset& d : c.datasets) CHECK(arm_summary(d, 0).n + arm_summary(d, 1).n == d.size());
}

TEST_CASE("pooled external control rate of the first scenario is near 0.39") {
    double responders = 0;
    double n = 0;
    for (std::uint64_t s = 0; s < 400; ++s) {
        const StudyCollection c = fixtures::scenario_draw(1, Effect::Null, 11, s);
        const ArmSummary a = arm_summary(pool(c, {1, 2, 3, 4}), 0);
        responders += static_cast<double>(a.responders);
        n += static_cast<double>(a.n);
    }
    const double rate = responders / n;
    const double se = std::sqrt(0.39 * 0.61 / n);
    CHECK(std::abs(rate - 0.392367) < 4.0 * se);
}

TEST_CASE("method names round trip") {
    for (Method m : kAllMethods) {
        const auto parsed = parse_method(method_name(m));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == m);
    }
    CHECK(parse_method("PSS_RE") == Method::PSS_RE);
    CHECK_FALSE(parse_method("BAYES").has_value());
}

TEST_CASE("permuting records leaves deterministic estimators unchanged") {
    const StudyCollection c = fixtures::scenario_draw(6, Effect::Positive, 5);
    StudyCollection shuffled = c;
    std::mt19937_64 g(99);
    for (Dataset& d : shuffled.datasets) std::shuffle(d.records.begin(), d.records.end(), g);
    const MethodConfig cfg;
    for (Method m : {Method::ZPROP, Method::GLM, Method::TTP, Method::PSW, Method::FE, Method::RE, Method::PS_RE}) {
        CAPTURE(method_name(m));
        Rng r1(1), r2(1);
        const AnalysisResult a = analyze(m, c, cfg, r1);
        const AnalysisResult b = analyze(m, shuffled, cfg, r2);
        REQUIRE(a.ok());
        REQUIRE(b.ok());
        CHECK(*b.tau_hat == doctest::Approx(*a.tau_hat).epsilon(1e-6));
        CHECK(b.z_value == doctest::Approx(a.z_value).epsilon(1e-5));
    }
}
