#include <doctest.h>

#include <cmath>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"
#include "extctl/io.hpp"
#include "extctl/resample.hpp"
#include "helpers.hpp"

using namespace extctl;

namespace {

Dataset source_fixture(std::size_t n, std::size_t responders) {
    Dataset d;
    for (std::size_t j = 0; j < n; ++j) {
        d.records.push_back({{static_cast<double>(j), static_cast<double>(j % 2)}, 0, j < responders ? 1 : 0});
    }
    return d;
}

DataCollectionManifest four_entry_manifest() {
    DataCollectionManifest m;
    m.studies = {{"a", "a.csv", 458, StudyRole::Source},
                 {"b", "b.csv", 16, StudyRole::External},
                 {"c", "c.csv", 29, StudyRole::External},
                 {"d", "d.csv", 663, StudyRole::External}};
    return m;
}

ResampleInput small_input() {
    ResampleInput in;
    in.covariate_names = {"x1", "x2"};
    Rng rng = substream(3, {});
    auto make = [&](int index, std::size_t n) {
        Dataset d;
        d.study_index = index;
        for (std::size_t j = 0; j < n; ++j) {
            const double x1 = bernoulli(rng, 0.4), x2 = bernoulli(rng, 0.5);
            d.records.push_back({{x1, x2}, 0, bernoulli(rng, logistic(-0.4 + 0.5 * x1 - 0.5 * x2)) ? 1 : 0});
        }
        return d;
    };
    in.source = make(1, 200);
    in.externals = {make(2, 30), make(3, 60)};
    return in;
}

}  // namespace

TEST_CASE("subsampled trial arms") {
    const Dataset src = source_fixture(300, 120);
    Rng rng = substream(1, {});
    const Dataset d = subsample_trial(src, 120, 2, rng);
    CHECK(d.size() == 120);
    CHECK(arm_summary(d, 1).n == 80);
    CHECK(arm_summary(d, 0).n == 40);
    // Without replacement: every drawn id is distinct.
    std::vector<int> seen(300, 0);
    for (const PatientRecord& r : d.records) ++seen[static_cast<std::size_t>(r.covariates[0])];
    CHECK(*std::max_element(seen.begin(), seen.end()) == 1);

    for (std::size_t n1 : {75u, 101u, 175u}) {
        for (int r : {1, 2, 3}) {
            Rng g = substream(2, {n1, static_cast<std::uint64_t>(r)});
            const Dataset s = subsample_trial(src, n1, r, g);
            const std::size_t treated = n1 * static_cast<std::size_t>(r) / static_cast<std::size_t>(r + 1);
            CHECK(arm_summary(s, 1).n == treated);
            CHECK(arm_summary(s, 0).n == n1 - treated);
        }
    }
    CHECK_THROWS(subsample_trial(src, 301, 2, rng));
}

TEST_CASE("exhaustive subsample is a relabelled permutation") {
    const Dataset src = source_fixture(30, 9);
    Rng rng = substream(4, {});
    const Dataset d = subsample_trial(src, 30, 2, rng);
    std::vector<int> seen(30, 0);
    std::size_t responders = 0;
    for (const PatientRecord& r : d.records) {
        ++seen[static_cast<std::size_t>(r.covariates[0])];
        responders += static_cast<std::size_t>(r.outcome);
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int k) { return k == 1; }));
    CHECK(responders == 9);
}

TEST_CASE("subsampling is seeded") {
    const Dataset src = source_fixture(300, 120);
    Rng a = substream(9, {});
    Rng b = substream(9, {});
    CHECK(subsample_trial(src, 100, 2, a) == subsample_trial(src, 100, 2, b));
}

TEST_CASE("spike-in") {
    const Dataset src = source_fixture(400, 100);
    Rng rng = substream(5, {});
    const Dataset d1 = subsample_trial(src, 300, 2, rng);
    Rng r0 = substream(6, {});
    CHECK(spike_effect(d1, 0.0, r0) == d1);
    Rng r1 = substream(6, {});
    const Dataset all = spike_effect(d1, 1.0, r1);
    CHECK(arm_summary(all, 1).responders == arm_summary(all, 1).n);

    std::size_t converted = 0;
    std::size_t eligible = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        Rng rs = substream(7, {s});
        const Dataset sp = spike_effect(d1, 0.2, rs);
        REQUIRE(sp.size() == d1.size());
        for (std::size_t j = 0; j < d1.size(); ++j) {
            const PatientRecord& before = d1.records[j];
            const PatientRecord& after = sp.records[j];
            CHECK(after.covariates == before.covariates);
            CHECK(after.treatment == before.treatment);
            if (before.treatment == 0 || before.outcome == 1) {
                CHECK(after.outcome == before.outcome);
            } else {
                ++eligible;
                converted += static_cast<std::size_t>(after.outcome);
            }
        }
    }
    const double rate = static_cast<double>(converted) / static_cast<double>(eligible);
    CHECK(std::abs(rate - 0.2) < 4 * std::sqrt(0.16 / static_cast<double>(eligible)));
}

TEST_CASE("true effect of the spike design") {
    CHECK(true_tau_resample(source_fixture(100, 40), 0.0) == 0.0);
    CHECK(true_tau_resample(source_fixture(100, 50), 0.2) == doctest::Approx(0.10));
    CHECK(true_tau_resample(source_fixture(100, 35), 1.0) == doctest::Approx(0.65));
}

TEST_CASE("manifest source swap") {
    const DataCollectionManifest m = four_entry_manifest();
    const DataCollectionManifest s = swap_source(m, "d");
    CHECK(s.source().label == "d");
    CHECK(s.studies[0].role == StudyRole::External);
    for (std::size_t k = 0; k < m.studies.size(); ++k) CHECK(s.studies[k].size == m.studies[k].size);
    CHECK(swap_source(s, "a") == m);
    CHECK(swap_source(m, "a") == m);
    CHECK_THROWS_AS(swap_source(m, "zzz"), ConfigError);
    DataCollectionManifest bad = m;
    bad.studies[1].role = StudyRole::Source;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("resampling configuration") {
    const std::vector<std::size_t> g = default_n1_grid();
    REQUIRE(g.size() == 21);
    CHECK(g.front() == 75);
    CHECK(g.back() == 175);
    ResampleConfig cfg;
    CHECK_NOTHROW(cfg.validate(458));
    CHECK_THROWS_AS(cfg.validate(150), ConfigError);
    cfg.spike_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(458), ConfigError);
}

TEST_CASE("resampling study layout and determinism") {
    const ResampleInput in = small_input();
    ResampleConfig cfg;
    cfg.n1_grid = {60, 90};
    cfg.reps = 40;
    cfg.seed = 3;
    const std::vector<Method> methods{Method::ZPROP, Method::RE, Method::PSS_RE};
    const OcTable a = run_resampling_study(in, cfg, methods, MethodConfig{});
    REQUIRE(a.size() == 2 * 2 * 3);
    CHECK(a[0].key == "60");
    CHECK(a[0].effect == Effect::Null);
    CHECK(a[3].effect == Effect::Positive);
    CHECK(a[6].key == "90");
    cfg.jobs = 3;
    const OcTable b = run_resampling_study(in, cfg, methods, MethodConfig{});
    CHECK(format_oc_csv(a) == format_oc_csv(b));

    cfg.spike_prob = 0.0;
    const OcTable null_only = run_resampling_study(in, cfg, methods, MethodConfig{});
    CHECK(null_only.size() == 2 * 3);
    for (const OcRow& r : null_only) CHECK(r.effect == Effect::Null);
}

TEST_CASE("null resampled arms are exchangeable") {
    const ResampleInput in = small_input();
    double sum = 0.0;
    double sum_sq = 0.0;
    const int reps = 2000;
    const MethodConfig mcfg;
    for (int s = 0; s < reps; ++s) {
        Rng rng = substream(12, {static_cast<std::uint64_t>(s)});
        StudyCollection c;
        c.q = 2;
        c.datasets = {subsample_trial(in.source, 90, 2, rng)};
        const double t = *zprop(c, mcfg, rng).tau_hat;
        sum += t;
        sum_sq += t * t;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sum_sq / reps - mean * mean) / reps);
    CHECK(std::abs(mean) < 3 * se);
}
