#include "extctl/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"
#include "extctl/parallel.hpp"

namespace extctl {

namespace {

constexpr Cov3 kBaseProbs{0.4, 0.5, 0.5};

double default_link(double eta) { return logistic(eta); }

bool heterogeneous_covariates(int id) { return id == 5 || id == 7 || id == 9; }

}  // namespace

void ScenarioSpec::validate() const {
    if (id < 1 || id > 12) throw ConfigError("scenario id must be in 1..12");
    if (I < 1) throw ConfigError("scenario needs at least one dataset");
    if (n1 < 2) throw ConfigError("trial size must be at least 2");
    if (ratio_r < 1) throw ConfigError("randomization ratio must be at least 1");
    if (covariate_probs.size() != static_cast<std::size_t>(I) || delta.size() != static_cast<std::size_t>(I)) {
        throw ConfigError("scenario parameter rows must match the dataset count");
    }
    for (const Cov3& p : covariate_probs) {
        for (double v : p) {
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("covariate probabilities must lie in [0, 1]");
        }
    }
    for (double v : sigma_beta) {
        if (!(v >= 0.0)) throw ConfigError("beta standard deviations must be nonnegative");
    }
}

double table12_probability(int x1, int x2, int t) {
    static constexpr double p[2][2][2] = {{{0.45, 0.71}, {0.25, 0.51}}, {{0.60, 0.86}, {0.35, 0.61}}};
    return p[x1 != 0][x2 != 0][t != 0];
}

double treated_rate_target(int id) {
    if (id == 8 || id == 9) return 0.45;
    if (id == 11) return 0.85;
    return 0.66;
}

ScenarioSpec scenario_spec(int id, Effect effect) {
    if (id < 1 || id > 12) throw ConfigError("scenario id must be in 1..12, got " + std::to_string(id));
    ScenarioSpec s;
    s.id = id;
    s.effect = effect;
    if (id == 2) {
        s.n1 = 120;
        s.n_ext = 30;
        s.I = 2;
    } else if (id == 3) {
        s.n1 = 80;
        s.n_ext = 20;
        s.I = 8;
    }
    if (id == 4) s.ratio_r = 1;

    const auto I = static_cast<std::size_t>(s.I);
    if (heterogeneous_covariates(id)) {
        s.covariate_probs = {kBaseProbs, {0.3, 0.8, 0.2}, {0.3, 0.7, 0.9}, {0.1, 0.7, 0.8}};
    } else {
        s.covariate_probs.assign(I, kBaseProbs);
    }
    if (id == 6 || id == 7) {
        s.delta = {-0.4, -0.9, -0.2, -0.6};
    } else if (id == 11) {
        s.delta = {0.7, 0.5, 0.5, -0.5};
    } else {
        s.delta.assign(I, -0.4);
    }
    if (id == 8 || id == 9) {
        s.mu_beta = {0.5, -0.5, -1.8};
        s.unmeasured_active = true;
    }
    if (id == 10) s.sigma_beta = {0.8, 0.8, 0.0};
    if (id == 12) s.outcome_model = OutcomeModel::Table12;

    if (effect == Effect::Positive && s.outcome_model == OutcomeModel::LogisticDgm) {
        s.gamma = calibrate_gamma(s, treated_rate_target(id));
    }
    return s;
}

double marginal_response_rate(const ScenarioSpec& spec, std::size_t i, double gamma, int t) {
    const Cov3& f = spec.covariate_probs.at(i);
    double total = 0.0;
    for (int cell = 0; cell < 8; ++cell) {
        const int x[3] = {cell & 1, (cell >> 1) & 1, (cell >> 2) & 1};
        double weight = 1.0;
        for (int k = 0; k < 3; ++k) weight *= x[k] != 0 ? f[static_cast<std::size_t>(k)] : 1.0 - f[static_cast<std::size_t>(k)];
        double p = 0.0;
        if (spec.outcome_model == OutcomeModel::Table12) {
            p = table12_probability(x[0], x[1], t);
        } else {
            double eta = spec.delta.at(i) + gamma * t;
            for (int k = 0; k < 3; ++k) eta += x[k] * spec.mu_beta[static_cast<std::size_t>(k)];
            p = logistic(eta);
        }
        total += weight * p;
    }
    return total;
}

double calibrate_gamma(const ScenarioSpec& spec, double target) {
    if (spec.outcome_model != OutcomeModel::LogisticDgm) {
        throw ConfigError("calibrate_gamma applies to logistic scenarios only");
    }
    double lo = 0.0;
    double hi = 5.0;
    const double f_lo = marginal_response_rate(spec, 0, lo, 1) - target;
    const double f_hi = marginal_response_rate(spec, 0, hi, 1) - target;
    if (std::abs(f_lo) <= 1e-12) return lo;
    if (f_lo > 0.0 || f_hi < 0.0) throw ConfigError("calibrate_gamma: target rate unreachable for gamma in [0, 5]");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f = marginal_response_rate(spec, 0, mid, 1) - target;
        if (std::abs(f) < 1e-12 || hi - lo < 1e-14) return mid;
        (f < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

GeneratedTrial generate_collection(const ScenarioSpec& spec, Rng& rng, LinkFunction link) {
    if (link == nullptr) link = &default_link;
    GeneratedTrial g;
    g.collection.q = 2;
    g.collection.covariate_names = {"x1", "x2"};
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < spec.I; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const bool trial = i == 0;
        const std::size_t n = trial ? spec.n1 : spec.n_ext;

        Cov3 beta = spec.mu_beta;
        for (std::size_t k = 0; k < 3; ++k) {
            const double z = normal(rng);
            beta[k] += spec.sigma_beta[k] * z;
        }
        g.beta.push_back(beta);

        std::vector<int> treatment(n, 0);
        if (trial) {
            std::fill(treatment.begin(), treatment.begin() + static_cast<std::ptrdiff_t>(spec.treated_count()), 1);
            std::shuffle(treatment.begin(), treatment.end(), rng);
        }

        Dataset d;
        d.study_index = i + 1;
        d.records.reserve(n);
        const Cov3& f = spec.covariate_probs[ui];
        for (std::size_t j = 0; j < n; ++j) {
            int x[3];
            for (std::size_t k = 0; k < 3; ++k) x[k] = bernoulli(rng, f[k]) ? 1 : 0;
            const int t = treatment[j];
            double p = 0.0;
            if (spec.outcome_model == OutcomeModel::Table12) {
                p = table12_probability(x[0], x[1], spec.effect == Effect::Positive ? t : 0);
            } else {
                double eta = spec.delta[ui] + spec.gamma * t;
                for (std::size_t k = 0; k < 3; ++k) eta += x[k] * beta[k];
                p = link(eta);
            }
            const int y = bernoulli(rng, p) ? 1 : 0;
            d.records.push_back(PatientRecord{{static_cast<double>(x[0]), static_cast<double>(x[1])}, t, y});
            if (trial) g.x3_trial.push_back(x[2]);
        }
        g.collection.datasets.push_back(std::move(d));
    }
    return g;
}

double true_tau(const ScenarioSpec& spec, const GeneratedTrial& g) {
    const Dataset& d1 = g.collection.rct();
    if (spec.outcome_model == OutcomeModel::Table12) {
        if (spec.effect == Effect::Null) return 0.0;
        double total = 0.0;
        for (const PatientRecord& r : d1.records) {
            const int x1 = static_cast<int>(r.covariates[0]);
            const int x2 = static_cast<int>(r.covariates[1]);
            total += table12_probability(x1, x2, 1) - table12_probability(x1, x2, 0);
        }
        return total / static_cast<double>(d1.size());
    }
    if (spec.gamma == 0.0) return 0.0;
    const Cov3& beta = g.beta.front();
    double total = 0.0;
    for (std::size_t j = 0; j < d1.size(); ++j) {
        const PatientRecord& r = d1.records[j];
        const double eta = spec.delta[0] + r.covariates[0] * beta[0] + r.covariates[1] * beta[1] + g.x3_trial[j] * beta[2];
        total += logistic(eta + spec.gamma) - logistic(eta);
    }
    return total / static_cast<double>(d1.size());
}

OcTable run_scenario(const ScenarioSpec& spec, const std::vector<Method>& methods, const MethodConfig& cfg,
                     const RunOptions& opts) {
    spec.validate();
    cfg.validate();
    if (opts.reps < 1) throw ConfigError("reps must be at least 1");
    const std::size_t M = methods.size();
    std::vector<std::vector<ReplicateRecord>> records(M, std::vector<ReplicateRecord>(opts.reps));
    const auto id = static_cast<std::uint64_t>(spec.id);
    parallel_for(opts.reps, opts.jobs, [&](std::size_t s) {
        Rng gen = substream(opts.seed, {id, s});
        const GeneratedTrial g = generate_collection(spec, gen);
        const double tau = true_tau(spec, g);
        for (std::size_t m = 0; m < M; ++m) {
            Rng mrng = substream(opts.seed, {id, s, 100 + static_cast<std::uint64_t>(methods[m])});
            records[m][s] = record_of(analyze(methods[m], g.collection, cfg, mrng), tau);
        }
    });
    OcTable table;
    for (std::size_t m = 0; m < M; ++m) {
        table.push_back(aggregate(std::to_string(spec.id), methods[m], spec.effect, records[m]));
    }
    return table;
}

}  // namespace extctl
