#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "extctl/methods.hpp"
#include "extctl/oc.hpp"

namespace extctl {

enum class OutcomeModel { LogisticDgm, Table12 };

using Cov3 = std::array<double, 3>;

/// Data-generating parameters of one simulation scenario.
struct ScenarioSpec {
    int id = 1;
    Effect effect = Effect::Null;
    std::size_t n1 = 100;
    std::size_t n_ext = 25;
    int I = 4;
    int ratio_r = 2;
    std::vector<Cov3> covariate_probs;  // row i: P(X^(k) = 1) in dataset i
    std::vector<double> delta;          // study intercepts
    Cov3 mu_beta{0.5, -0.5, 0.0};
    Cov3 sigma_beta{0.0, 0.0, 0.0};  // per-component standard deviation of beta_i
    bool unmeasured_active = false;
    double gamma = 0.0;
    OutcomeModel outcome_model = OutcomeModel::LogisticDgm;

    void validate() const;
    [[nodiscard]] std::size_t treated_count() const { return n1 * static_cast<std::size_t>(ratio_r) / static_cast<std::size_t>(ratio_r + 1); }
};

/// Response probabilities of the misspecified scenario, indexed [x1][x2][t].
double table12_probability(int x1, int x2, int t);

/// Marginal treated response rate of the trial that the calibration targets.
double treated_rate_target(int id);

ScenarioSpec scenario_spec(int id, Effect effect);

/// E_X[F(delta_i + X' mu_beta + gamma t)] for dataset `i` (0-based), summed
/// exactly over the 8 covariate cells.
double marginal_response_rate(const ScenarioSpec& spec, std::size_t i, double gamma, int t);

/// Bisection on gamma in [0, 5] so that the trial's marginal treated rate
/// equals `target`.
double calibrate_gamma(const ScenarioSpec& spec, double target);

using LinkFunction = double (*)(double);

/// A generated collection together with the latent quantities needed for the
/// true effect.
struct GeneratedTrial {
    StudyCollection collection;  // observed covariates x1, x2 only
    std::vector<double> x3_trial;
    std::vector<Cov3> beta;  // realized beta_i per dataset
};

/// `link` is the inverse link applied to the linear predictor; the
/// misspecified scenario never calls it.
GeneratedTrial generate_collection(const ScenarioSpec& spec, Rng& rng, LinkFunction link = nullptr);

/// Average conditional risk difference over the trial's realized covariates.
double true_tau(const ScenarioSpec& spec, const GeneratedTrial& g);

struct RunOptions {
    std::size_t reps = 2000;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
};

/// Monte Carlo operating characteristics, one row per method in the given
/// order. Generation uses substream(seed, {id, s}) so null and positive runs
/// share covariates and assignments; method m uses substream(seed, {id, s, 100 + m}).
OcTable run_scenario(const ScenarioSpec& spec, const std::vector<Method>& methods, const MethodConfig& cfg,
                     const RunOptions& opts);

}  // namespace extctl
