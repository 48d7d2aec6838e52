#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "extctl/model.hpp"

namespace extctl {

enum class Effect { Null, Positive };

const char* effect_name(Effect e);

/// Outcome of one method on one replicate.
struct ReplicateRecord {
    bool failed = false;
    bool reject = false;
    double tau_hat = 0.0;
    double tau_true = 0.0;
};

/// Operating characteristics of one method in one configuration. Under the
/// null the rejection rate is the type I error, otherwise the power.
/// bias = mean(tau - tau_hat) and rmse over non-failed replicates (NaN when
/// every replicate failed).
struct OcRow {
    std::string key;  // scenario id or n1
    Method method = Method::ZPROP;
    Effect effect = Effect::Null;
    double rejection_rate = 0.0;
    double bias = 0.0;
    double rmse = 0.0;
    std::size_t reps = 0;
    double mc_se = 0.0;
    double failure_rate = 0.0;
};

using OcTable = std::vector<OcRow>;

OcRow aggregate(const std::string& key, Method method, Effect effect, const std::vector<ReplicateRecord>& records);

ReplicateRecord record_of(const AnalysisResult& r, double tau_true);

}  // namespace extctl
