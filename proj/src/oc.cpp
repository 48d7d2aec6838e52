#include "extctl/oc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace extctl {

const char* effect_name(Effect e) { return e == Effect::Null ? "null" : "positive"; }

ReplicateRecord record_of(const AnalysisResult& r, double tau_true) {
    ReplicateRecord rec;
    rec.tau_true = tau_true;
    if (!r.ok()) {
        rec.failed = true;
        return rec;
    }
    rec.reject = r.reject;
    rec.tau_hat = *r.tau_hat;
    return rec;
}

OcRow aggregate(const std::string& key, Method method, Effect effect, const std::vector<ReplicateRecord>& records) {
    if (records.empty()) throw std::invalid_argument("aggregate: no replicates");
    OcRow row;
    row.key = key;
    row.method = method;
    row.effect = effect;
    row.reps = records.size();
    std::size_t rejections = 0;
    std::size_t failures = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (const ReplicateRecord& r : records) {
        if (r.failed) {
            ++failures;
            continue;
        }
        if (r.reject) ++rejections;
        const double e = r.tau_true - r.tau_hat;
        sum += e;
        sum_sq += e * e;
    }
    const double n = static_cast<double>(records.size());
    row.rejection_rate = static_cast<double>(rejections) / n;
    row.mc_se = std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / n);
    row.failure_rate = static_cast<double>(failures) / n;
    const std::size_t ok = records.size() - failures;
    if (ok == 0) {
        row.bias = std::numeric_limits<double>::quiet_NaN();
        row.rmse = std::numeric_limits<double>::quiet_NaN();
    } else {
        row.bias = sum / static_cast<double>(ok);
        row.rmse = std::sqrt(sum_sq / static_cast<double>(ok));
        // Guard the rmse >= |bias| identity against rounding.
        row.rmse = std::max(row.rmse, std::abs(row.bias));
    }
    return row;
}

}  // namespace extctl
