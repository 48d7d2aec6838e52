#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace extctl {

struct PatientRecord {
    std::vector<double> covariates;
    int treatment = 0;  // 0 = standard of care, 1 = experimental
    int outcome = 0;    // binary response

    bool operator==(const PatientRecord&) const = default;
};

/// One study. Index 1 is always the randomized trial; every other index is
/// an external control dataset.
struct Dataset {
    int study_index = 1;
    std::vector<PatientRecord> records;

    [[nodiscard]] bool is_rct() const noexcept { return study_index == 1; }
    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }

    bool operator==(const Dataset&) const = default;
};

struct StudyCollection {
    std::vector<Dataset> datasets;  // datasets[0] is the trial
    std::size_t q = 0;
    std::vector<std::string> covariate_names;

    [[nodiscard]] const Dataset& rct() const { return datasets.front(); }
    [[nodiscard]] std::size_t study_count() const noexcept { return datasets.size(); }
    [[nodiscard]] std::size_t total_size() const noexcept;

    bool operator==(const StudyCollection&) const = default;
};

struct Violation {
    int study_index = 0;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Report-style schema check: dimensions, binary fields, external datasets
/// containing treated patients, empty datasets, trial ordering.
ValidationReport validate_collection(const StudyCollection& c);

/// Concatenate the selected studies in index order. Study 1 must be selected.
Dataset pool(const StudyCollection& c, const std::set<int>& selected);

struct ArmSummary {
    std::size_t n = 0;
    std::size_t responders = 0;
    std::optional<double> rate;  // empty when n == 0
};

ArmSummary arm_summary(const Dataset& d, int arm);

// ---------------------------------------------------------------------------
// Analysis output shared by all eight methods.

enum class Method { ZPROP, GLM, TTP, PSW, FE, RE, PSS_RE, PS_RE };

inline constexpr Method kAllMethods[] = {Method::ZPROP, Method::GLM, Method::TTP,
                                         Method::PSW,   Method::FE,  Method::RE,
                                         Method::PSS_RE, Method::PS_RE};

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

struct Diagnostics {
    bool converged = true;
    int iterations = 0;
    std::size_t n_external_used = 0;
    std::vector<int> included_studies;
    std::vector<std::size_t> stratum_matches;  // L_i per external study (PSS-RE)
    std::string message;
};

struct AnalysisResult {
    Method method = Method::ZPROP;
    std::optional<double> tau_hat;  // risk-difference scale; empty on failure
    std::optional<double> gamma_hat;
    double se_stat = 0.0;
    double z_value = 0.0;
    double p_value = 1.0;
    bool reject = false;
    Diagnostics diagnostics;

    [[nodiscard]] bool ok() const noexcept { return diagnostics.converged && tau_hat.has_value(); }
};

}  // namespace extctl
