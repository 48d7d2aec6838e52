#include "extctl/model.hpp"

#include <array>
#include <numeric>
#include <string>

#include "extctl/errors.hpp"

namespace extctl {

std::size_t StudyCollection::total_size() const noexcept {
    return std::accumulate(datasets.begin(), datasets.end(), std::size_t{0},
                           [](std::size_t acc, const Dataset& d) { return acc + d.size(); });
}

ValidationReport validate_collection(const StudyCollection& c) {
    ValidationReport report;
    if (c.datasets.empty()) {
        report.push_back({0, "collection contains no datasets"});
        return report;
    }
    if (!c.datasets.front().is_rct()) {
        report.push_back({c.datasets.front().study_index, "first dataset is not the trial (index 1)"});
    }
    if (!c.covariate_names.empty() && c.covariate_names.size() != c.q) {
        report.push_back({0, "covariate names do not match covariate dimension"});
    }
    for (std::size_t i = 0; i < c.datasets.size(); ++i) {
        const Dataset& d = c.datasets[i];
        if (i > 0 && d.is_rct()) {
            report.push_back({d.study_index, "trial dataset appears after position 1"});
        }
        if (d.records.empty()) {
            report.push_back({d.study_index, "empty dataset"});
            continue;
        }
        bool dim_reported = false;
        bool outcome_reported = false;
        bool treatment_reported = false;
        bool treated_reported = false;
        for (const PatientRecord& r : d.records) {
            if (r.covariates.size() != c.q && !dim_reported) {
                report.push_back({d.study_index, "covariate dimension mismatch"});
                dim_reported = true;
            }
            if (r.outcome != 0 && r.outcome != 1 && !outcome_reported) {
                report.push_back({d.study_index, "non-binary outcome"});
                outcome_reported = true;
            }
            if (r.treatment != 0 && r.treatment != 1 && !treatment_reported) {
                report.push_back({d.study_index, "non-binary treatment"});
                treatment_reported = true;
            }
            if (!d.is_rct() && r.treatment == 1 && !treated_reported) {
                report.push_back({d.study_index, "external dataset contains treated patient"});
                treated_reported = true;
            }
        }
    }
    return report;
}

Dataset pool(const StudyCollection& c, const std::set<int>& selected) {
    if (!selected.contains(1)) {
        throw std::invalid_argument("pool: the trial (study 1) must always be selected");
    }
    Dataset out;
    out.study_index = 1;
    for (const Dataset& d : c.datasets) {
        if (selected.contains(d.study_index)) {
            out.records.insert(out.records.end(), d.records.begin(), d.records.end());
        }
    }
    for (int idx : selected) {
        bool found = false;
        for (const Dataset& d : c.datasets) found = found || d.study_index == idx;
        if (!found) throw std::invalid_argument("pool: unknown study index " + std::to_string(idx));
    }
    return out;
}

ArmSummary arm_summary(const Dataset& d, int arm) {
    ArmSummary s;
    for (const PatientRecord& r : d.records) {
        if (r.treatment != arm) continue;
        ++s.n;
        s.responders += static_cast<std::size_t>(r.outcome == 1);
    }
    if (s.n > 0) s.rate = static_cast<double>(s.responders) / static_cast<double>(s.n);
    return s;
}

namespace {
constexpr std::array<std::string_view, 8> kMethodNames = {"ZPROP", "GLM", "TTP",    "PSW",
                                                          "FE",    "RE",  "PSS-RE", "PS-RE"};
}

std::string_view method_name(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

std::optional<Method> parse_method(std::string_view name) {
    for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
        if (kMethodNames[i] == name) return static_cast<Method>(i);
    }
    // Accept the underscore spelling too.
    if (name == "PSS_RE") return Method::PSS_RE;
    if (name == "PS_RE") return Method::PS_RE;
    return std::nullopt;
}

}  // namespace extctl
