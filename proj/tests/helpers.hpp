#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "extctl/model.hpp"
#include "extctl/rng.hpp"
#include "extctl/scenario.hpp"

namespace fixtures {

using extctl::Dataset;
using extctl::PatientRecord;
using extctl::StudyCollection;

/// Row = {covariates..., treatment, outcome}.
inline Dataset dataset(int index, std::initializer_list<std::vector<double>> rows) {
    Dataset d;
    d.study_index = index;
    for (const auto& r : rows) {
        PatientRecord p;
        p.covariates.assign(r.begin(), r.end() - 2);
        p.treatment = static_cast<int>(r[r.size() - 2]);
        p.outcome = static_cast<int>(r.back());
        d.records.push_back(p);
    }
    return d;
}

/// Covariate-free dataset with the given arm counts.
inline Dataset counts(int index, int n_treated, int treated_responders, int n_control, int control_responders) {
    Dataset d;
    d.study_index = index;
    for (int j = 0; j < n_treated; ++j) d.records.push_back({{}, 1, j < treated_responders ? 1 : 0});
    for (int j = 0; j < n_control; ++j) d.records.push_back({{}, 0, j < control_responders ? 1 : 0});
    return d;
}

inline StudyCollection collection(std::vector<Dataset> ds) {
    StudyCollection c;
    c.q = ds.front().records.front().covariates.size();
    for (std::size_t k = 0; k < c.q; ++k) c.covariate_names.push_back("x" + std::to_string(k + 1));
    c.datasets = std::move(ds);
    return c;
}

/// One replicate of a simulation scenario.
inline StudyCollection scenario_draw(int id, extctl::Effect e, std::uint64_t seed, std::uint64_t rep = 0) {
    extctl::Rng rng = extctl::substream(seed, {static_cast<std::uint64_t>(id), rep});
    return extctl::generate_collection(extctl::scenario_spec(id, e), rng).collection;
}

}  // namespace fixtures
