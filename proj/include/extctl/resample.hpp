#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "extctl/methods.hpp"
#include "extctl/oc.hpp"

namespace extctl {

enum class StudyRole { Source, External };

struct ManifestEntry {
    std::string label;
    std::string path;
    std::size_t size = 0;
    StudyRole role = StudyRole::External;

    bool operator==(const ManifestEntry&) const = default;
};

/// Studies of a real-data collection. Exactly one entry has the source role:
/// its control arm seeds the in-silico trial, every other study is external.
struct DataCollectionManifest {
    std::vector<ManifestEntry> studies;

    void validate() const;
    [[nodiscard]] const ManifestEntry& source() const;

    bool operator==(const DataCollectionManifest&) const = default;
};

/// Exchange roles so that `new_source` becomes the source study.
DataCollectionManifest swap_source(const DataCollectionManifest& m, const std::string& new_source);

std::vector<std::size_t> default_n1_grid();

struct ResampleConfig {
    std::vector<std::size_t> n1_grid = default_n1_grid();
    int ratio_r = 2;
    double spike_prob = 0.2;  // 0 runs the null configuration only
    std::size_t reps = 2000;
    std::uint64_t seed = 1;
    unsigned jobs = 1;

    void validate(std::size_t source_control_size) const;
};

/// Loaded data of a manifest: the source control arm and the externals in
/// manifest order (study indices 2..I).
struct ResampleInput {
    Dataset source;
    std::vector<Dataset> externals;
    std::vector<std::string> covariate_names;
};

/// n1 records without replacement; the first floor(n1 r / (r + 1)) drawn are
/// labelled treated. Outcomes and covariates are copied unchanged.
Dataset subsample_trial(const Dataset& source, std::size_t n1, int r, Rng& rng);

/// Each treated non-responder becomes a responder with probability p.
Dataset spike_effect(const Dataset& d1, double p, Rng& rng);

/// p (1 - rate0) with rate0 the response rate of the full source.
double true_tau_resample(const Dataset& source, double p);

/// Rows ordered by n1, then effect (null first), then method.
OcTable run_resampling_study(const ResampleInput& input, const ResampleConfig& cfg,
                             const std::vector<Method>& methods, const MethodConfig& mcfg);

}  // namespace extctl
