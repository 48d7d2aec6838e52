#include "extctl/resample.hpp"

#include <algorithm>
#include <set>

#include "extctl/errors.hpp"
#include "extctl/parallel.hpp"

namespace extctl {

void DataCollectionManifest::validate() const {
    std::size_t sources = 0;
    std::set<std::string> labels;
    for (const ManifestEntry& e : studies) {
        if (e.label.empty()) throw ConfigError("manifest: empty study label");
        if (!labels.insert(e.label).second) throw ConfigError("manifest: duplicate study label " + e.label);
        if (e.role == StudyRole::Source) ++sources;
    }
    if (sources != 1) throw ConfigError("manifest: exactly one study must have the source role");
}

const ManifestEntry& DataCollectionManifest::source() const {
    for (const ManifestEntry& e : studies) {
        if (e.role == StudyRole::Source) return e;
    }
    throw ConfigError("manifest: no source study");
}

DataCollectionManifest swap_source(const DataCollectionManifest& m, const std::string& new_source) {
    DataCollectionManifest out = m;
    const auto it = std::find_if(out.studies.begin(), out.studies.end(),
                                 [&](const ManifestEntry& e) { return e.label == new_source; });
    if (it == out.studies.end()) throw ConfigError("manifest: unknown study label " + new_source);
    for (ManifestEntry& e : out.studies) e.role = StudyRole::External;
    it->role = StudyRole::Source;
    return out;
}

std::vector<std::size_t> default_n1_grid() {
    std::vector<std::size_t> g;
    for (std::size_t n = 75; n <= 175; n += 5) g.push_back(n);
    return g;
}

void ResampleConfig::validate(std::size_t source_control_size) const {
    if (n1_grid.empty()) throw ConfigError("n1 grid is empty");
    if (!std::is_sorted(n1_grid.begin(), n1_grid.end())) throw ConfigError("n1 grid must be ascending");
    if (n1_grid.front() < 2) throw ConfigError("n1 values must be at least 2");
    if (n1_grid.back() > source_control_size) {
        throw ConfigError("largest n1 (" + std::to_string(n1_grid.back()) + ") exceeds the source control arm (" +
                          std::to_string(source_control_size) + ")");
    }
    if (ratio_r < 1) throw ConfigError("randomization ratio must be at least 1");
    if (!(spike_prob >= 0.0 && spike_prob <= 1.0)) throw ConfigError("spike probability must lie in [0, 1]");
    if (reps < 1) throw ConfigError("reps must be at least 1");
}

Dataset subsample_trial(const Dataset& source, std::size_t n1, int r, Rng& rng) {
    if (n1 > source.size()) throw std::invalid_argument("subsample_trial: n1 exceeds the source size");
    if (r < 1) throw std::invalid_argument("subsample_trial: ratio must be at least 1");
    std::vector<std::size_t> idx(source.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    for (std::size_t t = 0; t < n1; ++t) {
        std::uniform_int_distribution<std::size_t> pick(t, idx.size() - 1);
        std::swap(idx[t], idx[pick(rng)]);
    }
    const std::size_t treated = n1 * static_cast<std::size_t>(r) / static_cast<std::size_t>(r + 1);
    Dataset d;
    d.study_index = 1;
    d.records.reserve(n1);
    for (std::size_t t = 0; t < n1; ++t) {
        PatientRecord rec = source.records[idx[t]];
        rec.treatment = t < treated ? 1 : 0;
        d.records.push_back(std::move(rec));
    }
    return d;
}

Dataset spike_effect(const Dataset& d1, double p, Rng& rng) {
    Dataset out = d1;
    for (PatientRecord& r : out.records) {
        if (r.treatment == 1 && r.outcome == 0) r.outcome = bernoulli(rng, p) ? 1 : 0;
    }
    return out;
}

double true_tau_resample(const Dataset& source, double p) {
    if (source.size() == 0) return 0.0;
    std::size_t responders = 0;
    for (const PatientRecord& r : source.records) responders += r.outcome == 1 ? 1 : 0;
    const double rate0 = static_cast<double>(responders) / static_cast<double>(source.size());
    return p * (1.0 - rate0);
}

OcTable run_resampling_study(const ResampleInput& input, const ResampleConfig& cfg,
                             const std::vector<Method>& methods, const MethodConfig& mcfg) {
    cfg.validate(input.source.size());
    mcfg.validate();
    std::vector<Effect> effects{Effect::Null};
    if (cfg.spike_prob > 0.0) effects.push_back(Effect::Positive);
    const double tau_positive = true_tau_resample(input.source, cfg.spike_prob);
    const std::size_t M = methods.size();
    const std::size_t E = effects.size();

    OcTable table;
    for (std::size_t n1 : cfg.n1_grid) {
        // records[e][m][s]
        std::vector<std::vector<std::vector<ReplicateRecord>>> records(
            E, std::vector<std::vector<ReplicateRecord>>(M, std::vector<ReplicateRecord>(cfg.reps)));
        parallel_for(cfg.reps, cfg.jobs, [&](std::size_t s) {
            Rng draw = substream(cfg.seed, {n1, s});
            StudyCollection c;
            c.q = input.covariate_names.size();
            c.covariate_names = input.covariate_names;
            c.datasets.reserve(input.externals.size() + 1);
            c.datasets.push_back(subsample_trial(input.source, n1, cfg.ratio_r, draw));
            c.datasets.insert(c.datasets.end(), input.externals.begin(), input.externals.end());
            for (std::size_t e = 0; e < E; ++e) {
                double tau = 0.0;
                if (effects[e] == Effect::Positive) {
                    Rng spike = substream(cfg.seed, {n1, s, 1});
                    c.datasets.front() = spike_effect(c.datasets.front(), cfg.spike_prob, spike);
                    tau = tau_positive;
                }
                for (std::size_t m = 0; m < M; ++m) {
                    Rng mrng = substream(cfg.seed, {n1, s, 100 + static_cast<std::uint64_t>(methods[m])});
                    records[e][m][s] = record_of(analyze(methods[m], c, mcfg, mrng), tau);
                }
            }
        });
        for (std::size_t e = 0; e < E; ++e) {
            for (std::size_t m = 0; m < M; ++m) {
                table.push_back(aggregate(std::to_string(n1), methods[m], effects[e], records[e][m]));
            }
        }
    }
    return table;
}

}  // namespace extctl
