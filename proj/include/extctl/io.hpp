#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "extctl/oc.hpp"
#include "extctl/resample.hpp"

namespace extctl {

namespace fs = std::filesystem;

// Dataset CSV: header `outcome,treatment,<cov1>,...`, one patient per line.

/// Reads one study file. `covariate_names` receives the header columns after
/// `treatment`.
Dataset read_dataset_csv(const fs::path& path, int study_index, std::vector<std::string>& covariate_names);

/// One file per study; the first is the trial. Headers must agree. The
/// result is validated and the first violation raised as a DataError.
StudyCollection read_collection_csv(const std::vector<fs::path>& paths);

void write_dataset_csv(const Dataset& d, const std::vector<std::string>& covariate_names, const fs::path& path);

/// Writes study_<i>.csv per dataset into `dir`; returns the paths in order.
std::vector<fs::path> write_collection_csv(const StudyCollection& c, const fs::path& dir);

// OC CSV: `key,method,effect,rejection_rate,bias,rmse,reps,mc_se,failure_rate`,
// six decimals, table order.
std::string format_oc_csv(const OcTable& table);
void write_oc_csv(const OcTable& table, const fs::path& path);
OcTable read_oc_csv(const fs::path& path);

/// Long format `key,method,effect,metric,value` for plotting tools.
void write_plot_data(const OcTable& table, const fs::path& path);

// Manifest CSV: `label,path,size,role` with role `source` or `external`;
// relative paths resolve against the manifest's directory.
DataCollectionManifest read_manifest(const fs::path& path);
void write_manifest(const DataCollectionManifest& m, const fs::path& path);

/// Loads every study of the manifest. The source contributes its control
/// arm; externals must contain control patients only.
ResampleInput load_resample_input(const DataCollectionManifest& m);

struct SynthStudy {
    std::string label;
    std::size_t size = 0;
    double outcome_shift = 0.0;  // added to every response probability
};

/// Control-only logistic law for synthetic collections. Defaults follow the
/// first simulation scenario's control arm.
struct SynthParams {
    std::vector<SynthStudy> studies{{"chinot_synth", 458, 0.0},
                                    {"phase2a_synth", 16, 0.0},
                                    {"phase2b_synth", 29, 0.0},
                                    {"dfci_synth", 663, 0.0}};
    std::string source_label = "chinot_synth";
    std::vector<double> covariate_probs{0.4, 0.5};
    double intercept = -0.4;
    std::vector<double> beta{0.5, -0.5};
};

/// Writes `<label>.csv` per study and `manifest.csv` into `out_dir`.
DataCollectionManifest synth_data(const SynthParams& params, const fs::path& out_dir, std::uint64_t seed);

}  // namespace extctl
