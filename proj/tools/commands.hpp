#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "extctl/methods.hpp"
#include "extctl/oc.hpp"

namespace extctl::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kFailureBudget = 4 };

struct RunConfig {
    std::string command;
    std::vector<int> scenarios;
    std::size_t reps = 2000;
    std::uint64_t seed = 20240101;
    std::vector<std::string> method_names;  // empty: all eight
    double alpha = 0.05;
    double psw_c = 1.0;
    int strata = 5;
    int nodes = 31;
    std::string n1_grid = "75:175:5";
    double spike_prob = 0.2;
    int ratio = 2;
    std::string manifest;
    std::string source_study;
    std::string out;
    std::string plot_data;
    unsigned jobs = 0;  // 0: all available cores
    double max_failure_rate = 0.05;
    // synth-data
    std::string shift_study;
    double shift = 0.0;
    // report
    std::string input;
};

std::vector<Method> resolve_methods(const std::vector<std::string>& names);

/// "a:b:step" or a comma-separated list.
std::vector<std::size_t> parse_n1_grid(const std::string& text);

MethodConfig method_config(const RunConfig& rc);

/// Fully resolved configuration as one JSON line.
std::string config_echo(const RunConfig& rc);

int run_simulate(const RunConfig& rc, std::ostream& out);
int run_resample(const RunConfig& rc, std::ostream& out);
int run_synth_data(const RunConfig& rc, std::ostream& out);
int run_report(const RunConfig& rc, std::ostream& out);

/// Plain-text table of rejection rate, bias and rmse.
void print_summary(const OcTable& table, std::ostream& out);

/// Exit status after a run: kFailureBudget if any row fails too often.
int failure_status(const OcTable& table, double max_failure_rate, std::ostream& err);

}  // namespace extctl::cli
