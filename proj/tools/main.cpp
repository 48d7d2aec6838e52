#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "extctl/errors.hpp"

using namespace extctl;
using namespace extctl::cli;

namespace {

void add_method_options(CLI::App* sub, RunConfig& rc) {
    sub->add_option("--reps", rc.reps, "Replicates per configuration")->check(CLI::PositiveNumber);
    sub->add_option("--methods", rc.method_names, "Methods to run (default: all)")->delimiter(',');
    sub->add_option("--alpha", rc.alpha, "One-sided significance level");
    sub->add_option("--psw-c", rc.psw_c, "Scaling constant C of the odds weights");
    sub->add_option("--strata", rc.strata, "Number of propensity strata");
    sub->add_option("--nodes", rc.nodes, "Gauss-Hermite quadrature nodes");
    sub->add_option("--jobs", rc.jobs, "Worker threads (0 = all cores)");
    sub->add_option("--max-failure-rate", rc.max_failure_rate, "Per-row numerical failure budget");
    sub->add_option("--plot-data", rc.plot_data, "Long-format CSV for plotting");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operating characteristics of trial analyses that borrow external control data"};
    app.require_subcommand(1);
    RunConfig rc;
    app.add_option("--seed", rc.seed, "Top-level random seed");

    CLI::App* sim = app.add_subcommand("simulate", "Run selected simulation scenarios");
    sim->add_option("--scenario", rc.scenarios, "Scenario ids (1..12)")->delimiter(',')->required();
    sim->add_option("--seed", rc.seed, "Top-level random seed");
    sim->add_option("--out", rc.out, "Output CSV");
    add_method_options(sim, rc);

    CLI::App* all = app.add_subcommand("simulate-all", "Run all 12 simulation scenarios");
    all->add_option("--seed", rc.seed, "Top-level random seed");
    all->add_option("--out", rc.out, "Output CSV");
    add_method_options(all, rc);

    CLI::App* res = app.add_subcommand("resample", "Resampling study on a data collection");
    res->add_option("--manifest", rc.manifest, "Manifest CSV (label,path,size,role)")->required();
    res->add_option("--source-study", rc.source_study, "Study label to use as the trial source");
    res->add_option("--n1-grid", rc.n1_grid, "start:stop:step or comma list");
    res->add_option("--spike-prob", rc.spike_prob, "Spike-in probability (0 = null only)");
    res->add_option("--ratio", rc.ratio, "Randomization ratio r of r:1");
    res->add_option("--seed", rc.seed, "Top-level random seed");
    res->add_option("--out", rc.out, "Output CSV");
    add_method_options(res, rc);

    CLI::App* synth = app.add_subcommand("synth-data", "Write a synthetic control-only data collection");
    synth->add_option("--out", rc.out, "Output directory")->required();
    synth->add_option("--seed", rc.seed, "Random seed");
    synth->add_option("--shift-study", rc.shift_study, "Study whose response probabilities are shifted");
    synth->add_option("--shift", rc.shift, "Shift added to response probabilities");

    CLI::App* rep = app.add_subcommand("report", "Summarize an operating-characteristics CSV");
    rep->add_option("--in", rc.input, "OC CSV")->required();
    rep->add_option("--plot-data", rc.plot_data, "Long-format CSV for plotting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (sim->parsed()) {
            rc.command = "simulate";
        } else if (all->parsed()) {
            rc.command = "simulate-all";
            rc.scenarios = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        } else if (res->parsed()) {
            rc.command = "resample";
        } else if (synth->parsed()) {
            rc.command = "synth-data";
        } else {
            rc.command = "report";
        }
        std::cout << "config " << config_echo(rc) << '\n';
        if (rc.command == "simulate" || rc.command == "simulate-all") return run_simulate(rc, std::cout);
        if (rc.command == "resample") return run_resample(rc, std::cout);
        if (rc.command == "synth-data") return run_synth_data(rc, std::cout);
        return run_report(rc, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kFailureBudget;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
}
