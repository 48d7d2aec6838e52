#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "extctl/errors.hpp"
#include "extctl/io.hpp"
#include "extctl/parallel.hpp"
#include "extctl/scenario.hpp"

namespace extctl::cli {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::size_t parse_count(const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw ConfigError("invalid n1 value '" + s + "'");
    }
    if (used != s.size() || v < 0) throw ConfigError("invalid n1 value '" + s + "'");
    return static_cast<std::size_t>(v);
}

unsigned resolved_jobs(const RunConfig& rc) { return rc.jobs == 0 ? default_jobs() : rc.jobs; }

void write_outputs(const OcTable& table, const RunConfig& rc, std::ostream& out) {
    if (!rc.out.empty()) {
        write_oc_csv(table, rc.out);
        out << "wrote " << table.size() << " rows to " << rc.out << '\n';
    }
    if (!rc.plot_data.empty()) {
        write_plot_data(table, rc.plot_data);
        out << "wrote plot data to " << rc.plot_data << '\n';
    }
}

}  // namespace

std::vector<Method> resolve_methods(const std::vector<std::string>& names) {
    if (names.empty()) return {std::begin(kAllMethods), std::end(kAllMethods)};
    std::vector<Method> out;
    for (const std::string& n : names) {
        const std::optional<Method> m = parse_method(n);
        if (!m) throw ConfigError("unknown method '" + n + "' (valid: ZPROP, GLM, TTP, PSW, FE, RE, PSS-RE, PS-RE)");
        out.push_back(*m);
    }
    return out;
}

std::vector<std::size_t> parse_n1_grid(const std::string& text) {
    std::vector<std::size_t> grid;
    if (text.find(':') != std::string::npos) {
        const std::vector<std::string> parts = split(text, ':');
        if (parts.size() != 3) throw ConfigError("n1 grid range must be start:stop:step");
        const std::size_t a = parse_count(parts[0]);
        const std::size_t b = parse_count(parts[1]);
        const std::size_t step = parse_count(parts[2]);
        if (step == 0 || a > b) throw ConfigError("n1 grid range must satisfy start <= stop and step > 0");
        for (std::size_t n = a; n <= b; n += step) grid.push_back(n);
    } else {
        for (const std::string& s : split(text, ',')) grid.push_back(parse_count(s));
    }
    if (grid.empty()) throw ConfigError("n1 grid is empty");
    return grid;
}

MethodConfig method_config(const RunConfig& rc) {
    MethodConfig cfg;
    cfg.alpha = rc.alpha;
    cfg.psw_C = rc.psw_c;
    cfg.strata_S = rc.strata;
    cfg.re_spec.quadrature_nodes = rc.nodes;
    cfg.validate();
    return cfg;
}

std::string config_echo(const RunConfig& rc) {
    nlohmann::ordered_json j;
    j["command"] = rc.command;
    if (rc.command == "simulate" || rc.command == "simulate-all") j["scenarios"] = rc.scenarios;
    if (rc.command != "report") {
        j["seed"] = rc.seed;
    }
    if (rc.command == "simulate" || rc.command == "simulate-all" || rc.command == "resample") {
        std::vector<std::string> names;
        for (Method m : resolve_methods(rc.method_names)) names.emplace_back(method_name(m));
        j["reps"] = rc.reps;
        j["methods"] = names;
        j["alpha"] = rc.alpha;
        j["psw_c"] = rc.psw_c;
        j["strata"] = rc.strata;
        j["nodes"] = rc.nodes;
        j["jobs"] = resolved_jobs(rc);
        j["max_failure_rate"] = rc.max_failure_rate;
    }
    if (rc.command == "resample") {
        j["manifest"] = rc.manifest;
        j["source_study"] = rc.source_study;
        j["n1_grid"] = parse_n1_grid(rc.n1_grid);
        j["spike_prob"] = rc.spike_prob;
        j["ratio"] = rc.ratio;
    }
    if (rc.command == "synth-data") {
        j["shift_study"] = rc.shift_study;
        j["shift"] = rc.shift;
    }
    if (rc.command == "report") j["input"] = rc.input;
    j["out"] = rc.out;
    if (!rc.plot_data.empty()) j["plot_data"] = rc.plot_data;
    return j.dump();
}

void print_summary(const OcTable& table, std::ostream& out) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %-7s %-9s %10s %10s %10s %8s\n", "key", "method", "effect", "rate", "bias",
                  "rmse", "failed");
    out << buf;
    for (const OcRow& r : table) {
        const std::string name(method_name(r.method));
        std::snprintf(buf, sizeof buf, "%-6s %-7s %-9s %10.4f %10.4f %10.4f %8.4f\n", r.key.c_str(), name.c_str(),
                      effect_name(r.effect), r.rejection_rate, r.bias, r.rmse, r.failure_rate);
        out << buf;
    }
}

int failure_status(const OcTable& table, double max_failure_rate, std::ostream& err) {
    int status = kOk;
    for (const OcRow& r : table) {
        if (r.failure_rate > max_failure_rate) {
            err << "failure budget exceeded: " << method_name(r.method) << " at key " << r.key << " ("
                << effect_name(r.effect) << ") failed in " << r.failure_rate * 100.0 << "% of replicates\n";
            status = kFailureBudget;
        }
    }
    return status;
}

int run_simulate(const RunConfig& rc, std::ostream& out) {
    if (rc.scenarios.empty()) throw ConfigError("no scenarios selected");
    for (int id : rc.scenarios) {
        if (id < 1 || id > 12) throw ConfigError("scenario must be in 1..12, got " + std::to_string(id));
    }
    if (rc.reps < 1) throw ConfigError("reps must be at least 1");
    if (!(rc.max_failure_rate >= 0.0 && rc.max_failure_rate <= 1.0)) throw ConfigError("max failure rate must lie in [0, 1]");
    const std::vector<Method> methods = resolve_methods(rc.method_names);
    const MethodConfig cfg = method_config(rc);
    const RunOptions opts{rc.reps, rc.seed, resolved_jobs(rc)};
    OcTable table;
    for (int id : rc.scenarios) {
        for (Effect e : {Effect::Null, Effect::Positive}) {
            const OcTable part = run_scenario(scenario_spec(id, e), methods, cfg, opts);
            table.insert(table.end(), part.begin(), part.end());
        }
    }
    print_summary(table, out);
    write_outputs(table, rc, out);
    return failure_status(table, rc.max_failure_rate, out);
}

int run_resample(const RunConfig& rc, std::ostream& out) {
    if (rc.manifest.empty()) throw ConfigError("--manifest is required");
    if (!(rc.max_failure_rate >= 0.0 && rc.max_failure_rate <= 1.0)) throw ConfigError("max failure rate must lie in [0, 1]");
    const std::vector<Method> methods = resolve_methods(rc.method_names);
    const MethodConfig cfg = method_config(rc);
    ResampleConfig rcfg;
    rcfg.n1_grid = parse_n1_grid(rc.n1_grid);
    rcfg.ratio_r = rc.ratio;
    rcfg.spike_prob = rc.spike_prob;
    rcfg.reps = rc.reps;
    rcfg.seed = rc.seed;
    rcfg.jobs = resolved_jobs(rc);
    DataCollectionManifest manifest = read_manifest(rc.manifest);
    if (!rc.source_study.empty()) manifest = swap_source(manifest, rc.source_study);
    const ResampleInput input = load_resample_input(manifest);
    rcfg.validate(input.source.size());
    const OcTable table = run_resampling_study(input, rcfg, methods, cfg);
    print_summary(table, out);
    write_outputs(table, rc, out);
    return failure_status(table, rc.max_failure_rate, out);
}

int run_synth_data(const RunConfig& rc, std::ostream& out) {
    if (rc.out.empty()) throw ConfigError("--out directory is required");
    SynthParams params;
    if (!rc.shift_study.empty()) {
        bool found = false;
        for (SynthStudy& s : params.studies) {
            if (s.label == rc.shift_study) {
                s.outcome_shift = rc.shift;
                found = true;
            }
        }
        if (!found) throw ConfigError("unknown study label '" + rc.shift_study + "'");
    }
    const DataCollectionManifest m = synth_data(params, rc.out, rc.seed);
    for (const ManifestEntry& e : m.studies) {
        out << e.label << ' ' << e.size << ' ' << (e.role == StudyRole::Source ? "source" : "external") << ' ' << e.path
            << '\n';
    }
    out << "manifest: " << (fs::path(rc.out) / "manifest.csv").string() << '\n';
    return kOk;
}

int run_report(const RunConfig& rc, std::ostream& out) {
    if (rc.input.empty()) throw ConfigError("--in is required");
    const OcTable table = read_oc_csv(rc.input);
    print_summary(table, out);
    if (!rc.plot_data.empty()) {
        write_plot_data(table, rc.plot_data);
        out << "wrote plot data to " << rc.plot_data << '\n';
    }
    return kOk;
}

}  // namespace extctl::cli
