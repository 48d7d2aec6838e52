#include "extctl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"

namespace extctl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    return s.substr(b);
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line); }

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || text.empty() || !std::isfinite(v)) {
        throw ParseError(where(path, line) + ": cannot parse number '" + text + "'");
    }
    return v;
}

int parse_binary(const std::string& text, const char* column, const fs::path& path, std::size_t line) {
    const double v = parse_double(text, path, line);
    if (v != 0.0 && v != 1.0) {
        throw ValueError(where(path, line) + ": " + column + " must be 0 or 1, got '" + text + "'");
    }
    return static_cast<int>(v);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fixed6(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// %.17g keeps doubles exact through a write/read cycle.
std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Dataset read_dataset_csv(const fs::path& path, int study_index, std::vector<std::string>& covariate_names) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(where(path, 1) + ": missing header");
    std::vector<std::string> header = split_csv_line(trim(line));
    for (std::string& h : header) h = trim(h);
    std::vector<std::string> missing;
    if (header.empty() || header[0] != "outcome") missing.emplace_back("outcome");
    if (header.size() < 2 || header[1] != "treatment") missing.emplace_back("treatment");
    if (!missing.empty()) {
        std::string msg = path.string() + ": header must start with outcome,treatment; missing or misplaced:";
        for (const std::string& m : missing) msg += " " + m;
        throw SchemaError(msg);
    }
    covariate_names.assign(header.begin() + 2, header.end());

    Dataset d;
    d.study_index = study_index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError(where(path, line_no) + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        PatientRecord r;
        r.outcome = parse_binary(trim(fields[0]), "outcome", path, line_no);
        r.treatment = parse_binary(trim(fields[1]), "treatment", path, line_no);
        r.covariates.reserve(fields.size() - 2);
        for (std::size_t k = 2; k < fields.size(); ++k) r.covariates.push_back(parse_double(trim(fields[k]), path, line_no));
        d.records.push_back(std::move(r));
    }
    return d;
}

StudyCollection read_collection_csv(const std::vector<fs::path>& paths) {
    if (paths.empty()) throw DataError("no dataset files given");
    StudyCollection c;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        std::vector<std::string> names;
        c.datasets.push_back(read_dataset_csv(paths[i], static_cast<int>(i) + 1, names));
        if (i == 0) {
            c.covariate_names = names;
        } else if (names != c.covariate_names) {
            throw SchemaError(paths[i].string() + ": covariate columns differ from " + paths[0].string());
        }
    }
    c.q = c.covariate_names.size();
    const ValidationReport report = validate_collection(c);
    if (!report.empty()) {
        const Violation& v = report.front();
        const std::size_t i = static_cast<std::size_t>(std::max(v.study_index, 1)) - 1;
        throw ValueError((i < paths.size() ? paths[i].string() : std::string("collection")) + ": " + v.message);
    }
    return c;
}

void write_dataset_csv(const Dataset& d, const std::vector<std::string>& covariate_names, const fs::path& path) {
    std::ofstream out = open_out(path);
    out << "outcome,treatment";
    for (const std::string& n : covariate_names) out << ',' << n;
    out << '\n';
    for (const PatientRecord& r : d.records) {
        out << r.outcome << ',' << r.treatment;
        for (double x : r.covariates) out << ',' << exact(x);
        out << '\n';
    }
    finish(out, path);
}

std::vector<fs::path> write_collection_csv(const StudyCollection& c, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    for (const Dataset& d : c.datasets) {
        paths.push_back(dir / ("study_" + std::to_string(d.study_index) + ".csv"));
        write_dataset_csv(d, c.covariate_names, paths.back());
    }
    return paths;
}

std::string format_oc_csv(const OcTable& table) {
    std::string s = "key,method,effect,rejection_rate,bias,rmse,reps,mc_se,failure_rate\n";
    for (const OcRow& r : table) {
        s += r.key;
        s += ',';
        s += method_name(r.method);
        s += ',';
        s += effect_name(r.effect);
        s += ',' + fixed6(r.rejection_rate) + ',' + fixed6(r.bias) + ',' + fixed6(r.rmse) + ',' +
             std::to_string(r.reps) + ',' + fixed6(r.mc_se) + ',' + fixed6(r.failure_rate) + '\n';
    }
    return s;
}

void write_oc_csv(const OcTable& table, const fs::path& path) {
    if (table.empty()) throw std::invalid_argument("write_oc_csv: empty table");
    std::ofstream out = open_out(path);
    out << format_oc_csv(table);
    finish(out, path);
}

OcTable read_oc_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open file");
    std::string line;
    if (!std::getline(in, line) || trim(line) != "key,method,effect,rejection_rate,bias,rmse,reps,mc_se,failure_rate") {
        throw SchemaError(path.string() + ": not an operating-characteristics table");
    }
    OcTable table;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 9) throw ParseError(where(path, line_no) + ": expected 9 fields");
        OcRow r;
        r.key = f[0];
        const std::optional<Method> m = parse_method(f[1]);
        if (!m) throw ValueError(where(path, line_no) + ": unknown method '" + f[1] + "'");
        r.method = *m;
        if (f[2] == "null") {
            r.effect = Effect::Null;
        } else if (f[2] == "positive") {
            r.effect = Effect::Positive;
        } else {
            throw ValueError(where(path, line_no) + ": unknown effect '" + f[2] + "'");
        }
        auto num = [&](const std::string& t) {
            return t == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(t, path, line_no);
        };
        r.rejection_rate = num(f[3]);
        r.bias = num(f[4]);
        r.rmse = num(f[5]);
        r.reps = static_cast<std::size_t>(num(f[6]));
        r.mc_se = num(f[7]);
        r.failure_rate = num(f[8]);
        table.push_back(std::move(r));
    }
    return table;
}

void write_plot_data(const OcTable& table, const fs::path& path) {
    std::ofstream out = open_out(path);
    out << "key,method,effect,metric,value\n";
    for (const OcRow& r : table) {
        const std::string prefix = r.key + ',' + std::string(method_name(r.method)) + ',' + effect_name(r.effect) + ',';
        out << prefix << (r.effect == Effect::Null ? "type1" : "power") << ',' << fixed6(r.rejection_rate) << '\n';
        out << prefix << "bias," << fixed6(r.bias) << '\n';
        out << prefix << "rmse," << fixed6(r.rmse) << '\n';
    }
    finish(out, path);
}

DataCollectionManifest read_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open manifest");
    std::string line;
    if (!std::getline(in, line) || trim(line) != "label,path,size,role") {
        throw SchemaError(path.string() + ": manifest header must be label,path,size,role");
    }
    DataCollectionManifest m;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 4) throw ParseError(where(path, line_no) + ": expected 4 fields");
        ManifestEntry e;
        e.label = trim(f[0]);
        fs::path p = trim(f[1]);
        e.path = (p.is_relative() ? path.parent_path() / p : p).string();
        e.size = static_cast<std::size_t>(parse_double(trim(f[2]), path, line_no));
        const std::string role = trim(f[3]);
        if (role == "source") {
            e.role = StudyRole::Source;
        } else if (role == "external") {
            e.role = StudyRole::External;
        } else {
            throw ValueError(where(path, line_no) + ": role must be source or external, got '" + role + "'");
        }
        m.studies.push_back(std::move(e));
    }
    m.validate();
    return m;
}

void write_manifest(const DataCollectionManifest& m, const fs::path& path) {
    std::ofstream out = open_out(path);
    out << "label,path,size,role\n";
    for (const ManifestEntry& e : m.studies) {
        out << e.label << ',' << e.path << ',' << e.size << ',' << (e.role == StudyRole::Source ? "source" : "external")
            << '\n';
    }
    finish(out, path);
}

ResampleInput load_resample_input(const DataCollectionManifest& m) {
    m.validate();
    ResampleInput input;
    bool first = true;
    int next_index = 2;
    for (const ManifestEntry& e : m.studies) {
        std::vector<std::string> names;
        Dataset d = read_dataset_csv(e.path, e.role == StudyRole::Source ? 1 : next_index, names);
        if (first) {
            input.covariate_names = names;
            first = false;
        } else if (names != input.covariate_names) {
            throw SchemaError(e.path + ": covariate columns differ from the other studies");
        }
        if (e.size != 0 && e.size != d.size()) {
            throw ValueError(e.path + ": manifest size " + std::to_string(e.size) + " but file has " +
                             std::to_string(d.size()) + " records");
        }
        if (e.role == StudyRole::Source) {
            Dataset control;
            control.study_index = 1;
            for (PatientRecord& r : d.records) {
                if (r.treatment == 0) control.records.push_back(std::move(r));
            }
            input.source = std::move(control);
        } else {
            for (const PatientRecord& r : d.records) {
                if (r.treatment != 0) throw ValueError(e.path + ": external study contains treated patients");
            }
            input.externals.push_back(std::move(d));
            ++next_index;
        }
    }
    return input;
}

DataCollectionManifest synth_data(const SynthParams& params, const fs::path& out_dir, std::uint64_t seed) {
    if (params.covariate_probs.size() != params.beta.size()) {
        throw ConfigError("synth_data: covariate_probs and beta lengths differ");
    }
    fs::create_directories(out_dir);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < params.beta.size(); ++k) names.push_back("x" + std::to_string(k + 1));

    DataCollectionManifest m;
    for (std::size_t i = 0; i < params.studies.size(); ++i) {
        const SynthStudy& st = params.studies[i];
        Rng rng = substream(seed, {static_cast<std::uint64_t>(i)});
        Dataset d;
        d.study_index = static_cast<int>(i) + 1;
        for (std::size_t j = 0; j < st.size; ++j) {
            PatientRecord r;
            double eta = params.intercept;
            for (std::size_t k = 0; k < params.beta.size(); ++k) {
                const double x = bernoulli(rng, params.covariate_probs[k]) ? 1.0 : 0.0;
                r.covariates.push_back(x);
                eta += x * params.beta[k];
            }
            const double p = std::clamp(logistic(eta) + st.outcome_shift, 0.0, 1.0);
            r.outcome = bernoulli(rng, p) ? 1 : 0;
            d.records.push_back(std::move(r));
        }
        const std::string file = st.label + ".csv";
        write_dataset_csv(d, names, out_dir / file);
        m.studies.push_back(
            ManifestEntry{st.label, file, st.size, st.label == params.source_label ? StudyRole::Source : StudyRole::External});
    }
    m.validate();
    write_manifest(m, out_dir / "manifest.csv");
    for (ManifestEntry& e : m.studies) e.path = (out_dir / e.path).string();
    return m;
}

}  // namespace extctl
