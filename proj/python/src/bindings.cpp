#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "extctl/errors.hpp"
#include "extctl/glm.hpp"
#include "extctl/io.hpp"
#include "extctl/methods.hpp"
#include "extctl/mixed.hpp"
#include "extctl/parallel.hpp"
#include "extctl/resample.hpp"
#include "extctl/scenario.hpp"

namespace py = pybind11;
using namespace extctl;

namespace {

// Each study is (x, t, y): an n x q covariate matrix and two length-n 0/1 vectors.
using StudyArrays = std::tuple<Eigen::MatrixXd, std::vector<int>, std::vector<int>>;

StudyCollection make_collection(const std::vector<StudyArrays>& studies, std::vector<std::string> names) {
    StudyCollection c;
    if (studies.empty()) throw DataError("collection needs at least the trial");
    c.q = static_cast<std::size_t>(std::get<0>(studies.front()).cols());
    if (names.empty()) {
        for (std::size_t k = 0; k < c.q; ++k) names.push_back("x" + std::to_string(k + 1));
    }
    c.covariate_names = std::move(names);
    for (std::size_t i = 0; i < studies.size(); ++i) {
        const auto& [x, t, y] = studies[i];
        if (static_cast<std::size_t>(x.rows()) != t.size() || t.size() != y.size()) {
            throw DataError("study " + std::to_string(i + 1) + ": x, t and y lengths differ");
        }
        Dataset d;
        d.study_index = static_cast<int>(i + 1);
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            PatientRecord r;
            for (Eigen::Index k = 0; k < x.cols(); ++k) r.covariates.push_back(x(j, k));
            r.treatment = t[j];
            r.outcome = y[j];
            d.records.push_back(std::move(r));
        }
        c.datasets.push_back(std::move(d));
    }
    const ValidationReport rep = validate_collection(c);
    if (!rep.empty()) throw DataError("study " + std::to_string(rep.front().study_index) + ": " + rep.front().message);
    return c;
}

Method method_of(const std::string& name) {
    const std::optional<Method> m = parse_method(name);
    if (!m) throw ConfigError("unknown method '" + name + "'");
    return *m;
}

std::vector<Method> methods_of(const std::vector<std::string>& names) {
    if (names.empty()) return {std::begin(kAllMethods), std::end(kAllMethods)};
    std::vector<Method> out;
    for (const std::string& n : names) out.push_back(method_of(n));
    return out;
}

py::list rows_of(const OcTable& table) {
    py::list out;
    for (const OcRow& r : table) {
        py::dict d;
        d["key"] = r.key;
        d["method"] = std::string(method_name(r.method));
        d["effect"] = std::string(effect_name(r.effect));
        d["rejection_rate"] = r.rejection_rate;
        d["bias"] = r.bias;
        d["rmse"] = r.rmse;
        d["reps"] = r.reps;
        d["mc_se"] = r.mc_se;
        d["failure_rate"] = r.failure_rate;
        out.append(d);
    }
    return out;
}

MethodConfig method_config(double alpha, double psw_c, int strata, int nodes) {
    MethodConfig cfg;
    cfg.alpha = alpha;
    cfg.psw_C = psw_c;
    cfg.strata_S = strata;
    cfg.re_spec.quadrature_nodes = nodes;
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_extctl, m) {
    m.doc() = "Trial analyses that borrow external control data";

    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.attr("METHODS") = [] {
        std::vector<std::string> v;
        for (Method x : kAllMethods) v.emplace_back(method_name(x));
        return v;
    }();

    m.def("logistic", &logistic, py::arg("t"));
    m.def("normal_upper_tail", &normal_upper_tail, py::arg("z"));

    py::class_<GlmFit>(m, "GlmFit")
        .def_readonly("coefficients", &GlmFit::coefficients)
        .def_readonly("covariance_model", &GlmFit::covariance_model)
        .def_readonly("log_likelihood", &GlmFit::log_likelihood)
        .def_readonly("converged", &GlmFit::converged)
        .def_readonly("iterations", &GlmFit::iterations);

    m.def(
        "fit_logistic",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<Eigen::VectorXd> w) {
            return fit_logistic(x, y, w);
        },
        py::arg("x"), py::arg("y"), py::arg("weights") = py::none(),
        "Weighted logistic regression; x must include an intercept column if one is wanted.");
    m.def(
        "sandwich_covariance",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<Eigen::VectorXd> w) {
            return sandwich_covariance(fit_logistic(x, y, w), x, y, w);
        },
        py::arg("x"), py::arg("y"), py::arg("weights") = py::none());

    py::class_<AnalysisResult>(m, "AnalysisResult")
        .def_property_readonly("method", [](const AnalysisResult& r) { return std::string(method_name(r.method)); })
        .def_readonly("tau_hat", &AnalysisResult::tau_hat)
        .def_readonly("gamma_hat", &AnalysisResult::gamma_hat)
        .def_readonly("se_stat", &AnalysisResult::se_stat)
        .def_readonly("z_value", &AnalysisResult::z_value)
        .def_readonly("p_value", &AnalysisResult::p_value)
        .def_readonly("reject", &AnalysisResult::reject)
        .def_property_readonly("ok", &AnalysisResult::ok)
        .def_property_readonly("converged", [](const AnalysisResult& r) { return r.diagnostics.converged; })
        .def_property_readonly("included_studies", [](const AnalysisResult& r) { return r.diagnostics.included_studies; })
        .def_property_readonly("message", [](const AnalysisResult& r) { return r.diagnostics.message; })
        .def("__repr__", [](const AnalysisResult& r) {
            return "<AnalysisResult " + std::string(method_name(r.method)) + " z=" + std::to_string(r.z_value) +
                   " reject=" + (r.reject ? "True" : "False") + ">";
        });

    m.def(
        "analyze",
        [](const std::string& method, const std::vector<StudyArrays>& studies, std::uint64_t seed, double alpha,
           double psw_c, int strata, int nodes) {
            const StudyCollection c = make_collection(studies, {});
            Rng rng(seed);
            return analyze(method_of(method), c, method_config(alpha, psw_c, strata, nodes), rng);
        },
        py::arg("method"), py::arg("studies"), py::arg("seed") = 1, py::arg("alpha") = 0.05, py::arg("psw_c") = 1.0,
        py::arg("strata") = 5, py::arg("nodes") = 31,
        "Run one method on a list of (x, t, y) studies; the first is the trial.");

    m.def(
        "simulate",
        [](int scenario, const std::string& effect, std::size_t reps, std::uint64_t seed,
           const std::vector<std::string>& methods, unsigned jobs) {
            Effect e;
            if (effect == "null") e = Effect::Null;
            else if (effect == "positive") e = Effect::Positive;
            else throw ConfigError("effect must be 'null' or 'positive'");
            const ScenarioSpec spec = scenario_spec(scenario, e);
            const std::vector<Method> ms = methods_of(methods);
            OcTable t;
            {
                py::gil_scoped_release release;
                t = run_scenario(spec, ms, MethodConfig{}, {reps, seed, jobs == 0 ? default_jobs() : jobs});
            }
            return rows_of(t);
        },
        py::arg("scenario"), py::arg("effect") = "null", py::arg("reps") = 2000, py::arg("seed") = 20240101,
        py::arg("methods") = std::vector<std::string>{}, py::arg("jobs") = 1);

    m.def(
        "synth_data",
        [](const std::filesystem::path& out_dir, std::uint64_t seed) {
            synth_data(SynthParams{}, out_dir, seed);
            return (out_dir / "manifest.csv").string();
        },
        py::arg("out_dir"), py::arg("seed") = 20240101, "Write the synthetic collection; returns the manifest path.");

    m.def(
        "resample",
        [](const std::filesystem::path& manifest, const std::vector<std::size_t>& n1_grid, double spike_prob,
           std::size_t reps, std::uint64_t seed, const std::vector<std::string>& methods, const std::string& source,
           unsigned jobs) {
            DataCollectionManifest mf = read_manifest(manifest);
            if (!source.empty()) mf = swap_source(mf, source);
            const ResampleInput in = load_resample_input(mf);
            ResampleConfig cfg;
            if (!n1_grid.empty()) cfg.n1_grid = n1_grid;
            cfg.spike_prob = spike_prob;
            cfg.reps = reps;
            cfg.seed = seed;
            cfg.jobs = jobs == 0 ? default_jobs() : jobs;
            cfg.validate(in.source.size());
            const std::vector<Method> ms = methods_of(methods);
            OcTable t;
            {
                py::gil_scoped_release release;
                t = run_resampling_study(in, cfg, ms, MethodConfig{});
            }
            return rows_of(t);
        },
        py::arg("manifest"), py::arg("n1_grid") = std::vector<std::size_t>{}, py::arg("spike_prob") = 0.2,
        py::arg("reps") = 2000, py::arg("seed") = 20240101, py::arg("methods") = std::vector<std::string>{},
        py::arg("source") = "", py::arg("jobs") = 1);
}
