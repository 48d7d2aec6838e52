#include <doctest.h>

#include <fstream>
#include <sstream>

#include "extctl/errors.hpp"
#include "extctl/io.hpp"
#include "extctl/scenario.hpp"
#include "helpers.hpp"

using namespace extctl;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("extctl_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

OcRow row(const std::string& key, Method m, Effect e, double rate) {
    OcRow r;
    r.key = key;
    r.method = m;
    r.effect = e;
    r.rejection_rate = rate;
    r.bias = -0.0123456789;
    r.rmse = 0.1;
    r.reps = 2000;
    r.mc_se = 0.0048734;
    return r;
}

}  // namespace

TEST_CASE("minimal dataset file") {
    const fs::path dir = scratch("minimal");
    const fs::path p = write_text(dir / "s.csv", "outcome,treatment,x1\n1,0,0\n0,0,1\n");
    const StudyCollection c = read_collection_csv({p});
    REQUIRE(c.study_count() == 1);
    CHECK(c.rct().size() == 2);
    CHECK(arm_summary(c.rct(), 0).n == 2);
    CHECK(c.covariate_names == std::vector<std::string>{"x1"});
}

TEST_CASE("malformed dataset files") {
    const fs::path dir = scratch("bad");
    const fs::path two = write_text(dir / "two.csv", "outcome,treatment,x1\n1,0,0\n2,0,1\n");
    try {
        read_collection_csv({two});
        FAIL("expected ValueError");
    } catch (const ValueError& e) {
        CHECK(std::string(e.what()).find("two.csv:3") != std::string::npos);
    }
    const fs::path header = write_text(dir / "header.csv", "treatment,x1\n0,0\n");
    CHECK_THROWS_AS(read_collection_csv({header}), SchemaError);
    const fs::path text = write_text(dir / "text.csv", "outcome,treatment,x1\n1,0,abc\n");
    CHECK_THROWS_AS(read_collection_csv({text}), ParseError);
    const fs::path ragged = write_text(dir / "ragged.csv", "outcome,treatment,x1\n1,0\n");
    CHECK_THROWS_AS(read_collection_csv({ragged}), ParseError);
    const fs::path a = write_text(dir / "a.csv", "outcome,treatment,x1\n1,1,0\n0,0,1\n");
    const fs::path b = write_text(dir / "b.csv", "outcome,treatment,age\n1,0,0\n");
    CHECK_THROWS_AS(read_collection_csv({a, b}), SchemaError);
    const fs::path treated = write_text(dir / "t.csv", "outcome,treatment,x1\n1,1,0\n");
    CHECK_THROWS_AS(read_collection_csv({a, treated}), ValueError);
}

TEST_CASE("collection round trip") {
    const fs::path dir = scratch("roundtrip");
    const StudyCollection c = fixtures::scenario_draw(7, Effect::Positive, 1);
    const std::vector<fs::path> paths = write_collection_csv(c, dir);
    CHECK(paths.size() == 4);
    CHECK(read_collection_csv(paths) == c);

    // Non-binary covariates survive at full precision.
    StudyCollection cont = c;
    cont.datasets[0].records[0].covariates[0] = 0.1 + 1e-13;
    cont.datasets[1].records[3].covariates[1] = -71.25;
    CHECK(read_collection_csv(write_collection_csv(cont, dir)) == cont);
}

TEST_CASE("OC table format") {
    const fs::path dir = scratch("oc");
    const OcTable one{row("1", Method::ZPROP, Effect::Null, 0.05)};
    write_oc_csv(one, dir / "one.csv");
    const std::string text = slurp(dir / "one.csv");
    CHECK(text ==
          "key,method,effect,rejection_rate,bias,rmse,reps,mc_se,failure_rate\n"
          "1,ZPROP,null,0.050000,-0.012346,0.100000,2000,0.004873,0.000000\n");

    OcTable two = one;
    two.push_back(row("120", Method::PSS_RE, Effect::Positive, 0.8125));
    two.back().bias = std::numeric_limits<double>::quiet_NaN();
    write_oc_csv(two, dir / "two.csv");
    const OcTable back = read_oc_csv(dir / "two.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].key == "120");
    CHECK(back[1].method == Method::PSS_RE);
    CHECK(back[1].effect == Effect::Positive);
    CHECK(back[1].rejection_rate == doctest::Approx(0.8125));
    CHECK(std::isnan(back[1].bias));
    write_oc_csv(back, dir / "again.csv");
    CHECK(slurp(dir / "again.csv") == slurp(dir / "two.csv"));
    CHECK_THROWS(write_oc_csv(OcTable{}, dir / "empty.csv"));
}

TEST_CASE("plot data is long format") {
    const fs::path dir = scratch("plot");
    write_plot_data({row("75", Method::RE, Effect::Positive, 0.5)}, dir / "plot.csv");
    std::istringstream in(slurp(dir / "plot.csv"));
    std::string line;
    std::getline(in, line);
    CHECK(line == "key,method,effect,metric,value");
    int rows = 0;
    while (std::getline(in, line)) {
        CHECK(line.rfind("75,RE,positive,", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3);
}

TEST_CASE("synthetic collection") {
    const fs::path dir = scratch("synth");
    const DataCollectionManifest m = synth_data(SynthParams{}, dir, 20240101);
    REQUIRE(m.studies.size() == 4);
    CHECK(m.studies[0].size == 458);
    CHECK(m.studies[1].size == 16);
    CHECK(m.studies[2].size == 29);
    CHECK(m.studies[3].size == 663);
    CHECK(m.source().label == "chinot_synth");

    const DataCollectionManifest read = read_manifest(dir / "manifest.csv");
    const ResampleInput in = load_resample_input(read);
    CHECK(in.source.size() == 458);
    REQUIRE(in.externals.size() == 3);
    CHECK(in.externals[0].study_index == 2);
    CHECK(in.externals[2].size() == 663);

    const fs::path again = scratch("synth_again");
    synth_data(SynthParams{}, again, 20240101);
    for (const char* f : {"chinot_synth.csv", "dfci_synth.csv", "manifest.csv"}) CHECK(slurp(dir / f) == slurp(again / f));

    const fs::path shifted = scratch("synth_shift");
    SynthParams p;
    p.studies[3].outcome_shift = 0.05;
    synth_data(p, shifted, 20240101);
    std::vector<std::string> names;
    const double base = *arm_summary(read_dataset_csv(dir / "dfci_synth.csv", 4, names), 0).rate;
    const double moved = *arm_summary(read_dataset_csv(shifted / "dfci_synth.csv", 4, names), 0).rate;
    // Common uniforms: only draws in [p, p + 0.05) change, about Binomial(663, 0.05).
    CHECK(moved > base);
    CHECK(std::abs(moved - base - 0.05) < 4 * std::sqrt(0.05 * 0.95 / 663));
    CHECK(slurp(dir / "chinot_synth.csv") == slurp(shifted / "chinot_synth.csv"));
}

TEST_CASE("manifest validation") {
    const fs::path dir = scratch("manifest");
    synth_data(SynthParams{}, dir, 1);
    write_text(dir / "bad_role.csv", "label,path,size,role\na,chinot_synth.csv,458,trial\n");
    CHECK_THROWS_AS(read_manifest(dir / "bad_role.csv"), ValueError);
    write_text(dir / "bad_size.csv",
               "label,path,size,role\na,chinot_synth.csv,457,source\nb,dfci_synth.csv,663,external\n");
    CHECK_THROWS_AS(load_resample_input(read_manifest(dir / "bad_size.csv")), ValueError);
    write_text(dir / "bad_header.csv", "name,file\n");
    CHECK_THROWS_AS(read_manifest(dir / "bad_header.csv"), SchemaError);
}
