#include <doctest.h>

#include <sstream>

#include "commands.hpp"
#include "extctl/errors.hpp"

using namespace extctl;
using namespace extctl::cli;

TEST_CASE("n1 grid parsing") {
    const std::vector<std::size_t> g = parse_n1_grid("75:175:5");
    CHECK(g.size() == 21);
    CHECK(g[1] == 80);
    CHECK(parse_n1_grid("100,120") == std::vector<std::size_t>{100, 120});
    CHECK_THROWS_AS(parse_n1_grid("75:175"), ConfigError);
    CHECK_THROWS_AS(parse_n1_grid("175:75:5"), ConfigError);
    CHECK_THROWS_AS(parse_n1_grid("1x"), ConfigError);
    CHECK_THROWS_AS(parse_n1_grid(""), ConfigError);
}

TEST_CASE("method selection") {
    CHECK(resolve_methods({}).size() == 8);
    CHECK(resolve_methods({"RE", "ZPROP"}) == std::vector<Method>{Method::RE, Method::ZPROP});
    CHECK_THROWS_AS(resolve_methods({"BAYES"}), ConfigError);
}

TEST_CASE("configuration echo is complete") {
    RunConfig rc;
    rc.command = "simulate";
    rc.scenarios = {1, 2};
    rc.jobs = 2;
    const std::string echo = config_echo(rc);
    CHECK(echo.find("\"seed\":20240101") != std::string::npos);
    CHECK(echo.find("\"scenarios\":[1,2]") != std::string::npos);
    CHECK(echo.find("\"jobs\":2") != std::string::npos);
    CHECK(echo.find("\"PSS-RE\"") != std::string::npos);
    CHECK(echo.find('\n') == std::string::npos);
}

TEST_CASE("invalid settings are rejected before any work") {
    RunConfig rc;
    rc.command = "simulate";
    std::ostringstream out;
    rc.scenarios = {13};
    CHECK_THROWS_AS(run_simulate(rc, out), ConfigError);
    rc.scenarios = {1};
    rc.alpha = 0.0;
    CHECK_THROWS_AS(run_simulate(rc, out), ConfigError);
    rc.alpha = 0.05;
    rc.nodes = 10;
    CHECK_THROWS_AS(run_simulate(rc, out), ConfigError);
    CHECK(out.str().empty());
}

TEST_CASE("failure budget") {
    OcTable t(2);
    t[0].failure_rate = 0.01;
    t[1].failure_rate = 0.2;
    std::ostringstream err;
    CHECK(failure_status(t, 0.05, err) == kFailureBudget);
    CHECK(failure_status(t, 0.5, err) == kOk);
}
