#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <sys/wait.h>

#include "json.hpp"

#include "wicklab/cli_runner.hpp"

using namespace wicklab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    REQUIRE(os.good());
}

int run(const std::string& args, std::string* out = nullptr) {
    std::string cmd =
        std::string(CLI_BIN) + " " + args + " > cli_last_out.txt 2>&1";
    int rc = std::system(cmd.c_str());
    if (out)
        *out = slurp("cli_last_out.txt");
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string config_path(const std::string& name) {
    return std::string(CONFIG_DIR) + "/" + name;
}

std::string fixture_path(const std::string& name) {
    return std::string(FIXTURE_DIR) + "/" + name;
}

const char* kReducedConverge = R"(# fast variant for the test harness
[model]
kind = fractional
alpha = 0.4
scaling = 1.0
mollifier = bump

[converge]
f = x^2
m = 2
replicates = 40
eps = 0.125 0.03125
lambda = 0.125
origin = -0.25
spacing = 0.001953125
extent = 256
center = 0
seed = 11
jobs = 2
)";

} // namespace

TEST_CASE("config text parses into sections") {
    ConfigDoc doc = parse_config_text("# comment\n"
                                      "[model]\n"
                                      "alpha = 0.4\n"
                                      "; another comment\n"
                                      "scaling = 1.0 2.0\n"
                                      "[sweep]\n"
                                      "m = 2\n"
                                      "m = 3\n"
                                      "eps =\n");
    CHECK(doc.has("model", "alpha"));
    CHECK(doc.require("model", "alpha") == "0.4");
    CHECK(doc.require("model", "scaling") == "1.0 2.0");
    CHECK(doc.require("sweep", "m") == "3"); // last duplicate wins
    CHECK(doc.require("sweep", "eps").empty());
    CHECK_FALSE(doc.has("model", "kind"));
    CHECK_THROWS_AS(doc.require("model", "kind"), std::invalid_argument);
    CHECK_THROWS_AS(doc.require("converge", "f"), std::invalid_argument);

    CHECK_THROWS_AS(parse_config_text("[nosuch]\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[model\nalpha = 1\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("alpha = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[model]\nno equals sign\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[model]\n= 3\n"),
                    std::invalid_argument);
    CHECK_NOTHROW(parse_config_text(""));
}

TEST_CASE("sandwich-check fits the envelope constant") {
    std::string out;
    int rc = run("sandwich-check --config " +
                     config_path("sandwich_default.ini") +
                     " --out cli_sandwich",
                 &out);
    CHECK(rc == 0);
    CHECK(out.find("sandwich-check: PASS") != std::string::npos);
    nlohmann::json j = nlohmann::json::parse(slurp("cli_sandwich/sandwich.json"));
    CHECK(j["pass"] == true);
    double lam = j["lambda_fit"].get<double>();
    CHECK(lam >= 1.0);
    CHECK(lam < 10.0);
}

TEST_CASE("reduce-demo walks the rewrite trace") {
    std::string out;
    int rc = run("reduce-demo " + fixture_path("case1_triangle.graph"), &out);
    CHECK(rc == 0);
    CHECK(out.find("reduce-case-1") != std::string::npos);
    CHECK(out.find("reduction (1 steps)") != std::string::npos);
    CHECK(out.find("enhancement") != std::string::npos);
    CHECK(out.find("reduce-demo: PASS") != std::string::npos);

    rc = run("reduce-demo " + fixture_path("enhanced_pair.graph"), &out);
    CHECK(rc == 0);
    CHECK(out.find("reduction (0 steps)") != std::string::npos);
    CHECK(out.find("reduce-demo: PASS") != std::string::npos);

    spit("cli_bad.graph", "k 2\nm 1\nbogus\n");
    rc = run("reduce-demo cli_bad.graph", &out);
    CHECK(rc == 1);
    CHECK(out.find("config error") != std::string::npos);

    rc = run("reduce-demo", &out);
    CHECK(rc == 1);
}

TEST_CASE("bound-sweep writes deterministic reports") {
    std::string base = "bound-sweep --config " +
                       config_path("bound_default.ini");
    std::string out;
    int rc = run(base + " --out cli_bound_a", &out);
    CHECK(rc == 0);
    CHECK(out.find("bound-sweep: PASS") != std::string::npos);
    CHECK(out.find("fitted constant") != std::string::npos);

    rc = run(base + " --out cli_bound_b", &out);
    CHECK(rc == 0);
    CHECK(slurp("cli_bound_a/bound_cells.csv") ==
          slurp("cli_bound_b/bound_cells.csv"));
    CHECK(slurp("cli_bound_a/bound_summary.json") ==
          slurp("cli_bound_b/bound_summary.json"));
    std::string csv = slurp("cli_bound_a/bound_cells.csv");
    CHECK(csv.rfind("family,K,m,r,eps,theta,lhs,rhs,ratio", 0) == 0);

    // extending the theta grid keeps the existing points, so the fitted
    // constant is unchanged when the ratio decays at large theta
    rc = run(base + " --out cli_bound_t5 --theta-max 5", &out);
    CHECK(rc == 0);
    rc = run(base + " --out cli_bound_t50 --theta-max 50", &out);
    CHECK(rc == 0);
    auto fitted = [](const std::string& dir) {
        return nlohmann::json::parse(slurp(dir + "/bound_summary.json"))
            .at("fitted_constant")
            .get<double>();
    };
    double c5 = fitted("cli_bound_t5");
    double c50 = fitted("cli_bound_t50");
    CHECK(std::abs(c50 - c5) <= 1e-6 * c5);

    // misconfigured degree names the field and exits 1
    spit("cli_bad_m.ini", "[model]\nkind = fractional\n[sweep]\nm = -1\n"
                          "seed = 1\n");
    rc = run("bound-sweep --config cli_bad_m.ini --out cli_bound_a", &out);
    CHECK(rc == 1);
    CHECK(out.find("m") != std::string::npos);

    spit("cli_unknown.ini", "[model]\nkind = fractional\n[sweep]\nseed = 1\n"
                            "typo_key = 3\n");
    rc = run("bound-sweep --config cli_unknown.ini --out cli_bound_a", &out);
    CHECK(rc == 1);
    CHECK(out.find("unknown key") != std::string::npos);

    // stochastic subcommand without a seed anywhere
    spit("cli_noseed.ini", "[model]\nkind = fractional\n[sweep]\nm = 1\n");
    rc = run("bound-sweep --config cli_noseed.ini --out cli_bound_a", &out);
    CHECK(rc == 1);
    CHECK(out.find("seed") != std::string::npos);
}

TEST_CASE("converge runs the bundled experiment deterministically") {
    spit("cli_conv.ini", kReducedConverge);

    std::string out;
    int rc = run("converge --config cli_conv.ini --out cli_conv_a", &out);
    CHECK(rc == 0);
    CHECK(out.find("converge: PASS") != std::string::npos);
    CHECK(out.find("eps-slope") != std::string::npos);

    rc = run("converge --config cli_conv.ini --out cli_conv_b", &out);
    CHECK(rc == 0);
    CHECK(slurp("cli_conv_a/converge_x2.csv") ==
          slurp("cli_conv_b/converge_x2.csv"));
    CHECK(slurp("cli_conv_a/converge_x2.json") ==
          slurp("cli_conv_b/converge_x2.json"));
    std::string csv = slurp("cli_conv_a/converge_x2.csv");
    CHECK(csv.rfind("F,m,alpha,eps,lambda,n,error_moment,stderr", 0) == 0);

    // the worker count must not leak into the numbers
    rc = run("converge --config cli_conv.ini --out cli_conv_j4 --jobs 4",
             &out);
    CHECK(rc == 0);
    CHECK(slurp("cli_conv_a/converge_x2.csv") ==
          slurp("cli_conv_j4/converge_x2.csv"));

    // a different seed must move them
    rc = run("converge --config cli_conv.ini --out cli_conv_s7 --seed 7",
             &out);
    CHECK(rc == 0);
    CHECK(slurp("cli_conv_a/converge_x2.csv") !=
          slurp("cli_conv_s7/converge_x2.csv"));

    nlohmann::json j =
        nlohmann::json::parse(slurp("cli_conv_a/converge_x2.json"));
    CHECK(j["f"] == "x^2");
    CHECK(j["eps_slopes"].size() == 1);

    // constraint violation in the config exits 1 and names it
    std::string bad(kReducedConverge);
    bad.replace(bad.find("m = 2"), 5, "m = 3");
    spit("cli_conv_bad.ini", bad);
    rc = run("converge --config cli_conv_bad.ini --out cli_conv_a", &out);
    CHECK(rc == 1);
    CHECK(out.find("m >= |s|/alpha") != std::string::npos);

    std::string unknown_f(kReducedConverge);
    unknown_f.replace(unknown_f.find("f = x^2"), 7, "f = tanh");
    spit("cli_conv_f.ini", unknown_f);
    rc = run("converge --config cli_conv_f.ini --out cli_conv_a", &out);
    CHECK(rc == 1);
    CHECK(out.find("unknown nonlinearity") != std::string::npos);
}

TEST_CASE("cli usage errors exit with the input-error code") {
    std::string out;
    CHECK(run("", &out) == 1);
    CHECK(run("no-such-command", &out) == 1);
    CHECK(run("converge", &out) == 1); // --config is required
    CHECK(run("converge --config cli_missing.ini --out cli_conv_a", &out) ==
          1);
    CHECK(run("--help", &out) == 0);
    CHECK(out.find("bound-sweep") != std::string::npos);
    CHECK(out.find("converge") != std::string::npos);
}
