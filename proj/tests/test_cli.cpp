#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stochacc/experiment.hpp"

using namespace stochacc;
namespace fs = std::filesystem;

namespace {

Json base_config(const std::string& label, const std::string& out_dir) {
    Json j;
    j["engine"] = "lattice";
    j["label"] = label;
    j["dimension"] = 2;
    j["seed"] = 7;
    j["workers"] = 2;
    j["out_dir"] = out_dir;
    j["lattice"] = {{"kind", "hexagonal2d"},
                    {"y_star", 0.45},
                    {"profile", "f1"},
                    {"coupling", "uniform_0_half"}};
    j["ensemble"] = {{"n_trajectories", 96}, {"v0", Json::array({1.0})},
                     {"max_collisions", 2000}};
    j["grid"] = {{"per_decade", 8}, {"t_max", 200.0}};
    j["observables"] = Json::array({"v2", "y2", "tau"});
    return j;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config validation rejects unknown keys and bad values with field paths") {
    Json j = base_config("x", "/tmp/stochacc_cli_test");
    j["typo_key"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(j), "$.typo_key: unknown key", ConfigError);

    Json j2 = base_config("x", "/tmp/stochacc_cli_test");
    j2["engine"] = "warp";
    CHECK_THROWS_AS(parse_config(j2), ConfigError);

    Json j3 = base_config("x", "/tmp/stochacc_cli_test");
    j3["ensemble"]["n_trajectories"] = -5;
    auto cfg3 = parse_config(j3);
    CHECK_THROWS_WITH_AS(run_experiment(cfg3),
                         "$.ensemble.n_trajectories: expected positive integer", ConfigError);

    Json j4 = base_config("x", "/tmp/stochacc_cli_test");
    j4["lattice"]["y_star"] = 0.40;  // below the finite-horizon bound
    CHECK_THROWS_AS(run_experiment(parse_config(j4)), InvalidRadius);
}

TEST_CASE("dot-path overrides re-point nested fields") {
    Json j = base_config("x", "/tmp/stochacc_cli_test");
    apply_override(j, "ensemble.n_trajectories=32");
    apply_override(j, "lattice.profile=f3");
    apply_override(j, "ensemble.v0=[0.5,2.0]");
    CHECK(j["ensemble"]["n_trajectories"] == 32);
    CHECK(j["lattice"]["profile"] == "f3");
    CHECK(j["ensemble"]["v0"].size() == 2);
    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("reruns with a fixed seed produce byte-identical series") {
    const std::string dir = "/tmp/stochacc_cli_test/det";
    fs::remove_all(dir);
    Json j = base_config("det_a", dir);
    auto rec1 = run_experiment(parse_config(j));
    write_record_files(rec1);
    j["label"] = "det_b";
    auto rec2 = run_experiment(parse_config(j));
    write_record_files(rec2);
    CHECK(slurp(dir + "/det_a_case0_n.csv") == slurp(dir + "/det_b_case0_n.csv"));
    CHECK(slurp(dir + "/det_a_case0_t.csv") == slurp(dir + "/det_b_case0_t.csv"));
}

TEST_CASE("statistics are invariant under the worker count") {
    const std::string dir = "/tmp/stochacc_cli_test/workers";
    fs::remove_all(dir);
    Json j1 = base_config("w1", dir);
    j1["workers"] = 1;
    Json j2 = base_config("w2", dir);
    j2["workers"] = 2;
    write_record_files(run_experiment(parse_config(j1)));
    write_record_files(run_experiment(parse_config(j2)));
    // chunked ordered reduction: identical to the last bit, well within the
    // 1e-12 relative requirement
    CHECK(slurp(dir + "/w1_case0_n.csv") == slurp(dir + "/w2_case0_n.csv"));
    CHECK(slurp(dir + "/w1_case0_t.csv") == slurp(dir + "/w2_case0_t.csv"));
}

TEST_CASE("run records are self-contained and re-reportable") {
    const std::string dir = "/tmp/stochacc_cli_test/record";
    fs::remove_all(dir);
    Json j = base_config("rec", dir);
    auto rec = run_experiment(parse_config(j));
    const std::string summary = write_record_files(rec);

    Json loaded;
    std::ifstream in(summary);
    REQUIRE(in.good());
    in >> loaded;
    CHECK(loaded["config"] == rec.config.raw);  // full resolved config embedded
    CHECK(loaded["cases"].size() == 1);
    CHECK(loaded["cases"][0]["counters"]["launched"] == 96);

    auto rows = build_report({loaded});
    CHECK(!rows.empty());
    bool has_v2 = false;
    for (const auto& r : rows)
        if (r.quantity == "<v2>(n)") has_v2 = true;
    CHECK(has_v2);
    // rendering never crashes on unsettled rows
    auto text = render_report(rows);
    CHECK(text.find("quantity") != std::string::npos);
}

TEST_CASE("walk, coeffs and changevar engines run from config") {
    const std::string dir = "/tmp/stochacc_cli_test/engines";
    fs::remove_all(dir);

    Json w;
    w["engine"] = "walk";
    w["label"] = "walk_ng";
    w["dimension"] = 2;
    w["seed"] = 3;
    w["workers"] = 2;
    w["out_dir"] = dir;
    w["walk"] = {{"mode", "full"}, {"kick", "synthetic_beta1"}, {"field", "nongradient"},
                 {"noise", "uniform"}, {"eta_star", 1.0}, {"speed_floor", 1.0}};
    w["ensemble"] = {{"n_trajectories", 200}, {"v0", 2.0}, {"max_collisions", 5000}};
    w["grid"] = {{"per_decade", 8}, {"t_max", 100.0}};
    w["observables"] = Json::array({"v2", "v1", "y1", "tau"});
    auto wrec = run_experiment(parse_config(w));
    CHECK(wrec.cases.size() == 1);
    CHECK_FALSE(wrec.is_gradient);

    Json r;
    r["engine"] = "walk";
    r["label"] = "walk_red";
    r["dimension"] = 2;
    r["seed"] = 3;
    r["out_dir"] = dir;
    r["walk"] = {{"mode", "reduced"}, {"xi0", 5.0}, {"n_steps", 20000}};
    r["ensemble"] = {{"n_trajectories", 300}, {"v0", 1.0}};
    auto rrec = run_experiment(parse_config(r));
    REQUIRE(rrec.cases.size() == 1);
    REQUIRE(rrec.cases[0].n_fits.fits.size() == 2);
    CHECK(rrec.cases[0].n_fits.fits[0].second.ok);

    Json h;
    h["engine"] = "coeffs";
    h["label"] = "homog";
    h["dimension"] = 2;
    h["out_dir"] = dir;
    h["coeffs"] = {{"case", "homogeneous_gradient"}, {"eta_star", 2.0},
                   {"correlation", "poly_cos"}};
    auto hrec = run_experiment(parse_config(h));
    CHECK(hrec.extra["K0"].get<double>() == doctest::Approx(16.0 / 35.0));

    Json cv;
    cv["engine"] = "changevar";
    cv["label"] = "cv";
    cv["dimension"] = 2;
    cv["seed"] = 5;
    cv["workers"] = 2;
    cv["out_dir"] = dir;
    cv["changevar"] = {{"n_samples", 200000}};
    auto cvrec = run_experiment(parse_config(cv));
    for (const auto& row : cvrec.extra["checks"])
        CHECK(row["relative_difference"].get<double>() < 0.08);
}
