#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "ssoscope/errors.hpp"
#include "ssoscope/pipeline.hpp"

using namespace ssoscope;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path case_dir() { return fs::path(SSOSCOPE_CASE_DIR); }

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "ssoscope_pipeline_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_config(const fs::path& dir, const std::string& file, const json& j) {
    const fs::path p = dir / file;
    std::ofstream(p) << j.dump(2) << "\n";
    return p;
}

// Benchmark-mode scenario against the bundled 11-bus case.
json kundur_config(const fs::path& out_dir) {
    json j;
    j["name"] = "kundur11";
    j["case_path"] = (case_dir() / "kundur11_modified.json").string();
    j["output_dir"] = out_dir.string();
    j["device_params"] = {
        {"IBR1", (case_dir() / "gfl_underdamped.json").string()},
        {"IBR2", (case_dir() / "gfl_underdamped.json").string()},
        {"IBR3", (case_dir() / "gfm_default.json").string()},
        {"IBR4", (case_dir() / "gfl_default.json").string()},
    };
    j["benchmark_mode"] = true;
    j["step"] = {{"device_id", "IBR2"}};
    return j;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
    return names;
}

void check_identical_trees(const fs::path& a, const fs::path& b) {
    const auto la = listing(a), lb = listing(b);
    CHECK(la == lb);
    for (const auto& name : la) CHECK(slurp(a / name) == slurp(b / name));
}

}  // namespace

TEST_CASE("config: relative paths resolve against the config directory") {
    const auto dir = fresh_dir("cfg_rel");
    fs::copy_file(case_dir() / "kundur11_modified.json", dir / "local_case.json");
    fs::copy_file(case_dir() / "gfl_default.json", dir / "p.json");
    json j;
    j["case_path"] = "local_case.json";
    j["output_dir"] = "out";
    j["device_params"] = {{"IBR1", "p.json"}, {"IBR2", "p.json"},
                          {"IBR3", "p.json"}, {"IBR4", "p.json"}};
    const auto cfg = write_config(dir, "scenario_x.json", j);

    const auto c = pipeline::load_scenario_config(cfg);
    CHECK(c.case_path == dir / "local_case.json");
    CHECK(c.output_dir == dir / "out");
    CHECK(c.device_params.at("IBR2") == dir / "p.json");
    CHECK(c.name == "scenario_x");  // defaults to the config stem
    CHECK(c.method == "multisine");
    CHECK(c.probe.bins == 200);
    CHECK(c.fit.order_max == 12);
    CHECK(c.modal.band_lo_hz == 1.0);
    CHECK(c.step.magnitude_fraction == 0.05);
    CHECK(!c.benchmark_mode);
    CHECK(c.seed == 0);
}

TEST_CASE("config: unknown fields are rejected with their location") {
    const auto dir = fresh_dir("cfg_unknown");
    auto j = kundur_config(dir / "out");
    j["junk"] = 1;
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(write_config(dir, "a.json", j)),
                         doctest::Contains("unknown field 'junk'"), ConfigError);

    j = kundur_config(dir / "out");
    j["probe"] = {{"bogus", 1}};
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(write_config(dir, "b.json", j)),
                         doctest::Contains("config.probe"), ConfigError);
}

TEST_CASE("config: missing files and bad methods are named") {
    const auto dir = fresh_dir("cfg_missing");

    auto j = kundur_config(dir / "out");
    j["case_path"] = (dir / "nope.json").string();
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(write_config(dir, "a.json", j)),
                         doctest::Contains("nope.json"), ConfigError);

    j = kundur_config(dir / "out");
    j["device_params"]["IBR1"] = (dir / "ghost.json").string();
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(write_config(dir, "b.json", j)),
                         doctest::Contains("parameter file for 'IBR1' not found"), ConfigError);

    j = kundur_config(dir / "out");
    j["method"] = "chirp";
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(write_config(dir, "c.json", j)),
                         doctest::Contains("config.method"), ConfigError);

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK_THROWS_WITH_AS((void)pipeline::load_scenario_config(dir / "broken.json"),
                         doctest::Contains("broken.json"), ConfigError);
}

TEST_CASE("benchmark pipeline writes the artifact set and a sane summary") {
    const auto dir = fresh_dir("bench_run");
    const auto c = pipeline::load_scenario_config(
        write_config(dir, "cfg.json", kundur_config(dir / "out")));

    const auto outcome = pipeline::run_pipeline(c);
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.sso_mode_count == 2);

    for (const char* name :
         {"operating_point.json", "system.json", "modal.json", "eigenvalues.csv",
          "severity.json", "summary.json", "heatmap.svg", "heatmap.csv", "bars.svg",
          "bars.csv", "scatter.svg", "scatter.csv"})
        CHECK(fs::exists(dir / "out" / name));

    const auto s = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(s["name"] == "kundur11");
    CHECK(s["method"] == "benchmark");
    CHECK(s["sso_mode_count"] == 2);
    const auto& m = s["least_damped_sso"];
    CHECK(m["frequency_hz"].get<double>() > 5.5);
    CHECK(m["frequency_hz"].get<double>() < 7.5);
    CHECK(m["damping_ratio"].get<double>() > 0.005);
    CHECK(m["damping_ratio"].get<double>() < 0.05);
    CHECK(m["severity_device"] == "IBR2");
    const std::set<std::string> top(m["top_devices"].begin(), m["top_devices"].end());
    CHECK(top == std::set<std::string>{"IBR1", "IBR2"});

    const auto sev = json::parse(slurp(dir / "out" / "severity.json"));
    CHECK(sev["severity"].size() == 11);
    // Area 1 load buses ring harder than any Area 2 bus.
    double a1_min = 1e9, a2_max = 0.0;
    for (int b : {5, 6, 7}) a1_min = std::min(a1_min, sev["severity"][std::to_string(b)].get<double>());
    for (int b : {9, 10, 11}) a2_max = std::max(a2_max, sev["severity"][std::to_string(b)].get<double>());
    CHECK(a1_min > a2_max);
}

TEST_CASE("pipeline output is deterministic and equals manual stage composition") {
    const auto dir = fresh_dir("determinism");
    const auto run = [&](const std::string& sub) {
        auto c = pipeline::load_scenario_config(
            write_config(dir, sub + ".json", kundur_config(dir / sub)));
        (void)pipeline::run_pipeline(c);
        return c;
    };
    run("a");
    run("b");
    check_identical_trees(dir / "a", dir / "b");

    // Stage-at-a-time composition, same bytes.
    auto c = pipeline::load_scenario_config(
        write_config(dir, "c.json", kundur_config(dir / "c")));
    pipeline::stage_powerflow(c);
    pipeline::stage_probe(c);
    pipeline::stage_fit(c);
    pipeline::stage_synth(c);
    pipeline::stage_modal(c);
    pipeline::stage_report(c);
    check_identical_trees(dir / "a", dir / "c");
}

TEST_CASE("estimated run stays within tolerance of its benchmark") {
    const auto dir = fresh_dir("estimated");

    auto jb = kundur_config(dir / "bench");
    (void)pipeline::run_pipeline(
        pipeline::load_scenario_config(write_config(dir, "bench.json", jb)));

    auto je = kundur_config(dir / "est");
    je["benchmark_mode"] = false;
    je["method"] = "multisine";
    je["seed"] = 7;
    // Light probing keeps the test quick; tolerances below are the loose ones.
    je["probe"] = {{"band_lo_hz", 0.2}, {"band_hi_hz", 100.0}, {"bins", 80},
                   {"record_time_s", 6.0}, {"settle_time_s", 2.0},
                   {"sample_rate_hz", 4000.0}};
    const auto ce = pipeline::load_scenario_config(write_config(dir, "est.json", je));
    const auto outcome = pipeline::run_pipeline(ce);
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.sso_mode_count == 2);

    for (const char* name : {"model_IBR1.json", "sigma_IBR1.csv", "system_benchmark.json",
                             "modal_benchmark.json", "responses"})
        CHECK(fs::exists(dir / "est" / name));
    const auto s = json::parse(slurp(dir / "est" / "summary.json"));
    CHECK(s["method"] == "multisine");
    CHECK(s["device_provenance"]["IBR1"] == "estimated");
    CHECK(s["device_provenance"]["L7"] == "static_load");

    const auto cmp = pipeline::compare_runs(dir / "est", dir / "bench");
    CHECK(cmp.case_name == "kundur11_modified.json");
    CHECK(cmp.pairs.size() == 2);
    CHECK(cmp.unpaired_a == 0);
    CHECK(cmp.unpaired_b == 0);
    for (const auto& p : cmp.pairs) {
        CHECK(p.dfreq_hz < 0.1);
        CHECK(p.ddamping < 0.02);
        CHECK(p.within_tolerance);
    }
    CHECK(cmp.top_devices_equal);
    CHECK(cmp.observability_spearman > 0.9);
    CHECK(cmp.all_within_tolerance);

    // Self-comparison is exact.
    const auto self = pipeline::compare_runs(dir / "est", dir / "est");
    CHECK(self.all_within_tolerance);
    CHECK(self.observability_spearman == doctest::Approx(1.0));
    for (const auto& p : self.pairs) CHECK(p.dfreq_hz == 0.0);

    const auto table = pipeline::format_table(cmp);
    CHECK(table.find("|df|") != std::string::npos);
    CHECK(table.find("kundur11") != std::string::npos);
    const auto jj = pipeline::to_json(cmp);
    CHECK(jj["pairs"].size() == cmp.pairs.size());
    CHECK(jj["all_within_tolerance"] == true);
}

TEST_CASE("compare rejects non-artifact directories and mismatched cases") {
    const auto dir = fresh_dir("cmp_errors");
    fs::create_directories(dir / "empty");
    CHECK_THROWS_WITH_AS((void)pipeline::compare_runs(dir / "empty", dir / "empty"),
                         doctest::Contains("is not a pipeline artifact directory"),
                         ConfigError);

    // Same physics, different case file name: refuse to pair them.
    (void)pipeline::run_pipeline(pipeline::load_scenario_config(
        write_config(dir, "a.json", kundur_config(dir / "a"))));
    fs::copy_file(case_dir() / "kundur11_modified.json", dir / "other_case.json");
    auto j = kundur_config(dir / "b");
    j["case_path"] = (dir / "other_case.json").string();
    (void)pipeline::run_pipeline(
        pipeline::load_scenario_config(write_config(dir, "b.json", j)));
    CHECK_THROWS_WITH_AS((void)pipeline::compare_runs(dir / "a", dir / "b"),
                         doctest::Contains("different cases"), ConfigError);
}

TEST_CASE("require_sso signals an empty screening band") {
    const auto dir = fresh_dir("no_sso");
    auto j = kundur_config(dir / "out");
    j["modal"] = {{"band_lo_hz", 20.0}, {"band_hi_hz", 45.0}};
    const auto c = pipeline::load_scenario_config(write_config(dir, "cfg.json", j));

    const auto outcome = pipeline::run_pipeline(c, true);
    CHECK(outcome.exit_code == 4);
    CHECK(outcome.sso_mode_count == 0);
    // Artifacts still exist; the reported mode falls back to least damped.
    CHECK(fs::exists(dir / "out" / "summary.json"));
}

TEST_CASE("step device defaults to the top participant") {
    const auto dir = fresh_dir("step_default");
    auto j = kundur_config(dir / "out");
    j.erase("step");
    const auto c = pipeline::load_scenario_config(write_config(dir, "cfg.json", j));
    (void)pipeline::run_pipeline(c);
    const auto sev = json::parse(slurp(dir / "out" / "severity.json"));
    CHECK(sev["device_id"] == "IBR1");
}
