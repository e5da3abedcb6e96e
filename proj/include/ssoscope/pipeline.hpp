#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssoscope/modal.hpp"
#include "ssoscope/network.hpp"

namespace ssoscope::pipeline {

// Excitation settings shared by the three estimation families. The
// multisine and sweep families use the log-spaced bin grid directly; the
// pulse family identifies a state-space model and samples it on the same
// grid so every method hands the fitter an identical artifact shape.
struct ProbeSettings {
    double band_lo_hz = 0.1;
    double band_hi_hz = 100.0;
    int bins = 200;
    double amplitude_pu = 1e-4;
    double record_time_s = 20.0;
    double settle_time_s = 5.0;
    double sample_rate_hz = 10000.0;
    double pulse_height_pu = 1e-4;
    double pulse_duration_s = 2.0;
    double pulse_sample_period_s = 1e-3;
    int era_order = 12;
};

struct FitSettings {
    int order_min = 2;
    int order_max = 12;
    double rms_threshold = 1e-5;
    int max_iterations = 30;
    double start_pole_jitter = 0.0;  // scaled by --seed when nonzero
};

struct ModalSettings {
    double band_lo_hz = 1.0;
    double band_hi_hz = 45.0;
    double damping_max = 0.1;
};

struct StepSettings {
    // Empty device_id picks the top-participating device of the reported
    // mode once the modal stage knows it.
    std::string device_id;
    double magnitude_fraction = 0.05;
    double horizon_s = 10.0;
};

struct ScenarioConfig {
    std::string name;
    std::filesystem::path case_path;
    std::map<std::string, std::filesystem::path> device_params;  // per IBR
    std::string method = "multisine";  // multisine | sweep | era
    ProbeSettings probe;
    FitSettings fit;
    ModalSettings modal;
    StepSettings step;
    std::filesystem::path output_dir;
    bool benchmark_mode = false;  // linearized devices, no estimation
    unsigned long long seed = 0;

    void validate() const;
};

// Strict parse; relative paths resolve against the config file's
// directory. Unknown fields are rejected.
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

// Stage entry points. Each one reads only the case/config and its
// predecessors' files under output_dir, and writes its own artifacts, so
// running them in sequence is byte-equivalent to run_pipeline.
void stage_powerflow(const ScenarioConfig& c);
void stage_probe(const ScenarioConfig& c);   // no-op in benchmark mode
void stage_fit(const ScenarioConfig& c);     // no-op in benchmark mode
void stage_synth(const ScenarioConfig& c);
void stage_modal(const ScenarioConfig& c);
void stage_report(const ScenarioConfig& c);

struct PipelineOutcome {
    int exit_code = 0;  // 0 done; 4 when require_sso found nothing
    int sso_mode_count = 0;
    std::filesystem::path summary_path;
};

// Full stage sequence. Numerical failures are rethrown with the failing
// stage named; configuration problems surface unchanged.
PipelineOutcome run_pipeline(const ScenarioConfig& c, bool require_sso = false);

struct ModePair {
    double freq_a_hz = 0.0, damping_a = 0.0;
    double freq_b_hz = 0.0, damping_b = 0.0;
    double dfreq_hz = 0.0, ddamping = 0.0;
    bool within_tolerance = false;
};

struct CompareReport {
    std::string case_name;
    std::string label_a, label_b;
    std::vector<ModePair> pairs;  // band modes matched by eigenvalue distance
    int unpaired_a = 0, unpaired_b = 0;
    std::vector<std::string> top_devices_a, top_devices_b;
    bool top_devices_equal = false;
    double observability_spearman = 0.0;  // least-damped band mode, shared buses
    double tol_freq_hz = 0.1;
    double tol_damping = 0.02;
    bool all_within_tolerance = false;
};

// Reads summary.json + modal.json from two artifact directories produced
// by runs of the same case (typically estimated vs. benchmark).
CompareReport compare_runs(const std::filesystem::path& dir_a,
                           const std::filesystem::path& dir_b, double tol_freq_hz = 0.1,
                           double tol_damping = 0.02);

nlohmann::json to_json(const CompareReport& r);
std::string format_table(const CompareReport& r);

}  // namespace ssoscope::pipeline
