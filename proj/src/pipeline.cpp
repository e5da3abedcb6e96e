#include "ssoscope/pipeline.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include "ssoscope/errors.hpp"
#include "ssoscope/fitting.hpp"
#include "ssoscope/ibr.hpp"
#include "ssoscope/json_io.hpp"
#include "ssoscope/probe.hpp"
#include "ssoscope/report.hpp"
#include "ssoscope/synthesis.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(path + ": unknown field '" + it.key() + "'");
}

double num_or(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError(std::string("config.") + key + ": expected a number");
    return j[key].get<double>();
}

int int_or(const json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer())
        throw ConfigError(std::string("config.") + key + ": expected an integer");
    return j[key].get<int>();
}

json parse_file(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("file not found: " + p.string());
    try {
        return json::parse(util::read_text_file(p));
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const json& j) { util::write_text_file(p, j.dump(2) + "\n"); }

// Artifact names, frozen: cmd_compare and the acceptance suite parse them.
constexpr const char* kOpFile = "operating_point.json";
constexpr const char* kSystemFile = "system.json";
constexpr const char* kSystemBenchFile = "system_benchmark.json";
constexpr const char* kModalFile = "modal.json";
constexpr const char* kModalBenchFile = "modal_benchmark.json";
constexpr const char* kEigCsv = "eigenvalues.csv";
constexpr const char* kEigBenchCsv = "eigenvalues_benchmark.csv";
constexpr const char* kSeverityFile = "severity.json";
constexpr const char* kSummaryFile = "summary.json";

std::vector<std::string> ibr_ids(const network::NetworkCase& c) {
    std::vector<std::string> out;
    for (const auto& d : c.devices)
        if (d.kind == network::DeviceKind::ibr) out.push_back(d.device_id);
    return out;
}

network::NetworkCase load_case_of(const ScenarioConfig& c) {
    auto nc = network::load_case(c.case_path);
    return nc;
}

network::OperatingPoint load_op(const ScenarioConfig& c) {
    const json j = parse_file(c.output_dir / kOpFile);
    network::OperatingPoint op;
    network::from_json(j, op);
    return op;
}

ibr::IbrParameters device_parameters(const ScenarioConfig& c, const std::string& device_id,
                                     const network::DeviceOperatingPoint& op) {
    auto it = c.device_params.find(device_id);
    if (it == c.device_params.end())
        throw ConfigError("no parameter file configured for device '" + device_id + "'");
    return ibr::with_operating_setpoints(ibr::load_ibr_parameters(it->second), op);
}

probe::PerturbationPlan probe_plan(const ScenarioConfig& c) {
    auto plan = probe::design_multisine({c.probe.band_lo_hz, c.probe.band_hi_hz}, c.probe.bins,
                                        c.probe.amplitude_pu, c.probe.record_time_s);
    plan.settle_time_s = c.probe.settle_time_s;
    plan.sample_rate_hz = c.probe.sample_rate_hz;
    return plan;
}

lti::FrequencyResponse measure_device(const ScenarioConfig& c, const network::NetworkCase& nc,
                                      const network::DeviceOperatingPoint& dop) {
    const auto params = device_parameters(c, dop.device_id, dop);
    probe::IbrTerminal bench(params, dop, nc.base_frequency_hz);
    const auto plan = probe_plan(c);
    if (c.method == "multisine") {
        const auto records = probe::run_axis_experiments(bench, dop, plan);
        return probe::extract_frequency_response(records, plan);
    }
    if (c.method == "sweep")
        return probe::sweep_single_sine(bench, dop, plan.bin_frequencies_hz, c.probe.amplitude_pu,
                                        c.probe.sample_rate_hz);
    // era: identify a realization from pulse records, then sample it on the
    // common grid so the downstream stages see one artifact shape.
    const auto pulses = probe::run_pulse_experiments(bench, dop, c.probe.pulse_sample_period_s,
                                                     c.probe.pulse_duration_s,
                                                     c.probe.pulse_height_pu,
                                                     c.probe.sample_rate_hz);
    const auto model = probe::era_identify(pulses, c.probe.era_order, c.probe.pulse_sample_period_s);
    lti::FrequencyResponse fr;
    fr.frequencies_hz = plan.bin_frequencies_hz;
    for (double f : fr.frequencies_hz) fr.samples.push_back(lti::evaluate(model, f));
    return fr;
}

// Device admittance block + provenance tags for the requested path. The
// severity stage rebuilds this from the same files the synthesis stage
// used, so both stages see one model.
std::pair<lti::StateSpaceModel, std::map<std::string, std::string>> build_y_m(
    const ScenarioConfig& c, const network::NetworkCase& nc, const network::OperatingPoint& op,
    bool estimated) {
    std::vector<std::pair<std::string, lti::StateSpaceModel>> blocks;
    std::map<std::string, std::string> provenance;
    for (const auto& d : nc.devices) {
        const auto& dop = op.device(d.device_id);
        if (d.kind == network::DeviceKind::load) {
            blocks.emplace_back(d.device_id, network::load_admittance_block(dop));
            continue;
        }
        if (estimated) {
            const fs::path model_path =
                c.output_dir / "fits" / (d.device_id + ".model.json");
            auto model = lti::realize(lti::pole_residue_from_json(parse_file(model_path)),
                                      d.device_id);
            const std::string bus = std::to_string(d.bus_id);
            model.input_ports = {{bus, lti::Axis::d}, {bus, lti::Axis::q}};
            model.output_ports = model.input_ports;
            blocks.emplace_back(d.device_id, model);
            provenance[d.device_id] = "estimated";
        } else {
            const auto params = device_parameters(c, d.device_id, dop);
            blocks.emplace_back(d.device_id,
                                ibr::linearize(params, dop, nc.base_frequency_hz, d.device_id));
            provenance[d.device_id] = "benchmark";
        }
    }
    return {synthesis::assemble_device_block(blocks), provenance};
}

struct ModalArtifacts {
    modal::ModalResult result;
    int report_mode = -1;  // least-damped band mode, else least-damped overall
};

ModalArtifacts analyze_system(const ScenarioConfig& c, const synthesis::SystemModel& sys,
                              const network::GridImpedance& grid) {
    ModalArtifacts out;
    out.result = modal::eigen_analysis(sys, {c.modal.band_lo_hz, c.modal.band_hi_hz},
                                       c.modal.damping_max);
    if (out.result.least_damped_sso >= 0) {
        out.report_mode = out.result.least_damped_sso;
    } else if (!out.result.modes.empty()) {
        int best = 0;
        for (int k = 1; k < static_cast<int>(out.result.modes.size()); ++k)
            if (out.result.modes[k].damping_ratio < out.result.modes[best].damping_ratio) best = k;
        out.report_mode = best;
    }
    if (out.report_mode >= 0)
        modal::observability(out.result.modes[out.report_mode], sys, grid.extended_output,
                             grid.extended_ports);
    return out;
}

std::string severity_device(const ScenarioConfig& c, const ModalArtifacts& m,
                            const network::OperatingPoint& op) {
    if (!c.step.device_id.empty()) return c.step.device_id;
    if (m.report_mode < 0) return {};
    const auto& part = m.result.modes[m.report_mode].participation_normalized;
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [id, v] : part) ranked.emplace_back(v, id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (const auto& [v, id] : ranked)
        if (std::abs(op.device(id).p_pu) > 1e-9) return id;
    return {};
}

int mode_for_report(const modal::ModalResult& r) {
    if (r.least_damped_sso >= 0) return r.least_damped_sso;
    if (r.modes.empty()) return -1;
    int best = 0;
    for (int k = 1; k < static_cast<int>(r.modes.size()); ++k)
        if (r.modes[k].damping_ratio < r.modes[best].damping_ratio) best = k;
    return best;
}

std::vector<std::pair<std::string, double>> ranked_devices(const modal::Mode& m) {
    std::vector<std::pair<std::string, double>> v(m.participation_normalized.begin(),
                                                  m.participation_normalized.end());
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return v;
}

std::vector<std::string> top_devices(const modal::Mode& m, std::size_t n) {
    std::vector<std::string> out;
    for (const auto& [id, v] : ranked_devices(m)) {
        out.push_back(id);
        if (out.size() == n) break;
    }
    return out;
}

}  // namespace

void ScenarioConfig::validate() const {
    if (case_path.empty()) throw ConfigError("config: case_path is required");
    if (!fs::exists(case_path)) throw ConfigError("case file not found: " + case_path.string());
    if (output_dir.empty()) throw ConfigError("config: output_dir is required");
    if (method != "multisine" && method != "sweep" && method != "era")
        throw ConfigError("config.method: '" + method +
                          "' is not one of multisine, sweep, era");
    for (const auto& [id, p] : device_params)
        if (!fs::exists(p))
            throw ConfigError("parameter file for '" + id + "' not found: " + p.string());
    if (probe.band_lo_hz <= 0.0 || probe.band_hi_hz <= probe.band_lo_hz)
        throw ConfigError("config.probe: band must satisfy 0 < lo < hi");
    if (fit.order_min < 1 || fit.order_max < fit.order_min)
        throw ConfigError("config.fit: need 1 <= order_min <= order_max");
    if (modal.band_lo_hz < 0.0 || modal.band_hi_hz <= modal.band_lo_hz)
        throw ConfigError("config.modal: band must satisfy 0 <= lo < hi");
    if (!(step.magnitude_fraction > 0.0))
        throw ConfigError("config.step: magnitude_fraction must be positive");
}

ScenarioConfig load_scenario_config(const fs::path& path) {
    const json j = parse_file(path);
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& s) {
        const fs::path p(s);
        return p.is_absolute() ? p : base / p;
    };
    check_keys(j,
               {"name", "case_path", "output_dir", "device_params", "method", "probe", "fit",
                "modal", "step", "benchmark_mode", "seed"},
               "config");
    ScenarioConfig c;
    c.name = j.value("name", path.stem().string());
    if (!j.contains("case_path")) throw ConfigError("config: case_path is required");
    c.case_path = resolve(j["case_path"].get<std::string>());
    if (!j.contains("output_dir")) throw ConfigError("config: output_dir is required");
    c.output_dir = resolve(j["output_dir"].get<std::string>());
    if (j.contains("device_params")) {
        if (!j["device_params"].is_object())
            throw ConfigError("config.device_params: expected an object");
        for (auto it = j["device_params"].begin(); it != j["device_params"].end(); ++it)
            c.device_params[it.key()] = resolve(it.value().get<std::string>());
    }
    c.method = j.value("method", std::string("multisine"));
    if (j.contains("probe")) {
        const json& p = j["probe"];
        check_keys(p,
                   {"band_lo_hz", "band_hi_hz", "bins", "amplitude_pu", "record_time_s",
                    "settle_time_s", "sample_rate_hz", "pulse_height_pu", "pulse_duration_s",
                    "pulse_sample_period_s", "era_order"},
                   "config.probe");
        c.probe.band_lo_hz = num_or(p, "band_lo_hz", c.probe.band_lo_hz);
        c.probe.band_hi_hz = num_or(p, "band_hi_hz", c.probe.band_hi_hz);
        c.probe.bins = int_or(p, "bins", c.probe.bins);
        c.probe.amplitude_pu = num_or(p, "amplitude_pu", c.probe.amplitude_pu);
        c.probe.record_time_s = num_or(p, "record_time_s", c.probe.record_time_s);
        c.probe.settle_time_s = num_or(p, "settle_time_s", c.probe.settle_time_s);
        c.probe.sample_rate_hz = num_or(p, "sample_rate_hz", c.probe.sample_rate_hz);
        c.probe.pulse_height_pu = num_or(p, "pulse_height_pu", c.probe.pulse_height_pu);
        c.probe.pulse_duration_s = num_or(p, "pulse_duration_s", c.probe.pulse_duration_s);
        c.probe.pulse_sample_period_s =
            num_or(p, "pulse_sample_period_s", c.probe.pulse_sample_period_s);
        c.probe.era_order = int_or(p, "era_order", c.probe.era_order);
    }
    if (j.contains("fit")) {
        const json& f = j["fit"];
        check_keys(f, {"order_min", "order_max", "rms_threshold", "max_iterations",
                       "start_pole_jitter"},
                   "config.fit");
        c.fit.order_min = int_or(f, "order_min", c.fit.order_min);
        c.fit.order_max = int_or(f, "order_max", c.fit.order_max);
        c.fit.rms_threshold = num_or(f, "rms_threshold", c.fit.rms_threshold);
        c.fit.max_iterations = int_or(f, "max_iterations", c.fit.max_iterations);
        c.fit.start_pole_jitter = num_or(f, "start_pole_jitter", c.fit.start_pole_jitter);
    }
    if (j.contains("modal")) {
        const json& m = j["modal"];
        check_keys(m, {"band_lo_hz", "band_hi_hz", "damping_max"}, "config.modal");
        c.modal.band_lo_hz = num_or(m, "band_lo_hz", c.modal.band_lo_hz);
        c.modal.band_hi_hz = num_or(m, "band_hi_hz", c.modal.band_hi_hz);
        c.modal.damping_max = num_or(m, "damping_max", c.modal.damping_max);
    }
    if (j.contains("step")) {
        const json& st = j["step"];
        check_keys(st, {"device_id", "magnitude_fraction", "horizon_s"}, "config.step");
        c.step.device_id = st.value("device_id", std::string());
        c.step.magnitude_fraction = num_or(st, "magnitude_fraction", c.step.magnitude_fraction);
        c.step.horizon_s = num_or(st, "horizon_s", c.step.horizon_s);
    }
    if (j.contains("benchmark_mode")) c.benchmark_mode = j["benchmark_mode"].get<bool>();
    if (j.contains("seed")) c.seed = j["seed"].get<unsigned long long>();
    c.validate();
    return c;
}

void stage_powerflow(const ScenarioConfig& c) {
    const auto nc = load_case_of(c);
    nc.validate();
    for (const std::string& id : ibr_ids(nc))
        if (!c.device_params.count(id))
            throw ConfigError("no parameter file configured for device '" + id + "'");
    const auto op = network::solve_power_flow(nc);
    fs::create_directories(c.output_dir);
    json j;
    network::to_json(j, op);
    write_json(c.output_dir / kOpFile, j);
}

void stage_probe(const ScenarioConfig& c) {
    if (c.benchmark_mode) return;
    const auto nc = load_case_of(c);
    const auto op = load_op(c);
    fs::create_directories(c.output_dir / "responses");
    std::vector<std::future<void>> tasks;
    for (const std::string& id : ibr_ids(nc)) {
        tasks.push_back(std::async(std::launch::async, [&, id] {
            const auto fr = measure_device(c, nc, op.device(id));
            probe::write_frequency_response_csv(c.output_dir / "responses" / (id + ".csv"), fr);
        }));
    }
    for (auto& t : tasks) t.get();
}

void stage_fit(const ScenarioConfig& c) {
    if (c.benchmark_mode) return;
    const auto nc = load_case_of(c);
    fs::create_directories(c.output_dir / "fits");
    fitting::FitOptions opts;
    opts.max_iterations = c.fit.max_iterations;
    opts.start_pole_jitter = c.fit.start_pole_jitter;
    opts.seed = c.seed;
    std::vector<std::future<void>> tasks;
    for (const std::string& id : ibr_ids(nc)) {
        tasks.push_back(std::async(std::launch::async, [&, id] {
            const auto fr = probe::read_frequency_response_csv(c.output_dir / "responses" /
                                                               (id + ".csv"));
            const auto [model, rep] =
                fitting::select_order(fr, c.fit.order_min, c.fit.order_max, c.fit.rms_threshold,
                                      opts);
            write_json(c.output_dir / "fits" / (id + ".model.json"), lti::to_json(model));
            json rj;
            rj["model_order"] = rep.model_order;
            rj["iterations_used"] = rep.iterations_used;
            rj["rms_relative_error"] = rep.rms_relative_error;
            rj["worst_point_error"] = rep.worst_point_error;
            rj["worst_point_frequency_hz"] = rep.worst_point_frequency_hz;
            rj["stability_flips"] = rep.stability_flips;
            rj["met_threshold"] = rep.met_threshold;
            write_json(c.output_dir / "fits" / (id + ".report.json"), rj);
            fitting::write_sigma_csv(c.output_dir / "fits" / (id + ".sigma.csv"),
                                     fitting::compare_sigma(model, fr));
        }));
    }
    for (auto& t : tasks) t.get();
}

void stage_synth(const ScenarioConfig& c) {
    const auto nc = load_case_of(c);
    const auto op = load_op(c);
    const auto grid = network::build_grid_model(nc);
    const auto [y_bench, prov_bench] = build_y_m(c, nc, op, false);
    if (c.benchmark_mode) {
        const auto sys = synthesis::synthesize(nc, grid.model, y_bench, prov_bench);
        write_json(c.output_dir / kSystemFile, synthesis::to_json(sys));
        return;
    }
    const auto [y_est, prov_est] = build_y_m(c, nc, op, true);
    const auto sys = synthesis::synthesize(nc, grid.model, y_est, prov_est);
    write_json(c.output_dir / kSystemFile, synthesis::to_json(sys));
    // Benchmark twin: the comparison target for the figures and for
    // cmd_compare, built from the same operating point.
    const auto sys_bench = synthesis::synthesize(nc, grid.model, y_bench, prov_bench);
    write_json(c.output_dir / kSystemBenchFile, synthesis::to_json(sys_bench));
}

void stage_modal(const ScenarioConfig& c) {
    const auto nc = load_case_of(c);
    const auto op = load_op(c);
    const auto grid = network::build_grid_model(nc);

    const auto sys = synthesis::system_from_json(parse_file(c.output_dir / kSystemFile));
    auto primary = analyze_system(c, sys, grid);
    write_json(c.output_dir / kModalFile, modal::to_json(primary.result));
    modal::write_eigen_scatter_csv(c.output_dir / kEigCsv, primary.result);

    json sev;
    sev["device_id"] = "";
    sev["magnitude_fraction"] = c.step.magnitude_fraction;
    sev["horizon_used_s"] = 0.0;
    sev["severity"] = json::object();
    sev["warnings"] = json::array();
    const std::string dev = severity_device(c, primary, op);
    if (!dev.empty()) {
        const auto [y_m, prov] = build_y_m(c, nc, op, !c.benchmark_mode);
        modal::StepSpec spec{dev, c.step.magnitude_fraction};
        const auto res =
            modal::step_severity(sys, y_m, op, grid.extended_output, grid.extended_ports, spec,
                                 c.step.horizon_s, {c.modal.band_lo_hz, c.modal.band_hi_hz});
        sev["device_id"] = dev;
        sev["horizon_used_s"] = res.horizon_used_s;
        json sm = json::object();
        for (const auto& [bus, v] : res.severity) sm[std::to_string(bus)] = v;
        sev["severity"] = sm;
        sev["warnings"] = res.warnings;
    } else {
        sev["warnings"].push_back("no step device available; severity skipped");
    }
    write_json(c.output_dir / kSeverityFile, sev);

    if (!c.benchmark_mode) {
        const auto sys_bench =
            synthesis::system_from_json(parse_file(c.output_dir / kSystemBenchFile));
        auto bench = analyze_system(c, sys_bench, grid);
        write_json(c.output_dir / kModalBenchFile, modal::to_json(bench.result));
        modal::write_eigen_scatter_csv(c.output_dir / kEigBenchCsv, bench.result);
    }
}

void stage_report(const ScenarioConfig& c) {
    const auto nc = load_case_of(c);
    const auto primary = modal::modal_from_json(parse_file(c.output_dir / kModalFile));
    const bool has_bench = fs::exists(c.output_dir / kModalBenchFile);
    modal::ModalResult bench;
    if (has_bench) bench = modal::modal_from_json(parse_file(c.output_dir / kModalBenchFile));

    const json sev = parse_file(c.output_dir / kSeverityFile);
    const json sys_j = parse_file(c.output_dir / kSystemFile);

    const int rm = mode_for_report(primary);
    json warnings = sev["warnings"];

    if (rm >= 0) {
        const modal::Mode& mode = primary.modes[rm];
        const std::string title =
            c.name + ": mode " + util::fmt_fixed(mode.frequency_hz, 2) + " Hz, damping " +
            util::fmt_fixed(mode.damping_ratio, 3);
        const auto spec = report::heatmap_spec(nc, mode, title);
        report::write_artifact(report::render_heatmap(spec), c.output_dir / "heatmap.svg",
                               c.output_dir / "heatmap.csv");

        // Bar chart over the buses that host no inverter, ascending id.
        std::set<int> ibr_buses;
        for (const auto& d : nc.devices)
            if (d.kind == network::DeviceKind::ibr) ibr_buses.insert(d.bus_id);
        std::vector<int> buses;
        for (const auto& b : nc.buses)
            if (!ibr_buses.count(b.id)) buses.push_back(b.id);
        std::sort(buses.begin(), buses.end());
        if (!buses.empty()) {
            const modal::Mode* bmode = nullptr;
            if (has_bench) {
                const int bm = mode_for_report(bench);
                if (bm >= 0 && !bench.modes[bm].obs_vmag_per_bus.empty())
                    bmode = &bench.modes[bm];
            }
            auto series_of = [&](const std::map<int, double>& m) {
                std::vector<double> v;
                for (int b : buses) v.push_back(m.count(b) ? m.at(b) : 0.0);
                return v;
            };
            std::map<int, double> sev_map;
            for (auto it = sev["severity"].begin(); it != sev["severity"].end(); ++it)
                sev_map[std::stoi(it.key())] = it.value().get<double>();
            const auto est = series_of(mode.obs_vmag_per_bus);
            const auto act = bmode ? series_of(bmode->obs_vmag_per_bus) : est;
            report::write_artifact(
                report::render_bars(act, est, series_of(sev_map), buses),
                c.output_dir / "bars.svg", c.output_dir / "bars.csv");
        }

        std::vector<modal::ModalResult> results = {primary};
        std::vector<std::string> labels = {c.benchmark_mode ? "benchmark" : "estimated"};
        if (has_bench) {
            results.push_back(bench);
            labels.push_back("benchmark");
        }
        report::write_artifact(report::render_eigen_scatter(results, labels),
                               c.output_dir / "scatter.svg", c.output_dir / "scatter.csv");
    } else {
        warnings.push_back("no dynamic modes; figures skipped");
    }

    json summary;
    summary["schema_version"] = 1;
    summary["name"] = c.name;
    summary["case"] = c.case_path.filename().string();
    summary["method"] = c.benchmark_mode ? "benchmark" : c.method;
    summary["benchmark_mode"] = c.benchmark_mode;
    summary["seed"] = c.seed;
    summary["mode_count"] = static_cast<int>(primary.modes.size());
    summary["sso_mode_count"] = static_cast<int>(primary.sso_indices.size());
    summary["device_provenance"] =
        sys_j.contains("provenance") ? sys_j["provenance"] : json::object();
    summary["warnings"] = warnings;
    if (primary.least_damped_sso >= 0) {
        const modal::Mode& m = primary.modes[primary.least_damped_sso];
        json lm;
        lm["frequency_hz"] = m.frequency_hz;
        lm["damping_ratio"] = m.damping_ratio;
        lm["eigenvalue"] = lti::to_json(m.eigenvalue);
        lm["top_devices"] = top_devices(m, 2);
        std::vector<std::pair<double, int>> obs;
        for (const auto& [bus, v] : m.obs_vmag_per_bus) obs.emplace_back(v, bus);
        std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        json tb = json::array();
        for (std::size_t k = 0; k < obs.size() && k < 3; ++k) tb.push_back(obs[k].second);
        lm["top_buses"] = tb;
        lm["severity_device"] = sev["device_id"];
        summary["least_damped_sso"] = lm;
    } else {
        summary["least_damped_sso"] = nullptr;
    }
    write_json(c.output_dir / kSummaryFile, summary);
}

PipelineOutcome run_pipeline(const ScenarioConfig& c, bool require_sso) {
    c.validate();
    struct Stage {
        const char* name;
        void (*fn)(const ScenarioConfig&);
    };
    const Stage stages[] = {{"powerflow", stage_powerflow}, {"probe", stage_probe},
                            {"fit", stage_fit},             {"synth", stage_synth},
                            {"modal", stage_modal},         {"report", stage_report}};
    for (const auto& st : stages) {
        try {
            st.fn(c);
        } catch (const NumericalError& e) {
            throw NumericalError("stage " + std::string(st.name) + ": " + e.what());
        }
    }
    PipelineOutcome out;
    out.summary_path = c.output_dir / kSummaryFile;
    const json summary = parse_file(out.summary_path);
    out.sso_mode_count = summary["sso_mode_count"].get<int>();
    if (require_sso && out.sso_mode_count == 0) out.exit_code = 4;
    return out;
}

CompareReport compare_runs(const fs::path& dir_a, const fs::path& dir_b, double tol_freq_hz,
                           double tol_damping) {
    auto load_pair = [](const fs::path& dir) {
        if (!fs::exists(dir / kSummaryFile) || !fs::exists(dir / kModalFile))
            throw ConfigError(dir.string() + " is not a pipeline artifact directory");
        return std::make_pair(parse_file(dir / kSummaryFile),
                              modal::modal_from_json(parse_file(dir / kModalFile)));
    };
    const auto [sum_a, modal_a] = load_pair(dir_a);
    const auto [sum_b, modal_b] = load_pair(dir_b);
    if (sum_a["case"] != sum_b["case"])
        throw ConfigError("different cases: " + sum_a["case"].get<std::string>() + " vs " +
                          sum_b["case"].get<std::string>());

    CompareReport r;
    r.case_name = sum_a["case"].get<std::string>();
    auto label = [](const json& s) {
        return s["name"].get<std::string>() +
               (s["benchmark_mode"].get<bool>() ? " (benchmark)" : " (estimated)");
    };
    r.label_a = label(sum_a);
    r.label_b = label(sum_b);
    r.tol_freq_hz = tol_freq_hz;
    r.tol_damping = tol_damping;

    std::vector<const modal::Mode*> a, b;
    for (int k : modal_a.sso_indices) a.push_back(&modal_a.modes[k]);
    for (int k : modal_b.sso_indices) b.push_back(&modal_b.modes[k]);
    std::vector<bool> used_b(b.size(), false);
    if (!a.empty() && !b.empty()) {
        std::vector<std::vector<double>> cost(a.size(), std::vector<double>(b.size()));
        for (size_t i = 0; i < a.size(); ++i)
            for (size_t j = 0; j < b.size(); ++j)
                cost[i][j] = std::abs(a[i]->eigenvalue - b[j]->eigenvalue);
        const auto match = util::min_cost_assignment(cost);
        for (size_t i = 0; i < a.size(); ++i) {
            if (match[i] < 0) {
                ++r.unpaired_a;
                continue;
            }
            used_b[static_cast<size_t>(match[i])] = true;
            const auto* q = b[static_cast<size_t>(match[i])];
            ModePair p;
            p.freq_a_hz = a[i]->frequency_hz;
            p.damping_a = a[i]->damping_ratio;
            p.freq_b_hz = q->frequency_hz;
            p.damping_b = q->damping_ratio;
            p.dfreq_hz = std::abs(p.freq_a_hz - p.freq_b_hz);
            p.ddamping = std::abs(p.damping_a - p.damping_b);
            p.within_tolerance = p.dfreq_hz <= tol_freq_hz && p.ddamping <= tol_damping;
            r.pairs.push_back(p);
        }
    } else {
        r.unpaired_a = static_cast<int>(a.size());
    }
    for (bool u : used_b)
        if (!u) ++r.unpaired_b;

    const int rma = mode_for_report(modal_a);
    const int rmb = mode_for_report(modal_b);
    if (rma >= 0) r.top_devices_a = top_devices(modal_a.modes[rma], 2);
    if (rmb >= 0) r.top_devices_b = top_devices(modal_b.modes[rmb], 2);
    r.top_devices_equal =
        std::set<std::string>(r.top_devices_a.begin(), r.top_devices_a.end()) ==
        std::set<std::string>(r.top_devices_b.begin(), r.top_devices_b.end());

    if (rma >= 0 && rmb >= 0) {
        const auto& oa = modal_a.modes[rma].obs_vmag_per_bus;
        const auto& ob = modal_b.modes[rmb].obs_vmag_per_bus;
        std::vector<double> va, vb;
        for (const auto& [bus, v] : oa) {
            auto it = ob.find(bus);
            if (it == ob.end()) continue;
            va.push_back(v);
            vb.push_back(it->second);
        }
        if (va.size() >= 2) r.observability_spearman = util::spearman(va, vb);
    }
    r.all_within_tolerance = r.unpaired_a == 0 && r.unpaired_b == 0 &&
                             std::all_of(r.pairs.begin(), r.pairs.end(),
                                         [](const ModePair& p) { return p.within_tolerance; });
    return r;
}

json to_json(const CompareReport& r) {
    json j;
    j["case"] = r.case_name;
    j["label_a"] = r.label_a;
    j["label_b"] = r.label_b;
    json pairs = json::array();
    for (const auto& p : r.pairs) {
        json pj;
        pj["freq_a_hz"] = p.freq_a_hz;
        pj["damping_a"] = p.damping_a;
        pj["freq_b_hz"] = p.freq_b_hz;
        pj["damping_b"] = p.damping_b;
        pj["dfreq_hz"] = p.dfreq_hz;
        pj["ddamping"] = p.ddamping;
        pj["within_tolerance"] = p.within_tolerance;
        pairs.push_back(pj);
    }
    j["pairs"] = pairs;
    j["unpaired_a"] = r.unpaired_a;
    j["unpaired_b"] = r.unpaired_b;
    j["top_devices_a"] = r.top_devices_a;
    j["top_devices_b"] = r.top_devices_b;
    j["top_devices_equal"] = r.top_devices_equal;
    j["observability_spearman"] = r.observability_spearman;
    j["tol_freq_hz"] = r.tol_freq_hz;
    j["tol_damping"] = r.tol_damping;
    j["all_within_tolerance"] = r.all_within_tolerance;
    return j;
}

std::string format_table(const CompareReport& r) {
    std::ostringstream s;
    s << "case: " << r.case_name << "\n";
    s << "a: " << r.label_a << "\nb: " << r.label_b << "\n";
    s << "band-mode pairs (|df| tol " << util::fmt_double(r.tol_freq_hz) << " Hz, |dz| tol "
      << util::fmt_double(r.tol_damping) << "):\n";
    s << "  f_a[Hz]   zeta_a    f_b[Hz]   zeta_b    |df|[Hz]  |dzeta|   ok\n";
    for (const auto& p : r.pairs) {
        auto col = [](double v) {
            std::string t = util::fmt_fixed(v, 4);
            t.resize(10, ' ');
            return t;
        };
        s << "  " << col(p.freq_a_hz) << col(p.damping_a) << col(p.freq_b_hz) << col(p.damping_b)
          << col(p.dfreq_hz) << col(p.ddamping) << (p.within_tolerance ? "yes" : "NO") << "\n";
    }
    s << "unpaired: a=" << r.unpaired_a << " b=" << r.unpaired_b << "\n";
    auto join = [](const std::vector<std::string>& v) {
        std::string t;
        for (const auto& x : v) t += (t.empty() ? "" : ", ") + x;
        return t.empty() ? std::string("-") : t;
    };
    s << "top devices: a={" << join(r.top_devices_a) << "} b={" << join(r.top_devices_b)
      << "} equal=" << (r.top_devices_equal ? "yes" : "no") << "\n";
    s << "observability spearman: " << util::fmt_fixed(r.observability_spearman, 4) << "\n";
    s << "within tolerance: " << (r.all_within_tolerance ? "yes" : "no") << "\n";
    return s.str();
}

}  // namespace ssoscope::pipeline
