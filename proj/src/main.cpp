#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ssoscope/errors.hpp"
#include "ssoscope/pipeline.hpp"
#include "ssoscope/util.hpp"

namespace {

struct CommonOpts {
    std::string config;
    bool benchmark = false;
    std::string out;
    std::string method;
    long long seed = -1;  // negative: keep the config's seed
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "scenario configuration JSON")->required();
    cmd->add_flag("--benchmark", o.benchmark,
                  "use linearized device models instead of estimation");
    cmd->add_option("--out", o.out, "override the output directory");
    cmd->add_option("--method", o.method, "override the estimation family (multisine|sweep|era)");
    cmd->add_option("--seed", o.seed, "override the reproducibility seed");
}

ssoscope::pipeline::ScenarioConfig load_with_overrides(const CommonOpts& o) {
    auto c = ssoscope::pipeline::load_scenario_config(o.config);
    if (o.benchmark) c.benchmark_mode = true;
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.method.empty()) c.method = o.method;
    if (o.seed >= 0) c.seed = static_cast<unsigned long long>(o.seed);
    c.validate();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace ssoscope;

    CLI::App app{"black-box converter admittance estimation, closed-loop synthesis and "
                 "sub-synchronous oscillation localization"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool require_sso = false;

    CLI::App* cmd_pipeline = app.add_subcommand("pipeline", "run every stage end to end");
    add_common(cmd_pipeline, opts);
    cmd_pipeline->add_flag("--require-sso", require_sso,
                           "exit 4 when no band mode survives screening");

    for (const char* name : {"powerflow", "probe", "fit", "synth", "modal", "heatmap"})
        add_common(app.add_subcommand(
                       name, std::string("run the ") + name + " stage against prior artifacts"),
                   opts);

    std::string dir_a, dir_b, compare_json;
    double tol_freq = 0.1, tol_damping = 0.02;
    CLI::App* cmd_compare =
        app.add_subcommand("compare", "pair band modes between two artifact directories");
    cmd_compare->add_option("dir_a", dir_a, "first artifact directory")->required();
    cmd_compare->add_option("dir_b", dir_b, "second artifact directory")->required();
    cmd_compare->add_option("--tol-freq", tol_freq, "frequency pairing tolerance, Hz");
    cmd_compare->add_option("--tol-damping", tol_damping, "damping-ratio pairing tolerance");
    cmd_compare->add_option("--json", compare_json, "also write the report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_compare->parsed()) {
            const auto report = pipeline::compare_runs(dir_a, dir_b, tol_freq, tol_damping);
            std::cout << pipeline::format_table(report);
            if (!compare_json.empty())
                util::write_text_file(compare_json, pipeline::to_json(report).dump(2) + "\n");
            return 0;
        }

        const auto config = load_with_overrides(opts);
        if (cmd_pipeline->parsed()) {
            const auto outcome = pipeline::run_pipeline(config, require_sso);
            std::cerr << "pipeline: " << outcome.sso_mode_count
                      << " band mode(s); summary at " << outcome.summary_path.string() << "\n";
            return outcome.exit_code;
        }
        const std::string stage = app.get_subcommands().front()->get_name();
        if (stage == "powerflow") pipeline::stage_powerflow(config);
        else if (stage == "probe") pipeline::stage_probe(config);
        else if (stage == "fit") pipeline::stage_fit(config);
        else if (stage == "synth") pipeline::stage_synth(config);
        else if (stage == "modal") pipeline::stage_modal(config);
        else if (stage == "heatmap") pipeline::stage_report(config);
        std::cerr << stage << ": done\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}
