#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssoscope/ibr.hpp"
#include "ssoscope/lti.hpp"
#include "ssoscope/network.hpp"

namespace ssoscope::probe {

// Multi-sine experiment description. Every bin frequency is an exact
// integer multiple of 1/record_time_s so the record window holds whole
// periods of each tone.
struct PerturbationPlan {
    std::pair<double, double> band_hz{0.0, 0.0};
    std::vector<double> bin_frequencies_hz;
    std::vector<double> amplitude_pu;  // one entry per bin
    std::vector<double> phases_rad;    // one entry per bin
    double settle_time_s = 5.0;
    double record_time_s = 20.0;
    double sample_rate_hz = 10000.0;

    void validate() const;
};

nlohmann::json to_json(const PerturbationPlan& plan);
PerturbationPlan plan_from_json(const nlohmann::json& j);

// Log-spaced bins snapped to the record grid and de-duplicated, Schroeder
// phases to keep the crest factor down. The lowest admissible bin is one
// full period per record.
PerturbationPlan design_multisine(std::pair<double, double> band_hz, int n_bins,
                                  double amplitude_pu = 1e-3, double record_time_s = 20.0);

// A device under test: given a terminal voltage waveform (channels v_d,
// v_q), produce the current drawn from the source (channels i_d, i_q,
// into-device sign). Implementations start from their own equilibrium.
class BlackBoxTerminal {
  public:
    virtual ~BlackBoxTerminal() = default;
    virtual ibr::TimeSeries respond(const ibr::TimeSeries& v_waveform,
                                    ibr::InputHold hold) = 0;
};

// Bench around the nonlinear converter models.
class IbrTerminal : public BlackBoxTerminal {
  public:
    IbrTerminal(ibr::IbrParameters params, network::DeviceOperatingPoint op, double f0_hz);
    ibr::TimeSeries respond(const ibr::TimeSeries& v_waveform, ibr::InputHold hold) override;

  private:
    ibr::IbrParameters params_;
    network::DeviceOperatingPoint op_;
    double f0_hz_;
};

// Exact bench for a linear model: the deviation from the operating point
// is integrated with the matching discrete-time solution (first-order hold
// or zero-order hold), so records carry no integration error.
class LinearTerminal : public BlackBoxTerminal {
  public:
    LinearTerminal(lti::StateSpaceModel model, network::DeviceOperatingPoint op);
    ibr::TimeSeries respond(const ibr::TimeSeries& v_waveform, ibr::InputHold hold) override;

  private:
    lti::StateSpaceModel model_;
    network::DeviceOperatingPoint op_;
};

// Two experiments with the plan's perturbation superimposed on v_d, then
// on v_q, both riding on the operating-point voltage. Only the trailing
// record_time_s window is kept; each record carries v_d, v_q, i_d, i_q.
std::pair<ibr::TimeSeries, ibr::TimeSeries> run_axis_experiments(
    BlackBoxTerminal& device, const network::DeviceOperatingPoint& op,
    const PerturbationPlan& plan);

// Per-bin ratio of current to voltage spectra, solved as a 2x2 system from
// the two experiments. Currents keep the into-device sign of the records.
lti::FrequencyResponse extract_frequency_response(
    const std::pair<ibr::TimeSeries, ibr::TimeSeries>& records, const PerturbationPlan& plan);

// One two-axis experiment per frequency, each record window an integer
// number of periods. Same output convention as extract_frequency_response.
// sample_rate_hz == 0 picks max(10 kHz, 20 f) per frequency.
lti::FrequencyResponse sweep_single_sine(BlackBoxTerminal& device,
                                         const network::DeviceOperatingPoint& op,
                                         const std::vector<double>& frequencies_hz,
                                         double amplitude_pu = 1e-3,
                                         double sample_rate_hz = 0.0);

// Response to a one-sample voltage pulse on each axis, recorded at
// sample_period_s (an integer multiple of the bench step), returned as
// deviation records normalized to unit pulse area.
std::pair<ibr::TimeSeries, ibr::TimeSeries> run_pulse_experiments(
    BlackBoxTerminal& device, const network::DeviceOperatingPoint& op, double sample_period_s,
    double duration_s, double pulse_height_pu = 1e-3, double bench_rate_hz = 10000.0);

struct EraInfo {
    int effective_order = 0;
    bool rank_deficient = false;       // requested order exceeded the Hankel rank
    std::vector<double> singular_values;  // leading Hankel singular values
};

// Eigensystem realization from unit-area pulse records: block Hankel of
// the Markov parameters, SVD truncation at model_order or at singular
// value ratio 1e-8 (whichever is smaller), then conversion to continuous
// time through the matrix logarithm. Discrete eigenvalues on the negative
// real axis have no real logarithm and raise an error.
lti::StateSpaceModel era_identify(const std::pair<ibr::TimeSeries, ibr::TimeSeries>& pulse_records,
                                  int model_order, double sample_period_s,
                                  EraInfo* info = nullptr);

void write_frequency_response_csv(const std::filesystem::path& path,
                                  const lti::FrequencyResponse& fr);
lti::FrequencyResponse read_frequency_response_csv(const std::filesystem::path& path);

}  // namespace ssoscope::probe
