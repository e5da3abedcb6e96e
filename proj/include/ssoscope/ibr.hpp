#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "ssoscope/lti.hpp"
#include "ssoscope/network.hpp"

namespace ssoscope::ibr {

enum class IbrKind { gfl, gfm };

struct PiGains {
    double kp = 0.0;
    double ki = 0.0;
};

// Reference model parameters. GFL: synchronous-reference-frame PLL, outer
// P/Q PI loops, inner current PI through an RL filter. GFM: P-f droop,
// Q-V droop into a terminal-voltage PI, same inner loop and filter.
struct IbrParameters {
    IbrKind kind = IbrKind::gfl;
    double r_f = 0.0;  // filter resistance, pu
    double l_f = 0.0;  // filter reactance at f0, pu, > 0
    PiGains current_control;
    PiGains pll;          // GFL only
    PiGains outer_power;  // GFL only, shared by the P and Q loops
    double m_p = 0.0;     // GFM: rad/s per pu power
    double n_q = 0.0;     // GFM: pu voltage per pu reactive power
    PiGains voltage_control;  // GFM only
    double p_ref = 0.0;
    double q_ref = 0.0;
    double v_ref = 1.0;
    double current_limit = 0.0;  // pu, > 0

    void validate() const;
};

IbrParameters load_ibr_parameters(const std::filesystem::path& path);

// Copy of the parameters whose set-points reproduce the solved terminal
// conditions, so the device holds the power-flow operating point.
IbrParameters with_operating_setpoints(const IbrParameters& p,
                                       const network::DeviceOperatingPoint& op);

// Uniformly sampled named channels. The terminal convention is: v_d/v_q
// are the bus voltage in the synchronous frame, i_d/i_q the current
// flowing INTO the device (a passive load has current in phase with
// voltage).
struct TimeSeries {
    double sample_period_s = 0.0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;

    int length() const;
    double duration_s() const;
    const std::vector<double>& channel(const std::string& name) const;
    std::vector<double>& channel(const std::string& name);
    void add_channel(const std::string& name, int length);
    void validate() const;
};

// CSV with header t,<channel names...>; time column regenerated from the
// sample period on write and checked for uniformity on read.
void write_timeseries_csv(const std::filesystem::path& path, const TimeSeries& ts);
TimeSeries read_timeseries_csv(const std::filesystem::path& path);

// How the continuous integrator sees the sampled input between samples.
enum class InputHold { linear, previous };

// Ideal-voltage-source bench: the waveform (channels v_d, v_q) is imposed
// at the terminal, the device responds from its equilibrium, and the
// terminal current is recorded. Fixed-step RK4 at the waveform sample
// period. The waveform must start at the operating-point voltage within
// 1e-6 pu. Throws NonlinearExcursion when the filter current magnitude
// exceeds the current limit.
TimeSeries simulate_terminal(const IbrParameters& p, const network::DeviceOperatingPoint& op,
                             double f0_hz, const TimeSeries& v_waveform,
                             InputHold hold = InputHold::linear);

// Small-signal admittance at the operating point: inputs are the terminal
// voltage deviations (d, q), outputs the into-device current deviations,
// states tagged with device_id. Central finite differences with relative
// step 1e-6 floored at 1e-8.
lti::StateSpaceModel linearize(const IbrParameters& p, const network::DeviceOperatingPoint& op,
                               double f0_hz, const std::string& device_id);

// Exact solved equilibrium state (exposed for integration accuracy tests).
Eigen::VectorXd equilibrium_state(const IbrParameters& p,
                                  const network::DeviceOperatingPoint& op, double f0_hz);
std::vector<std::string> state_names(const IbrParameters& p);

}  // namespace ssoscope::ibr
