#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssoscope/lti.hpp"

namespace ssoscope::network {

enum class DeviceKind { ibr, load };

// Control family of an IBR device when the case file refines "IBR" into
// "GFL" or "GFM". Drives the default slack selection.
enum class IbrFamily { unspecified, gfl, gfm };

struct BusSpec {
    int id = 0;
    double shunt_b_pu = 0.0;  // capacitive susceptance at f0
    double shunt_g_pu = 0.0;  // parallel conductance, optional in the file
    double x_coord = 0.0;
    double y_coord = 0.0;
    std::string area_label;
};

struct BranchSpec {
    int from_bus = 0;
    int to_bus = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;  // series reactance at f0, > 0
    double b_pu = 0.0;  // total line charging, split 50/50
    int parallel_count = 1;
};

struct DeviceSpec {
    std::string device_id;
    int bus_id = 0;
    DeviceKind kind = DeviceKind::ibr;
    IbrFamily family = IbrFamily::unspecified;
    double p_set_pu = 0.0;  // IBR: generation; LOAD: consumption
    double q_set_pu = 0.0;
    std::optional<double> v_set_pu;
};

struct NetworkCase {
    double base_mva = 100.0;
    double base_frequency_hz = 60.0;
    // Capacitive susceptance assigned to a bus that would otherwise carry
    // none, so every bus voltage stays a dynamic state.
    double default_shunt_b = 1e-4;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<DeviceSpec> devices;
    std::optional<std::string> slack_device;

    void validate() const;

    double omega0() const;
    int bus_index(int id) const;  // ConfigError when the id is unknown
    const DeviceSpec& device(const std::string& device_id) const;

    // Total capacitive susceptance seen at a bus: explicit shunt plus half
    // the charging of each incident branch (times parallel_count), falling
    // back to default_shunt_b when that sum is zero.
    double total_shunt_b(int bus_id) const;

    // slack_device if set, otherwise the first GFM device in file order.
    std::string resolve_slack() const;
};

NetworkCase load_case(const std::filesystem::path& path);

struct DeviceOperatingPoint {
    std::string device_id;
    int bus_id = 0;
    // Injection convention: positive p_pu/q_pu delivers power into the
    // network; i_d/i_q are the injected current components. Loads show up
    // with negative p_pu here.
    double p_pu = 0.0;
    double q_pu = 0.0;
    double v_d = 0.0;
    double v_q = 0.0;
    double i_d = 0.0;
    double i_q = 0.0;

    double v_mag() const;
};

struct OperatingPoint {
    std::vector<int> bus_ids;
    std::vector<double> v_mag_pu;
    std::vector<double> v_angle_rad;
    std::vector<DeviceOperatingPoint> devices;
    double max_mismatch_pu = 0.0;

    const DeviceOperatingPoint& device(const std::string& device_id) const;
    int bus_slot(int bus_id) const;
};

void to_json(nlohmann::json& j, const OperatingPoint& op);
void from_json(const nlohmann::json& j, OperatingPoint& op);

// Newton-Raphson in polar form. Slack bus comes from resolve_slack();
// buses hosting a device with v_set_pu hold voltage magnitude (PV),
// everything else is PQ. Residual tolerance 1e-8 pu, at most 50 steps.
OperatingPoint solve_power_flow(const NetworkCase& c);

struct GridImpedance {
    // Inputs: injected current (d,q) per device, in case file device
    // order. Outputs: the hosting bus voltage (d,q) per device. States:
    // branch currents then bus voltages, all tagged "network"; D = 0.
    lti::StateSpaceModel model;
    // Voltage (d,q) of every bus over the same state vector, for readouts
    // at non-device buses.
    Eigen::MatrixXd extended_output;
    std::vector<lti::PortLabel> extended_ports;
};

GridImpedance build_grid_model(const NetworkCase& c);
lti::StateSpaceModel build_grid_impedance(const NetworkCase& c);

// Constant-admittance stand-in for a load device at its solved operating
// point: y = (P - jQ)/|V|^2 with P, Q the consumed power, realized as the
// memoryless dq block [[g, -b], [b, g]].
lti::StateSpaceModel load_admittance_block(const DeviceOperatingPoint& op);

}  // namespace ssoscope::network
