#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssoscope/lti.hpp"
#include "ssoscope/network.hpp"

namespace ssoscope::synthesis {

// Closed-loop grid model: input is the reference voltage v^r and output the
// realized bus voltage v, two channels (d, q) per device bus, in case file
// device order. Bookkeeping maps relate rows and states back to the grid.
struct SystemModel {
    lti::StateSpaceModel model;
    // device id -> indices of the states that device owns. Static devices
    // (loads) are present with an empty list.
    std::map<std::string, std::vector<int>> device_state_index;
    // bus id -> output rows {d, q}.
    std::map<int, std::array<int, 2>> bus_output_index;
    // device id -> one of "estimated", "benchmark", "static_load".
    std::map<std::string, std::string> provenance;

    int output_row(int bus_id, lti::Axis axis) const;

    // Ownership conservation: the device lists plus the "network" tag
    // partition the state vector; every mapped bus has both axes.
    void validate() const;
};

nlohmann::json to_json(const SystemModel& m);
SystemModel system_from_json(const nlohmann::json& j);

// Block-diagonal device admittance Y_m. Each entry is a 2x2 admittance
// whose ports name its hosting bus; blocks keep the list order.
lti::StateSpaceModel assemble_device_block(
    const std::vector<std::pair<std::string, lti::StateSpaceModel>>& devices);

// Closes v = Z_grid * Y_m * (v^r - v). Ports of the two models must be
// mirror images (Z inputs = Y outputs and vice versa). provenance entries
// default to "static_load" for load devices and "benchmark" otherwise.
SystemModel synthesize(const network::NetworkCase& c, const lti::StateSpaceModel& z_grid,
                       const lti::StateSpaceModel& y_m,
                       const std::map<std::string, std::string>& provenance = {});

}  // namespace ssoscope::synthesis
