#include "ssoscope/synthesis.hpp"

#include <algorithm>
#include <set>

#include "ssoscope/errors.hpp"
#include "ssoscope/json_io.hpp"

namespace ssoscope::synthesis {

namespace {

const std::set<std::string> kProvenance{"estimated", "benchmark", "static_load"};

// Both port lists of a device admittance must be exactly {bus d, bus q}.
int device_bus(const std::string& device_id, const lti::StateSpaceModel& m) {
    const auto check = [&](const std::vector<lti::PortLabel>& ports, const char* what) {
        if (ports.size() != 2 || ports[0].axis != lti::Axis::d ||
            ports[1].axis != lti::Axis::q || ports[0].bus_id != ports[1].bus_id)
            throw ConfigError("device '" + device_id + "': " + what +
                              " ports must be the d/q pair of one bus");
    };
    check(m.input_ports, "input");
    check(m.output_ports, "output");
    if (m.input_ports[0].bus_id != m.output_ports[0].bus_id)
        throw ConfigError("device '" + device_id + "': input and output buses differ");
    try {
        return std::stoi(m.input_ports[0].bus_id);
    } catch (const std::exception&) {
        throw ConfigError("device '" + device_id + "': port bus '" +
                          m.input_ports[0].bus_id + "' is not a bus id");
    }
}

}  // namespace

int SystemModel::output_row(int bus_id, lti::Axis axis) const {
    const auto it = bus_output_index.find(bus_id);
    if (it == bus_output_index.end())
        throw ConfigError("no output rows for bus " + std::to_string(bus_id));
    return it->second[axis == lti::Axis::d ? 0 : 1];
}

void SystemModel::validate() const {
    model.validate();
    std::vector<int> owner(model.order(), 0);
    for (const auto& [id, states] : device_state_index) {
        if (!provenance.count(id))
            throw ConfigError("device '" + id + "' lacks a provenance tag");
        for (int s : states) {
            if (s < 0 || s >= model.order())
                throw ConfigError("state index out of range for device '" + id + "'");
            ++owner[s];
        }
    }
    for (int s = 0; s < model.order(); ++s) {
        const bool net = model.state_tags[s] == "network";
        if (owner[s] != (net ? 0 : 1))
            throw ConfigError("state " + std::to_string(s) +
                              " is not owned exactly once");
    }
    for (const auto& [id, tag] : provenance)
        if (!kProvenance.count(tag))
            throw ConfigError("device '" + id + "': unknown provenance '" + tag + "'");
    for (const auto& [bus, rows] : bus_output_index)
        for (int r : rows)
            if (r < 0 || r >= model.num_outputs())
                throw ConfigError("output row out of range for bus " +
                                  std::to_string(bus));
}

lti::StateSpaceModel assemble_device_block(
    const std::vector<std::pair<std::string, lti::StateSpaceModel>>& devices) {
    if (devices.empty()) throw ConfigError("no device admittances to assemble");
    std::set<int> buses;
    std::vector<lti::StateSpaceModel> blocks;
    for (const auto& [id, m] : devices) {
        m.validate();
        const int bus = device_bus(id, m);
        if (!buses.insert(bus).second)
            throw ConfigError("duplicate bus assignment: bus " + std::to_string(bus));
        blocks.push_back(m);
    }
    return lti::block_diagonal(blocks);
}

SystemModel synthesize(const network::NetworkCase& c, const lti::StateSpaceModel& z_grid,
                       const lti::StateSpaceModel& y_m,
                       const std::map<std::string, std::string>& provenance) {
    z_grid.validate();
    y_m.validate();
    if (z_grid.input_ports != y_m.output_ports || z_grid.output_ports != y_m.input_ports)
        throw ConfigError("port mismatch between grid impedance and device admittances");

    SystemModel sys;
    sys.model = lti::feedback_closure(z_grid, y_m);

    for (const auto& dev : c.devices) {
        sys.device_state_index[dev.device_id] = {};
        const auto it = provenance.find(dev.device_id);
        if (it != provenance.end()) {
            if (!kProvenance.count(it->second))
                throw ConfigError("device '" + dev.device_id +
                                  "': unknown provenance '" + it->second + "'");
            sys.provenance[dev.device_id] = it->second;
        } else {
            sys.provenance[dev.device_id] =
                dev.kind == network::DeviceKind::load ? "static_load" : "benchmark";
        }
    }
    for (const auto& [id, tag] : provenance)
        if (!sys.device_state_index.count(id))
            throw ConfigError("provenance names unknown device '" + id + "'");

    for (int s = 0; s < sys.model.order(); ++s) {
        const std::string& tag = sys.model.state_tags[s];
        if (tag == "network") continue;
        const auto it = sys.device_state_index.find(tag);
        if (it == sys.device_state_index.end())
            throw ConfigError("state tag '" + tag + "' names no device of the case");
        it->second.push_back(s);
    }

    for (int r = 0; r < sys.model.num_outputs(); ++r) {
        const auto& port = sys.model.output_ports[r];
        const int bus = std::stoi(port.bus_id);
        (void)c.bus_index(bus);  // unknown bus id -> ConfigError
        auto& rows = sys.bus_output_index.try_emplace(bus, std::array<int, 2>{-1, -1})
                         .first->second;
        rows[port.axis == lti::Axis::d ? 0 : 1] = r;
    }
    for (const auto& [bus, rows] : sys.bus_output_index)
        if (rows[0] < 0 || rows[1] < 0)
            throw ConfigError("bus " + std::to_string(bus) + " is missing an axis row");

    sys.validate();
    return sys;
}

nlohmann::json to_json(const SystemModel& m) {
    nlohmann::json j;
    j["model"] = lti::to_json(m.model);
    j["device_state_index"] = m.device_state_index;
    nlohmann::json rows = nlohmann::json::object();
    for (const auto& [bus, r] : m.bus_output_index)
        rows[std::to_string(bus)] = {r[0], r[1]};
    j["bus_output_index"] = rows;
    j["provenance"] = m.provenance;
    return j;
}

SystemModel system_from_json(const nlohmann::json& j) {
    for (const auto& [key, _] : j.items())
        if (key != "model" && key != "device_state_index" && key != "bus_output_index" &&
            key != "provenance")
            throw ConfigError("system model: unknown field '" + key + "'");
    SystemModel m;
    m.model = lti::state_space_from_json(j.at("model"));
    m.device_state_index =
        j.at("device_state_index").get<std::map<std::string, std::vector<int>>>();
    for (const auto& [bus, rows] : j.at("bus_output_index").items()) {
        if (!rows.is_array() || rows.size() != 2)
            throw ConfigError("system model: bus rows must be a [d, q] pair");
        m.bus_output_index[std::stoi(bus)] = {rows[0].get<int>(), rows[1].get<int>()};
    }
    m.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    m.validate();
    return m;
}

}  // namespace ssoscope::synthesis
