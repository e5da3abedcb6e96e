#pragma once

#include <json.hpp>

#include "ssoscope/lti.hpp"

// JSON wire format shared by every artifact: complex numbers as
// {"re": x, "im": y}, matrices as row-major nested arrays.

namespace ssoscope::lti {

nlohmann::json to_json(const std::complex<double>& z);
std::complex<double> complex_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Eigen::MatrixXd& m);
nlohmann::json to_json(const Eigen::MatrixXcd& m);
Eigen::MatrixXd real_matrix_from_json(const nlohmann::json& j);
Eigen::MatrixXcd complex_matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PortLabel& p);
PortLabel port_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StateSpaceModel& m);
StateSpaceModel state_space_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PoleResidueModel& m);
PoleResidueModel pole_residue_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FrequencyResponse& fr);
FrequencyResponse frequency_response_from_json(const nlohmann::json& j);

}  // namespace ssoscope::lti
