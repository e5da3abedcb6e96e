#include "ssoscope/json_io.hpp"

#include "ssoscope/errors.hpp"

namespace ssoscope::lti {

using nlohmann::json;

json to_json(const std::complex<double>& z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

std::complex<double> complex_from_json(const json& j) {
    if (!j.is_object() || !j.contains("re") || !j.contains("im"))
        throw ConfigError("complex values must be {\"re\": x, \"im\": y}");
    return {j.at("re").get<double>(), j.at("im").get<double>()};
}

json to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(const Eigen::MatrixXcd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(to_json(m(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {
std::pair<Eigen::Index, Eigen::Index> matrix_shape(const json& j) {
    if (!j.is_array()) throw ConfigError("matrix must be a nested array");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = 0;
    if (rows > 0) {
        if (!j[0].is_array()) throw ConfigError("matrix must be a nested array");
        cols = static_cast<Eigen::Index>(j[0].size());
    }
    for (const auto& row : j)
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw ConfigError("matrix rows must have equal length");
    return {rows, cols};
}
}  // namespace

Eigen::MatrixXd real_matrix_from_json(const json& j) {
    auto [rows, cols] = matrix_shape(j);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    return m;
}

Eigen::MatrixXcd complex_matrix_from_json(const json& j) {
    auto [rows, cols] = matrix_shape(j);
    Eigen::MatrixXcd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = complex_from_json(j[i][k]);
    return m;
}

json to_json(const PortLabel& p) {
    return json{{"bus_id", p.bus_id}, {"axis", axis_name(p.axis)}};
}

PortLabel port_from_json(const json& j) {
    PortLabel p;
    p.bus_id = j.at("bus_id").get<std::string>();
    p.axis = axis_from_name(j.at("axis").get<std::string>());
    return p;
}

json to_json(const StateSpaceModel& m) {
    json ports_in = json::array(), ports_out = json::array();
    for (const auto& p : m.input_ports) ports_in.push_back(to_json(p));
    for (const auto& p : m.output_ports) ports_out.push_back(to_json(p));
    return json{{"A", to_json(m.A)},
                {"B", to_json(m.B)},
                {"C", to_json(m.C)},
                {"D", to_json(m.D)},
                {"state_tags", m.state_tags},
                {"input_ports", ports_in},
                {"output_ports", ports_out}};
}

StateSpaceModel state_space_from_json(const json& j) {
    StateSpaceModel m;
    m.A = real_matrix_from_json(j.at("A"));
    m.B = real_matrix_from_json(j.at("B"));
    m.C = real_matrix_from_json(j.at("C"));
    m.D = real_matrix_from_json(j.at("D"));
    m.state_tags = j.at("state_tags").get<std::vector<std::string>>();
    for (const auto& p : j.at("input_ports")) m.input_ports.push_back(port_from_json(p));
    for (const auto& p : j.at("output_ports")) m.output_ports.push_back(port_from_json(p));
    m.validate();
    return m;
}

json to_json(const PoleResidueModel& m) {
    json poles = json::array(), residues = json::array();
    for (const auto& p : m.poles) poles.push_back(to_json(p));
    for (const auto& r : m.residues) residues.push_back(to_json(r));
    json out{{"poles", std::move(poles)},
             {"residues", std::move(residues)},
             {"direct", to_json(m.direct)}};
    if (m.proportional) out["proportional"] = to_json(*m.proportional);
    return out;
}

PoleResidueModel pole_residue_from_json(const json& j) {
    PoleResidueModel m;
    for (const auto& p : j.at("poles")) m.poles.push_back(complex_from_json(p));
    for (const auto& r : j.at("residues")) m.residues.push_back(complex_matrix_from_json(r));
    m.direct = real_matrix_from_json(j.at("direct"));
    if (j.contains("proportional")) m.proportional = real_matrix_from_json(j.at("proportional"));
    m.validate();
    return m;
}

json to_json(const FrequencyResponse& fr) {
    json samples = json::array();
    for (const auto& s : fr.samples) samples.push_back(to_json(s));
    return json{{"frequencies_hz", fr.frequencies_hz}, {"samples", std::move(samples)}};
}

FrequencyResponse frequency_response_from_json(const json& j) {
    FrequencyResponse fr;
    fr.frequencies_hz = j.at("frequencies_hz").get<std::vector<double>>();
    for (const auto& s : j.at("samples")) fr.samples.push_back(complex_matrix_from_json(s));
    fr.validate();
    return fr;
}

}  // namespace ssoscope::lti
