#include "ssoscope/modal.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "ssoscope/errors.hpp"
#include "ssoscope/json_io.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::modal {

namespace {

using Cplx = std::complex<double>;

// The closed loop keeps the grid states as one leading block; the extended
// bus readout is defined over exactly that block.
int leading_network_states(const lti::StateSpaceModel& m, const Eigen::MatrixXd& ext) {
    int n_net = 0;
    while (n_net < m.order() && m.state_tags[n_net] == "network") ++n_net;
    for (int s = n_net; s < m.order(); ++s)
        if (m.state_tags[s] == "network")
            throw ConfigError("network states are not a leading block of the model");
    if (ext.cols() != n_net)
        throw ConfigError("extended output spans " + std::to_string(ext.cols()) +
                          " network states, the model has " + std::to_string(n_net));
    return n_net;
}

int find_port(const std::vector<lti::PortLabel>& ports, int bus, lti::Axis axis) {
    const lti::PortLabel want{std::to_string(bus), axis};
    for (std::size_t k = 0; k < ports.size(); ++k)
        if (ports[k] == want) return static_cast<int>(k);
    throw ConfigError("no " + lti::axis_name(axis) + "-axis port for bus " +
                      std::to_string(bus));
}

bool in_band(const Mode& m, std::pair<double, double> band_hz, double damping_max) {
    return m.frequency_hz >= band_hz.first && m.frequency_hz <= band_hz.second &&
           m.damping_ratio < damping_max;
}

std::vector<int> screen_indices(const ModalResult& r, std::pair<double, double> band_hz,
                                double damping_max) {
    std::vector<int> idx;
    for (std::size_t k = 0; k < r.modes.size(); ++k)
        if (in_band(r.modes[k], band_hz, damping_max)) idx.push_back(static_cast<int>(k));
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return r.modes[a].damping_ratio < r.modes[b].damping_ratio;
    });
    return idx;
}

}  // namespace

ModalResult eigen_analysis(const synthesis::SystemModel& sys,
                           std::pair<double, double> band_hz, double damping_max) {
    const Eigen::MatrixXd& a = sys.model.A;
    ModalResult r;
    r.band_hz = band_hz;
    r.damping_max = damping_max;
    if (a.rows() == 0) return r;

    Eigen::EigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigendecomposition did not converge");
    const Eigen::MatrixXcd psi = es.eigenvectors();
    const Eigen::VectorXcd lam = es.eigenvalues();
    r.eigenvalues_all = lam;

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(psi);
    const double smin = svd.singularValues().minCoeff();
    r.psi_condition = smin > 0 ? svd.singularValues().maxCoeff() / smin
                               : std::numeric_limits<double>::infinity();
    if (!(r.psi_condition < 1e10))
        throw NumericalError("near-defective spectrum: eigenbasis condition " +
                             util::fmt_double(r.psi_condition));
    const Eigen::MatrixXcd phi = Eigen::PartialPivLU<Eigen::MatrixXcd>(psi).inverse();

    const double a_norm = a.norm();
    r.residual = a_norm > 0
                     ? (a * psi - psi * lam.asDiagonal()).norm() / a_norm
                     : 0.0;
    if (!(r.residual < 1e-9))
        throw NumericalError("eigendecomposition residual " + util::fmt_double(r.residual));

    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i).imag() < 0.0) continue;
        Mode m;
        m.eigenvalue = lam(i);
        m.frequency_hz = std::abs(lam(i).imag()) / (2 * std::numbers::pi);
        const double mag = std::abs(lam(i));
        m.damping_ratio = mag > 0 ? -lam(i).real() / mag : 0.0;
        m.right_vector = psi.col(i);
        m.left_vector = phi.row(i).transpose();
        const auto part = ibr_participation(m, sys);
        m.participation_per_device = part.raw;
        m.participation_normalized = part.normalized;
        r.modes.push_back(std::move(m));
    }

    r.sso_indices = screen_indices(r, band_hz, damping_max);
    r.least_damped_sso = r.sso_indices.empty() ? -1 : r.sso_indices.front();
    return r;
}

std::vector<Mode> screen_sso(const ModalResult& result, std::pair<double, double> band_hz,
                             double damping_max) {
    std::vector<Mode> out;
    for (int k : screen_indices(result, band_hz, damping_max)) out.push_back(result.modes[k]);
    return out;
}

std::map<int, double> observability(Mode& mode, const synthesis::SystemModel& sys,
                                    const Eigen::MatrixXd& extended_output,
                                    const std::vector<lti::PortLabel>& extended_ports) {
    if (extended_output.rows() != static_cast<int>(extended_ports.size()))
        throw ConfigError("extended output and port labels disagree");
    const int n_net = leading_network_states(sys.model, extended_output);
    if (mode.right_vector.size() != sys.model.order())
        throw ConfigError("mode eigenvector does not match the model order");

    mode.obs_per_output = extended_output * mode.right_vector.head(n_net);
    mode.obs_vmag_per_bus.clear();
    for (std::size_t k = 0; k < extended_ports.size(); ++k) {
        if (extended_ports[k].axis != lti::Axis::d) continue;
        const int bus = std::stoi(extended_ports[k].bus_id);
        const int qrow = find_port(extended_ports, bus, lti::Axis::q);
        const double od = std::abs(mode.obs_per_output(static_cast<int>(k)));
        const double oq = std::abs(mode.obs_per_output(qrow));
        mode.obs_vmag_per_bus[bus] = std::hypot(od, oq);
    }
    return mode.obs_vmag_per_bus;
}

Participation ibr_participation(const Mode& mode, const synthesis::SystemModel& sys) {
    if (mode.right_vector.size() != sys.model.order() ||
        mode.left_vector.size() != sys.model.order())
        throw ConfigError("mode eigenvectors do not match the model order");
    Participation p;
    double top = 0.0;
    for (const auto& [id, states] : sys.device_state_index) {
        double sum = 0.0;
        for (int s : states) sum += std::abs(mode.left_vector(s) * mode.right_vector(s));
        p.raw[id] = sum;
        top = std::max(top, sum);
    }
    for (const auto& [id, v] : p.raw) p.normalized[id] = top > 0 ? v / top : 0.0;
    return p;
}

SeverityResult step_severity(const synthesis::SystemModel& sys,
                             const lti::StateSpaceModel& y_m,
                             const network::OperatingPoint& op,
                             const Eigen::MatrixXd& extended_output,
                             const std::vector<lti::PortLabel>& extended_ports,
                             const StepSpec& step, double horizon_s,
                             std::pair<double, double> band_hz) {
    if (extended_output.rows() != static_cast<int>(extended_ports.size()))
        throw ConfigError("extended output and port labels disagree");
    if (horizon_s <= 0.0) throw ConfigError("step horizon must be positive");
    const int n_net = leading_network_states(sys.model, extended_output);
    const auto& dev = op.device(step.device_id);
    const double v0 = dev.v_mag();
    if (v0 <= 0.0) throw ConfigError("device bus voltage is zero at the operating point");

    // Reference step perpendicular to the operating voltage at the device's
    // bus: advancing the reference angle shifts active power, the quantity the
    // step is meant to move. A step along the voltage itself would command a
    // magnitude (reactive) change instead and bury the oscillation under the
    // quasi-static voltage-profile shift.
    const int row_d = find_port(sys.model.input_ports, dev.bus_id, lti::Axis::d);
    const int row_q = find_port(sys.model.input_ports, dev.bus_id, lti::Axis::q);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(sys.model.num_inputs());
    dir(row_d) = -dev.v_q / v0;
    dir(row_q) = dev.v_d / v0;

    SeverityResult out;

    // Scale so the quasi-static change of the device's injected power is the
    // requested fraction of its dispatch: dP = v0 . di + i0 . dv with
    // di = Y (u - dv). Evaluated at the band's low edge rather than DC: an
    // all-inverter system keeps one zero eigenvalue (nothing pins the
    // absolute phase), which makes the closed loop singular at s = 0.
    double scale = 1.0;
    {
        const double f_ref = band_hz.first;
        const Eigen::MatrixXcd g0 = lti::evaluate(sys.model, f_ref);
        const Eigen::MatrixXcd y0 = lti::evaluate(y_m, f_ref);
        const Eigen::VectorXcd dv = g0 * dir;
        const Eigen::VectorXcd di = y0 * (dir.cast<std::complex<double>>() - dv);
        const std::complex<double> coef = dev.v_d * di(row_d) + dev.v_q * di(row_q) +
                                          dev.i_d * dv(row_d) + dev.i_q * dv(row_q);
        if (std::abs(coef) < 1e-12)
            throw NumericalError("step direction produces no power change at '" +
                                 step.device_id + "'");
        scale = step.magnitude_fraction * dev.p_pu / std::abs(coef);
    }

    double horizon = horizon_s;
    if (sys.model.order() > 0) {
        const double worst = lti::poles_of(sys.model).real().maxCoeff();
        if (worst > 1e-9 && horizon > 10.0 / worst) {
            horizon = 10.0 / worst;
            out.warnings.push_back("unbounded response: horizon truncated to " +
                                   util::fmt_double(horizon) + " s");
        }
    }
    out.horizon_used_s = horizon;

    const double dt = 1e-3;
    const int n = static_cast<int>(std::lround(horizon / dt)) + 1;
    const int nx = sys.model.order();

    // Exact step propagation through the augmented exponential.
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(nx + 1, nx + 1);
    aug.topLeftCorner(nx, nx) = sys.model.A;
    aug.topRightCorner(nx, 1) = sys.model.B * (dir * scale);
    const Eigen::MatrixXd propagator = (aug * dt).exp();
    const Eigen::MatrixXd f = propagator.topLeftCorner(nx, nx);
    const Eigen::VectorXd g = propagator.topRightCorner(nx, 1);

    std::vector<std::vector<double>> dv_net(extended_ports.size(),
                                            std::vector<double>(n, 0.0));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
    for (int k = 0; k < n; ++k) {
        const Eigen::VectorXd v_ext = extended_output * x.head(n_net);
        for (std::size_t r = 0; r < extended_ports.size(); ++r) dv_net[r][k] = v_ext(r);
        x = f * x + g;
    }

    double top = 0.0;
    for (std::size_t k = 0; k < extended_ports.size(); ++k) {
        if (extended_ports[k].axis != lti::Axis::d) continue;
        const int bus = std::stoi(extended_ports[k].bus_id);
        const int qrow = find_port(extended_ports, bus, lti::Axis::q);
        const int slot = op.bus_slot(bus);
        const double th = op.v_angle_rad[slot];
        std::vector<double> vmag(n);
        for (int t = 0; t < n; ++t)
            vmag[t] = std::cos(th) * dv_net[k][t] + std::sin(th) * dv_net[qrow][t];
        const auto band = util::bandpass_zero_phase(vmag, 1.0 / dt, band_hz.first,
                                                    band_hz.second);
        const auto [lo, hi] = std::minmax_element(band.begin(), band.end());
        out.severity[bus] = *hi - *lo;
        top = std::max(top, out.severity[bus]);
    }
    if (top > 0.0)
        for (auto& [bus, v] : out.severity) v /= top;
    return out;
}

nlohmann::json to_json(const ModalResult& r) {
    nlohmann::json j;
    j["band_hz"] = {r.band_hz.first, r.band_hz.second};
    j["damping_max"] = r.damping_max;
    j["residual"] = r.residual;
    j["psi_condition"] = r.psi_condition;
    j["least_damped_sso"] = r.least_damped_sso;
    nlohmann::json eigs = nlohmann::json::array();
    for (int k = 0; k < r.eigenvalues_all.size(); ++k)
        eigs.push_back(lti::to_json(r.eigenvalues_all(k)));
    j["eigenvalues_all"] = eigs;
    nlohmann::json modes = nlohmann::json::array();
    const std::set<int> sso(r.sso_indices.begin(), r.sso_indices.end());
    for (std::size_t k = 0; k < r.modes.size(); ++k) {
        const auto& m = r.modes[k];
        nlohmann::json mj;
        mj["eigenvalue"] = lti::to_json(m.eigenvalue);
        mj["freq_hz"] = m.frequency_hz;
        mj["damping"] = m.damping_ratio;
        mj["is_sso"] = sso.count(static_cast<int>(k)) > 0;
        mj["participation"] = m.participation_per_device;
        mj["participation_normalized"] = m.participation_normalized;
        if (!m.obs_vmag_per_bus.empty()) {
            nlohmann::json obs = nlohmann::json::object();
            for (const auto& [bus, v] : m.obs_vmag_per_bus) obs[std::to_string(bus)] = v;
            mj["obs_vmag_per_bus"] = obs;
        }
        modes.push_back(std::move(mj));
    }
    j["modes"] = modes;
    return j;
}

ModalResult modal_from_json(const nlohmann::json& j) {
    for (const auto& [key, _] : j.items())
        if (key != "band_hz" && key != "damping_max" && key != "residual" &&
            key != "psi_condition" && key != "least_damped_sso" &&
            key != "eigenvalues_all" && key != "modes")
            throw ConfigError("modal result: unknown field '" + key + "'");
    ModalResult r;
    r.band_hz = {j.at("band_hz").at(0).get<double>(), j.at("band_hz").at(1).get<double>()};
    r.damping_max = j.at("damping_max").get<double>();
    r.residual = j.at("residual").get<double>();
    r.psi_condition = j.at("psi_condition").get<double>();
    r.least_damped_sso = j.at("least_damped_sso").get<int>();
    const auto& eigs = j.at("eigenvalues_all");
    r.eigenvalues_all.resize(eigs.size());
    for (std::size_t k = 0; k < eigs.size(); ++k)
        r.eigenvalues_all(static_cast<int>(k)) = lti::complex_from_json(eigs[k]);
    for (const auto& mj : j.at("modes")) {
        Mode m;
        m.eigenvalue = lti::complex_from_json(mj.at("eigenvalue"));
        m.frequency_hz = mj.at("freq_hz").get<double>();
        m.damping_ratio = mj.at("damping").get<double>();
        m.participation_per_device =
            mj.at("participation").get<std::map<std::string, double>>();
        m.participation_normalized =
            mj.at("participation_normalized").get<std::map<std::string, double>>();
        if (mj.contains("obs_vmag_per_bus"))
            for (const auto& [bus, v] : mj.at("obs_vmag_per_bus").items())
                m.obs_vmag_per_bus[std::stoi(bus)] = v.get<double>();
        r.modes.push_back(std::move(m));
    }
    r.sso_indices = screen_indices(r, r.band_hz, r.damping_max);
    return r;
}

void write_eigen_scatter_csv(const std::filesystem::path& path, const ModalResult& r) {
    std::vector<std::vector<double>> rows;
    const std::set<int> sso(r.sso_indices.begin(), r.sso_indices.end());
    for (std::size_t k = 0; k < r.modes.size(); ++k) {
        const auto& m = r.modes[k];
        rows.push_back({m.eigenvalue.real(), m.eigenvalue.imag(), m.frequency_hz,
                        m.damping_ratio, sso.count(static_cast<int>(k)) ? 1.0 : 0.0});
    }
    util::write_csv(path, {"re", "im", "freq_hz", "damping", "is_sso"}, rows);
}

}  // namespace ssoscope::modal
