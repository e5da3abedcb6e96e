#include "ssoscope/network.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "ssoscope/errors.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::network {
namespace {

using nlohmann::json;
using std::complex;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(path + ": unknown field '" + it.key() + "'");
}

double get_number(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
    if (!j[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return j[key].get<double>();
}

double get_number_or(const json& j, const std::string& key, const std::string& path,
                     double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return j[key].get<double>();
}

int get_int(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
    if (!j[key].is_number_integer())
        throw ConfigError(path + "." + key + ": expected an integer");
    return j[key].get<int>();
}

std::string get_string(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
    if (!j[key].is_string()) throw ConfigError(path + "." + key + ": expected a string");
    return j[key].get<std::string>();
}

// One series element after folding parallel_count into the impedance.
struct MergedBranch {
    int from = 0;  // bus indices, not ids
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;  // total charging of the parallel set
};

std::vector<MergedBranch> merged_branches(const NetworkCase& c) {
    std::vector<MergedBranch> out;
    out.reserve(c.branches.size());
    for (const auto& br : c.branches) {
        const double k = br.parallel_count;
        out.push_back({c.bus_index(br.from_bus), c.bus_index(br.to_bus), br.r_pu / k,
                       br.x_pu / k, br.b_pu * k});
    }
    return out;
}

// Capacitive susceptance per bus (indexed like c.buses) after the
// default-shunt rule.
std::vector<double> bus_caps(const NetworkCase& c) {
    std::vector<double> cap(c.buses.size(), 0.0);
    for (std::size_t i = 0; i < c.buses.size(); ++i) cap[i] = c.buses[i].shunt_b_pu;
    for (const auto& br : merged_branches(c)) {
        cap[br.from] += br.b / 2.0;
        cap[br.to] += br.b / 2.0;
    }
    for (auto& b : cap)
        if (b == 0.0) b = c.default_shunt_b;
    return cap;
}

// Phasor bus admittance matrix at f0. Shunt capacitance uses the same
// per-bus totals as the dynamic model (default-shunt rule included), so
// the power flow solution is an equilibrium of the state-space network.
MatrixXcd bus_admittance(const NetworkCase& c) {
    const int n = static_cast<int>(c.buses.size());
    MatrixXcd y = MatrixXcd::Zero(n, n);
    for (const auto& br : merged_branches(c)) {
        const complex<double> ys = 1.0 / complex<double>(br.r, br.x);
        y(br.from, br.from) += ys;
        y(br.to, br.to) += ys;
        y(br.from, br.to) -= ys;
        y(br.to, br.from) -= ys;
    }
    const auto caps = bus_caps(c);
    for (int i = 0; i < n; ++i)
        y(i, i) += complex<double>(c.buses[i].shunt_g_pu, caps[i]);
    return y;
}

double device_p_injection(const DeviceSpec& d) {
    return d.kind == DeviceKind::load ? -d.p_set_pu : d.p_set_pu;
}
double device_q_injection(const DeviceSpec& d) {
    return d.kind == DeviceKind::load ? -d.q_set_pu : d.q_set_pu;
}

}  // namespace

double NetworkCase::omega0() const { return 2.0 * std::numbers::pi * base_frequency_hz; }

int NetworkCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    throw ConfigError("unknown bus id " + std::to_string(id));
}

const DeviceSpec& NetworkCase::device(const std::string& device_id) const {
    for (const auto& d : devices)
        if (d.device_id == device_id) return d;
    throw ConfigError("unknown device '" + device_id + "'");
}

double NetworkCase::total_shunt_b(int bus_id) const {
    return bus_caps(*this)[bus_index(bus_id)];
}

std::string NetworkCase::resolve_slack() const {
    if (slack_device) {
        const auto& d = device(*slack_device);  // throws when missing
        if (d.kind != DeviceKind::ibr)
            throw ConfigError("slack_device '" + *slack_device + "' is not an IBR");
        return *slack_device;
    }
    for (const auto& d : devices)
        if (d.family == IbrFamily::gfm) return d.device_id;
    throw ConfigError("no slack device: set slack_device or include a GFM device");
}

void NetworkCase::validate() const {
    if (base_mva <= 0.0) throw ConfigError("base_mva: must be positive");
    if (base_frequency_hz <= 0.0) throw ConfigError("base_frequency_hz: must be positive");
    if (default_shunt_b < 0.0) throw ConfigError("default_shunt_b: must be non-negative");
    if (buses.empty()) throw ConfigError("buses: empty");

    std::set<int> ids;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string path = "buses[" + std::to_string(i) + "]";
        if (!ids.insert(buses[i].id).second)
            throw ConfigError(path + ".id: duplicate bus id " + std::to_string(buses[i].id));
        if (buses[i].shunt_b_pu < 0.0) throw ConfigError(path + ".shunt_b_pu: must be >= 0");
        if (buses[i].shunt_g_pu < 0.0) throw ConfigError(path + ".shunt_g_pu: must be >= 0");
    }

    for (std::size_t i = 0; i < branches.size(); ++i) {
        const std::string path = "branches[" + std::to_string(i) + "]";
        const auto& br = branches[i];
        if (!ids.count(br.from_bus))
            throw ConfigError(path + ".from_bus: unknown bus id " + std::to_string(br.from_bus));
        if (!ids.count(br.to_bus))
            throw ConfigError(path + ".to_bus: unknown bus id " + std::to_string(br.to_bus));
        if (br.from_bus == br.to_bus)
            throw ConfigError(path + ": from_bus equals to_bus (" + std::to_string(br.from_bus) +
                              ")");
        if (br.x_pu <= 0.0) throw ConfigError(path + ".x_pu: must be > 0");
        if (br.r_pu < 0.0) throw ConfigError(path + ".r_pu: must be >= 0");
        if (br.b_pu < 0.0) throw ConfigError(path + ".b_pu: must be >= 0");
        if (br.parallel_count < 1) throw ConfigError(path + ".parallel_count: must be >= 1");
    }

    std::set<std::string> dev_ids;
    for (std::size_t i = 0; i < devices.size(); ++i) {
        const std::string path = "devices[" + std::to_string(i) + "]";
        const auto& d = devices[i];
        if (d.device_id.empty()) throw ConfigError(path + ".device_id: empty");
        if (!dev_ids.insert(d.device_id).second)
            throw ConfigError(path + ".device_id: duplicate '" + d.device_id + "'");
        if (!ids.count(d.bus_id))
            throw ConfigError(path + ".bus_id: unknown bus id " + std::to_string(d.bus_id));
    }
    if (slack_device && !dev_ids.count(*slack_device))
        throw ConfigError("slack_device: unknown device '" + *slack_device + "'");

    // Connectivity over the branch graph.
    if (buses.size() > 1) {
        std::map<int, std::vector<int>> adj;
        for (const auto& br : branches) {
            adj[br.from_bus].push_back(br.to_bus);
            adj[br.to_bus].push_back(br.from_bus);
        }
        std::set<int> seen{buses.front().id};
        std::vector<int> stack{buses.front().id};
        while (!stack.empty()) {
            const int at = stack.back();
            stack.pop_back();
            for (int nb : adj[at])
                if (seen.insert(nb).second) stack.push_back(nb);
        }
        for (const auto& b : buses)
            if (!seen.count(b.id))
                throw ConfigError("bus " + std::to_string(b.id) +
                                  " is not connected to the branch graph");
    }

    // Every device bus must end up with nonzero shunt capacitance, or its
    // voltage would be algebraic rather than a state.
    const auto caps = bus_caps(*this);
    for (const auto& d : devices)
        if (caps[bus_index(d.bus_id)] <= 0.0)
            throw ConfigError("device '" + d.device_id + "' at bus " + std::to_string(d.bus_id) +
                              ": bus has no shunt capacitance and default_shunt_b is 0");
}

NetworkCase load_case(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(util::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("failed to parse " + path.string() + ": " + e.what());
    }

    NetworkCase c;
    check_keys(j,
               {"base_mva", "base_frequency_hz", "default_shunt_b", "buses", "branches",
                "devices", "slack_device"},
               path.filename().string());
    c.base_mva = get_number(j, "base_mva", "case");
    c.base_frequency_hz = get_number(j, "base_frequency_hz", "case");
    c.default_shunt_b = get_number_or(j, "default_shunt_b", "case", 1e-4);
    if (j.contains("slack_device")) c.slack_device = get_string(j, "slack_device", "case");

    if (!j.contains("buses") || !j["buses"].is_array())
        throw ConfigError("buses: missing or not an array");
    for (std::size_t i = 0; i < j["buses"].size(); ++i) {
        const auto& bj = j["buses"][i];
        const std::string p = "buses[" + std::to_string(i) + "]";
        check_keys(bj, {"id", "shunt_b_pu", "shunt_g_pu", "x_coord", "y_coord", "area_label"},
                   p);
        BusSpec b;
        b.id = get_int(bj, "id", p);
        b.shunt_b_pu = get_number_or(bj, "shunt_b_pu", p, 0.0);
        b.shunt_g_pu = get_number_or(bj, "shunt_g_pu", p, 0.0);
        b.x_coord = get_number_or(bj, "x_coord", p, 0.0);
        b.y_coord = get_number_or(bj, "y_coord", p, 0.0);
        b.area_label = bj.contains("area_label") ? get_string(bj, "area_label", p) : "";
        c.buses.push_back(std::move(b));
    }

    if (!j.contains("branches") || !j["branches"].is_array())
        throw ConfigError("branches: missing or not an array");
    for (std::size_t i = 0; i < j["branches"].size(); ++i) {
        const auto& bj = j["branches"][i];
        const std::string p = "branches[" + std::to_string(i) + "]";
        check_keys(bj, {"from_bus", "to_bus", "r_pu", "x_pu", "b_pu", "parallel_count"}, p);
        BranchSpec br;
        br.from_bus = get_int(bj, "from_bus", p);
        br.to_bus = get_int(bj, "to_bus", p);
        br.r_pu = get_number(bj, "r_pu", p);
        br.x_pu = get_number(bj, "x_pu", p);
        br.b_pu = get_number_or(bj, "b_pu", p, 0.0);
        br.parallel_count = bj.contains("parallel_count") ? get_int(bj, "parallel_count", p) : 1;
        c.branches.push_back(br);
    }

    if (!j.contains("devices") || !j["devices"].is_array())
        throw ConfigError("devices: missing or not an array");
    for (std::size_t i = 0; i < j["devices"].size(); ++i) {
        const auto& dj = j["devices"][i];
        const std::string p = "devices[" + std::to_string(i) + "]";
        check_keys(dj, {"device_id", "bus_id", "kind", "p_set_pu", "q_set_pu", "v_set_pu"}, p);
        DeviceSpec d;
        d.device_id = get_string(dj, "device_id", p);
        d.bus_id = get_int(dj, "bus_id", p);
        const std::string kind = get_string(dj, "kind", p);
        if (kind == "IBR") {
            d.kind = DeviceKind::ibr;
        } else if (kind == "GFL") {
            d.kind = DeviceKind::ibr;
            d.family = IbrFamily::gfl;
        } else if (kind == "GFM") {
            d.kind = DeviceKind::ibr;
            d.family = IbrFamily::gfm;
        } else if (kind == "LOAD") {
            d.kind = DeviceKind::load;
        } else {
            throw ConfigError(p + ".kind: unknown device kind '" + kind + "'");
        }
        d.p_set_pu = get_number(dj, "p_set_pu", p);
        d.q_set_pu = get_number(dj, "q_set_pu", p);
        if (dj.contains(std::string("v_set_pu"))) d.v_set_pu = get_number(dj, "v_set_pu", p);
        c.devices.push_back(std::move(d));
    }

    c.validate();
    return c;
}

double DeviceOperatingPoint::v_mag() const { return std::hypot(v_d, v_q); }

const DeviceOperatingPoint& OperatingPoint::device(const std::string& device_id) const {
    for (const auto& d : devices)
        if (d.device_id == device_id) return d;
    throw ConfigError("operating point has no device '" + device_id + "'");
}

int OperatingPoint::bus_slot(int bus_id) const {
    for (std::size_t i = 0; i < bus_ids.size(); ++i)
        if (bus_ids[i] == bus_id) return static_cast<int>(i);
    throw ConfigError("operating point has no bus " + std::to_string(bus_id));
}

void to_json(json& j, const OperatingPoint& op) {
    j = json::object();
    j["buses"] = json::array();
    for (std::size_t i = 0; i < op.bus_ids.size(); ++i)
        j["buses"].push_back({{"id", op.bus_ids[i]},
                              {"v_mag_pu", op.v_mag_pu[i]},
                              {"v_angle_rad", op.v_angle_rad[i]}});
    j["devices"] = json::array();
    for (const auto& d : op.devices)
        j["devices"].push_back({{"device_id", d.device_id},
                                {"bus_id", d.bus_id},
                                {"p_pu", d.p_pu},
                                {"q_pu", d.q_pu},
                                {"v_d", d.v_d},
                                {"v_q", d.v_q},
                                {"i_d", d.i_d},
                                {"i_q", d.i_q}});
    j["max_mismatch_pu"] = op.max_mismatch_pu;
}

void from_json(const json& j, OperatingPoint& op) {
    op = OperatingPoint{};
    for (const auto& bj : j.at("buses")) {
        op.bus_ids.push_back(bj.at("id").get<int>());
        op.v_mag_pu.push_back(bj.at("v_mag_pu").get<double>());
        op.v_angle_rad.push_back(bj.at("v_angle_rad").get<double>());
    }
    for (const auto& dj : j.at("devices")) {
        DeviceOperatingPoint d;
        d.device_id = dj.at("device_id").get<std::string>();
        d.bus_id = dj.at("bus_id").get<int>();
        d.p_pu = dj.at("p_pu").get<double>();
        d.q_pu = dj.at("q_pu").get<double>();
        d.v_d = dj.at("v_d").get<double>();
        d.v_q = dj.at("v_q").get<double>();
        d.i_d = dj.at("i_d").get<double>();
        d.i_q = dj.at("i_q").get<double>();
        op.devices.push_back(std::move(d));
    }
    op.max_mismatch_pu = j.at("max_mismatch_pu").get<double>();
}

OperatingPoint solve_power_flow(const NetworkCase& c) {
    c.validate();
    const int n = static_cast<int>(c.buses.size());
    const std::string slack_id = c.resolve_slack();
    const DeviceSpec& slack_dev = c.device(slack_id);
    if (!slack_dev.v_set_pu)
        throw ConfigError("slack device '" + slack_id + "' needs v_set_pu");
    const int slack_bus = c.bus_index(slack_dev.bus_id);

    // Per-bus specified injections and voltage-holding devices.
    VectorXd p_spec = VectorXd::Zero(n), q_spec = VectorXd::Zero(n);
    std::vector<const DeviceSpec*> v_holder(n, nullptr);
    for (const auto& d : c.devices) {
        const int b = c.bus_index(d.bus_id);
        p_spec(b) += device_p_injection(d);
        q_spec(b) += device_q_injection(d);
        if (d.kind == DeviceKind::ibr && d.v_set_pu) {
            if (v_holder[b] && *v_holder[b]->v_set_pu != *d.v_set_pu)
                throw ConfigError("bus " + std::to_string(d.bus_id) +
                                  ": conflicting v_set_pu between devices '" +
                                  v_holder[b]->device_id + "' and '" + d.device_id + "'");
            if (!v_holder[b]) v_holder[b] = &d;
        }
    }

    std::vector<bool> is_pv(n, false);
    for (int b = 0; b < n; ++b) is_pv[b] = v_holder[b] != nullptr && b != slack_bus;

    const MatrixXcd ybus = bus_admittance(c);
    const MatrixXd g = ybus.real(), bsus = ybus.imag();

    VectorXd vm = VectorXd::Ones(n), va = VectorXd::Zero(n);
    vm(slack_bus) = *slack_dev.v_set_pu;
    for (int b = 0; b < n; ++b)
        if (v_holder[b]) vm(b) = *v_holder[b]->v_set_pu;

    // Unknown layout: angles at all non-slack buses, then magnitudes at PQ
    // buses.
    std::vector<int> ang_bus, mag_bus;
    for (int b = 0; b < n; ++b)
        if (b != slack_bus) ang_bus.push_back(b);
    for (int b = 0; b < n; ++b)
        if (b != slack_bus && !is_pv[b]) mag_bus.push_back(b);
    const int na = static_cast<int>(ang_bus.size());
    const int nm = static_cast<int>(mag_bus.size());

    auto calc_pq = [&](VectorXd& p, VectorXd& q) {
        p.setZero(n);
        q.setZero(n);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k) {
                if (g(i, k) == 0.0 && bsus(i, k) == 0.0) continue;
                const double th = va(i) - va(k);
                p(i) += vm(i) * vm(k) * (g(i, k) * std::cos(th) + bsus(i, k) * std::sin(th));
                q(i) += vm(i) * vm(k) * (g(i, k) * std::sin(th) - bsus(i, k) * std::cos(th));
            }
    };

    VectorXd p_calc(n), q_calc(n);
    bool converged = false;
    for (int iter = 0; iter < 50 && !converged; ++iter) {
        calc_pq(p_calc, q_calc);
        VectorXd mismatch(na + nm);
        for (int a = 0; a < na; ++a) mismatch(a) = p_spec(ang_bus[a]) - p_calc(ang_bus[a]);
        for (int m = 0; m < nm; ++m)
            mismatch(na + m) = q_spec(mag_bus[m]) - q_calc(mag_bus[m]);
        if (mismatch.lpNorm<Eigen::Infinity>() < 1e-8) {
            converged = true;
            break;
        }

        MatrixXd jac = MatrixXd::Zero(na + nm, na + nm);
        auto dp_dth = [&](int i, int k) {
            if (i == k) return -q_calc(i) - bsus(i, i) * vm(i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * vm(k) * (g(i, k) * std::sin(th) - bsus(i, k) * std::cos(th));
        };
        auto dp_dv = [&](int i, int k) {
            if (i == k) return p_calc(i) / vm(i) + g(i, i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * (g(i, k) * std::cos(th) + bsus(i, k) * std::sin(th));
        };
        auto dq_dth = [&](int i, int k) {
            if (i == k) return p_calc(i) - g(i, i) * vm(i) * vm(i);
            const double th = va(i) - va(k);
            return -vm(i) * vm(k) * (g(i, k) * std::cos(th) + bsus(i, k) * std::sin(th));
        };
        auto dq_dv = [&](int i, int k) {
            if (i == k) return q_calc(i) / vm(i) - bsus(i, i) * vm(i);
            const double th = va(i) - va(k);
            return vm(i) * (g(i, k) * std::sin(th) - bsus(i, k) * std::cos(th));
        };
        for (int a = 0; a < na; ++a) {
            for (int a2 = 0; a2 < na; ++a2) jac(a, a2) = dp_dth(ang_bus[a], ang_bus[a2]);
            for (int m = 0; m < nm; ++m) jac(a, na + m) = dp_dv(ang_bus[a], mag_bus[m]);
        }
        for (int m = 0; m < nm; ++m) {
            for (int a2 = 0; a2 < na; ++a2) jac(na + m, a2) = dq_dth(mag_bus[m], ang_bus[a2]);
            for (int m2 = 0; m2 < nm; ++m2)
                jac(na + m, na + m2) = dq_dv(mag_bus[m], mag_bus[m2]);
        }

        Eigen::FullPivLU<MatrixXd> lu(jac);
        if (!lu.isInvertible()) throw NumericalError("power flow Jacobian singular");
        const VectorXd dx = lu.solve(mismatch);
        for (int a = 0; a < na; ++a) va(ang_bus[a]) += dx(a);
        for (int m = 0; m < nm; ++m) vm(mag_bus[m]) += dx(na + m);
        if (!va.allFinite() || !vm.allFinite() || vm.minCoeff() <= 0.0)
            throw NumericalError("power flow diverged");
    }
    if (!converged) throw NumericalError("power flow diverged");

    calc_pq(p_calc, q_calc);

    OperatingPoint op;
    for (int b = 0; b < n; ++b) {
        op.bus_ids.push_back(c.buses[b].id);
        op.v_mag_pu.push_back(vm(b));
        op.v_angle_rad.push_back(va(b));
    }

    // Residual balance at each bus lands on the slack device's P/Q and on
    // the voltage holder's Q.
    for (const auto& d : c.devices) {
        const int b = c.bus_index(d.bus_id);
        DeviceOperatingPoint dop;
        dop.device_id = d.device_id;
        dop.bus_id = d.bus_id;
        if (&d == &slack_dev) {
            dop.p_pu = p_calc(b) - (p_spec(b) - device_p_injection(d));
            dop.q_pu = q_calc(b) - (q_spec(b) - device_q_injection(d));
        } else if (v_holder[b] == &d && b != slack_bus) {
            dop.p_pu = device_p_injection(d);
            dop.q_pu = q_calc(b) - (q_spec(b) - device_q_injection(d));
        } else {
            dop.p_pu = device_p_injection(d);
            dop.q_pu = device_q_injection(d);
        }
        const complex<double> v = std::polar(vm(b), va(b));
        const complex<double> s(dop.p_pu, dop.q_pu);
        const complex<double> i = std::conj(s / v);
        dop.v_d = v.real();
        dop.v_q = v.imag();
        dop.i_d = i.real();
        dop.i_q = i.imag();
        op.devices.push_back(std::move(dop));
    }

    // Verify power balance with the final device powers filled in.
    VectorXd p_dev = VectorXd::Zero(n), q_dev = VectorXd::Zero(n);
    for (const auto& d : op.devices) {
        const int b = c.bus_index(d.bus_id);
        p_dev(b) += d.p_pu;
        q_dev(b) += d.q_pu;
    }
    op.max_mismatch_pu = std::max((p_dev - p_calc).lpNorm<Eigen::Infinity>(),
                                  (q_dev - q_calc).lpNorm<Eigen::Infinity>());
    if (op.max_mismatch_pu >= 1e-8)
        throw NumericalError("power flow balance check failed: mismatch " +
                             std::to_string(op.max_mismatch_pu));
    return op;
}

GridImpedance build_grid_model(const NetworkCase& c) {
    c.validate();
    const double w0 = c.omega0();
    const auto branches = merged_branches(c);
    const auto caps = bus_caps(c);
    const int nbr = static_cast<int>(branches.size());
    const int nbus = static_cast<int>(c.buses.size());
    for (int b = 0; b < nbus; ++b)
        if (caps[b] <= 0.0)
            throw ConfigError("bus " + std::to_string(c.buses[b].id) +
                              " has no shunt capacitance; set default_shunt_b or add shunt");

    const int nx = 2 * nbr + 2 * nbus;
    MatrixXd a = MatrixXd::Zero(nx, nx);
    const auto bus_state = [&](int bus_idx) { return 2 * nbr + 2 * bus_idx; };

    for (int l = 0; l < nbr; ++l) {
        const auto& br = branches[l];
        const int id_ = 2 * l, iq_ = 2 * l + 1;
        const double wox = w0 / br.x;
        // d(i)/dt = (w0/x)(v_from - v_to - r i) - j w0 i in complex dq form
        a(id_, id_) = -wox * br.r;
        a(id_, iq_) = w0;
        a(iq_, iq_) = -wox * br.r;
        a(iq_, id_) = -w0;
        a(id_, bus_state(br.from)) = wox;
        a(id_, bus_state(br.to)) = -wox;
        a(iq_, bus_state(br.from) + 1) = wox;
        a(iq_, bus_state(br.to) + 1) = -wox;
    }

    for (int b = 0; b < nbus; ++b) {
        const int vd = bus_state(b), vq = vd + 1;
        const double woc = w0 / caps[b];
        const double gsh = c.buses[b].shunt_g_pu;
        // dv/dt = (w0/b_cap)(i_net - g v) - j w0 v
        a(vd, vd) = -woc * gsh;
        a(vd, vq) = w0;
        a(vq, vq) = -woc * gsh;
        a(vq, vd) = -w0;
    }
    for (int l = 0; l < nbr; ++l) {
        const auto& br = branches[l];
        const double woc_from = w0 / caps[br.from];
        const double woc_to = w0 / caps[br.to];
        a(bus_state(br.from), 2 * l) -= woc_from;
        a(bus_state(br.from) + 1, 2 * l + 1) -= woc_from;
        a(bus_state(br.to), 2 * l) += woc_to;
        a(bus_state(br.to) + 1, 2 * l + 1) += woc_to;
    }

    const int ndev = static_cast<int>(c.devices.size());
    MatrixXd bmat = MatrixXd::Zero(nx, 2 * ndev);
    MatrixXd cmat = MatrixXd::Zero(2 * ndev, nx);
    lti::StateSpaceModel m;
    for (int d = 0; d < ndev; ++d) {
        const int bus_idx = c.bus_index(c.devices[d].bus_id);
        const double woc = w0 / caps[bus_idx];
        bmat(bus_state(bus_idx), 2 * d) = woc;
        bmat(bus_state(bus_idx) + 1, 2 * d + 1) = woc;
        cmat(2 * d, bus_state(bus_idx)) = 1.0;
        cmat(2 * d + 1, bus_state(bus_idx) + 1) = 1.0;
        const std::string bus_label = std::to_string(c.devices[d].bus_id);
        m.input_ports.push_back({bus_label, lti::Axis::d});
        m.input_ports.push_back({bus_label, lti::Axis::q});
        m.output_ports.push_back({bus_label, lti::Axis::d});
        m.output_ports.push_back({bus_label, lti::Axis::q});
    }

    m.A = std::move(a);
    m.B = std::move(bmat);
    m.C = std::move(cmat);
    m.D = MatrixXd::Zero(2 * ndev, 2 * ndev);
    m.state_tags.assign(nx, "network");
    m.validate();

    GridImpedance grid;
    grid.extended_output = MatrixXd::Zero(2 * nbus, nx);
    for (int b = 0; b < nbus; ++b) {
        grid.extended_output(2 * b, bus_state(b)) = 1.0;
        grid.extended_output(2 * b + 1, bus_state(b) + 1) = 1.0;
        const std::string bus_label = std::to_string(c.buses[b].id);
        grid.extended_ports.push_back({bus_label, lti::Axis::d});
        grid.extended_ports.push_back({bus_label, lti::Axis::q});
    }
    grid.model = std::move(m);
    return grid;
}

lti::StateSpaceModel build_grid_impedance(const NetworkCase& c) {
    return build_grid_model(c).model;
}

lti::StateSpaceModel load_admittance_block(const DeviceOperatingPoint& op) {
    const double v2 = op.v_d * op.v_d + op.v_q * op.v_q;
    if (v2 <= 0.0)
        throw ConfigError("load '" + op.device_id + "': zero terminal voltage");
    // Injection convention flips consumed power: P = -p_pu, Q = -q_pu.
    const double g = -op.p_pu / v2;
    const double b = op.q_pu / v2;
    MatrixXd d(2, 2);
    d << g, -b, b, g;
    const std::string bus_label = std::to_string(op.bus_id);
    const std::vector<lti::PortLabel> ports{{bus_label, lti::Axis::d},
                                            {bus_label, lti::Axis::q}};
    return lti::StateSpaceModel::static_gain(d, ports, ports);
}

}  // namespace ssoscope::network
