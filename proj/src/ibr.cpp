#include "ssoscope/ibr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <utility>

#include <json.hpp>

#include "ssoscope/errors.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::ibr {
namespace {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

// Cutoff of the GFM power measurement low-pass. Fixed model structure,
// not a tunable parameter.
constexpr double kPowerFilterRadS = 2.0 * std::numbers::pi * 10.0;

PiGains read_pi(const json& j, const std::string& key, const std::string& file) {
    if (!j.contains(key)) throw ConfigError(file + ": missing section '" + key + "'");
    const auto& s = j[key];
    for (auto it = s.begin(); it != s.end(); ++it)
        if (it.key() != "kp" && it.key() != "ki")
            throw ConfigError(file + "." + key + ": unknown field '" + it.key() + "'");
    if (!s.contains("kp") || !s.contains("ki"))
        throw ConfigError(file + "." + key + ": needs kp and ki");
    return {s["kp"].get<double>(), s["ki"].get<double>()};
}

struct DeviceContext {
    IbrParameters p;
    double w0 = 0.0;    // rad/s
    Vector2d v0;        // terminal voltage, synchronous frame
    Vector2d i0_inj;    // injected current at the operating point
};

int state_count(IbrKind kind) { return kind == IbrKind::gfl ? 8 : 9; }

// Right-hand side of the nonlinear model. States are documented in
// state_names(); u is the terminal voltage in the synchronous frame.
VectorXd model_rhs(const DeviceContext& ctx, const VectorXd& x, const Vector2d& u) {
    const IbrParameters& p = ctx.p;
    const double w0 = ctx.w0;
    VectorXd dx(x.size());

    const double delta = x(0);
    const double c = std::cos(delta), s = std::sin(delta);
    const double v_d = c * u(0) + s * u(1);
    const double v_q = -s * u(0) + c * u(1);

    double dw = 0.0;       // frame speed deviation from w0, rad/s
    double id_ref = 0.0, iq_ref = 0.0;
    int base = 0;          // index of the current-loop integrator pair

    if (p.kind == IbrKind::gfl) {
        const double i_d = x(6), i_q = x(7);
        const double pe = v_d * i_d + v_q * i_q;
        const double qe = v_q * i_d - v_d * i_q;
        dw = p.pll.kp * v_q + p.pll.ki * x(1);
        dx(0) = dw;
        dx(1) = v_q;
        const double ep = p.p_ref - pe;
        const double eq = p.q_ref - qe;
        dx(2) = ep;
        dx(3) = eq;
        id_ref = p.outer_power.kp * ep + p.outer_power.ki * x(2);
        iq_ref = -(p.outer_power.kp * eq + p.outer_power.ki * x(3));
        base = 4;
    } else {
        const double i_d = x(7), i_q = x(8);
        const double pe = v_d * i_d + v_q * i_q;
        const double qe = v_q * i_d - v_d * i_q;
        const double p_f = x(1), q_f = x(2);
        dx(1) = kPowerFilterRadS * (pe - p_f);
        dx(2) = kPowerFilterRadS * (qe - q_f);
        dw = p.m_p * (p.p_ref - p_f);
        dx(0) = dw;
        const double vref_d = p.v_ref - p.n_q * (q_f - p.q_ref);
        const double e_vd = vref_d - v_d;
        const double e_vq = -v_q;
        dx(3) = e_vd;
        dx(4) = e_vq;
        id_ref = p.voltage_control.kp * e_vd + p.voltage_control.ki * x(3);
        iq_ref = p.voltage_control.kp * e_vq + p.voltage_control.ki * x(4);
        base = 5;
    }

    const double i_d = x(base + 2), i_q = x(base + 3);
    const double e_id = id_ref - i_d;
    const double e_iq = iq_ref - i_q;
    dx(base) = e_id;
    dx(base + 1) = e_iq;

    const double w_pu = 1.0 + dw / w0;
    const double vc_d =
        v_d + p.current_control.kp * e_id + p.current_control.ki * x(base) - w_pu * p.l_f * i_q;
    const double vc_q =
        v_q + p.current_control.kp * e_iq + p.current_control.ki * x(base + 1) +
        w_pu * p.l_f * i_d;

    const double w = w0 + dw;
    dx(base + 2) = (w0 / p.l_f) * (vc_d - v_d - p.r_f * i_d) + w * i_q;
    dx(base + 3) = (w0 / p.l_f) * (vc_q - v_q - p.r_f * i_q) - w * i_d;
    return dx;
}

// Terminal current in the synchronous frame, into-device convention.
Vector2d terminal_current(const DeviceContext& ctx, const VectorXd& x) {
    const double delta = x(0);
    const double c = std::cos(delta), s = std::sin(delta);
    const int base = ctx.p.kind == IbrKind::gfl ? 6 : 7;
    const double i_d = x(base), i_q = x(base + 1);
    return {-(c * i_d - s * i_q), -(s * i_d + c * i_q)};
}

double filter_current_mag(const DeviceContext& ctx, const VectorXd& x) {
    const int base = ctx.p.kind == IbrKind::gfl ? 6 : 7;
    return std::hypot(x(base), x(base + 1));
}

MatrixXd numeric_jacobian(const std::function<VectorXd(const VectorXd&)>& f,
                          const VectorXd& at, int out_dim) {
    MatrixXd j(out_dim, at.size());
    for (int k = 0; k < at.size(); ++k) {
        const double h = std::max(1e-6 * std::abs(at(k)), 1e-8);
        VectorXd hi = at, lo = at;
        hi(k) += h;
        lo(k) -= h;
        j.col(k) = (f(hi) - f(lo)) / (2.0 * h);
    }
    return j;
}

DeviceContext make_context(const IbrParameters& p, const network::DeviceOperatingPoint& op,
                           double f0_hz) {
    p.validate();
    if (f0_hz <= 0.0) throw ConfigError("f0_hz must be positive");
    DeviceContext ctx;
    ctx.p = p;
    ctx.w0 = 2.0 * std::numbers::pi * f0_hz;
    ctx.v0 = Vector2d(op.v_d, op.v_q);
    ctx.i0_inj = Vector2d(op.i_d, op.i_q);
    if (ctx.v0.norm() <= 0.0)
        throw ConfigError("device '" + op.device_id + "': zero terminal voltage");
    return ctx;
}

VectorXd analytic_equilibrium(const DeviceContext& ctx) {
    const IbrParameters& p = ctx.p;
    const double vmag = ctx.v0.norm();
    const double delta0 = std::atan2(ctx.v0(1), ctx.v0(0));

    // Device-frame equilibrium current follows from the set-points.
    const double pe = p.p_ref;
    double qe = p.q_ref;
    if (p.kind == IbrKind::gfm && p.n_q > 0.0) qe = p.q_ref + (p.v_ref - vmag) / p.n_q;
    const double i_d0 = pe / vmag;
    const double i_q0 = -qe / vmag;

    if (p.current_control.ki <= 0.0)
        throw NumericalError("equilibrium solve failure: current_control.ki must be > 0");
    const double g_d0 = p.r_f * i_d0 / p.current_control.ki;
    const double g_q0 = p.r_f * i_q0 / p.current_control.ki;

    VectorXd x(state_count(p.kind));
    if (p.kind == IbrKind::gfl) {
        if (p.outer_power.ki <= 0.0)
            throw NumericalError("equilibrium solve failure: outer_power.ki must be > 0");
        x << delta0, 0.0, i_d0 / p.outer_power.ki, -i_q0 / p.outer_power.ki, g_d0, g_q0, i_d0,
            i_q0;
    } else {
        if (p.voltage_control.ki <= 0.0)
            throw NumericalError("equilibrium solve failure: voltage_control.ki must be > 0");
        x << delta0, pe, qe, i_d0 / p.voltage_control.ki, i_q0 / p.voltage_control.ki, g_d0,
            g_q0, i_d0, i_q0;
    }
    return x;
}

VectorXd solve_equilibrium(const DeviceContext& ctx) {
    VectorXd x = analytic_equilibrium(ctx);
    auto residual = [&](const VectorXd& state) { return model_rhs(ctx, state, ctx.v0); };
    for (int iter = 0; iter < 20; ++iter) {
        const VectorXd r = residual(x);
        if (r.lpNorm<Eigen::Infinity>() < 1e-12) break;
        const MatrixXd j = numeric_jacobian(residual, x, static_cast<int>(x.size()));
        Eigen::FullPivLU<MatrixXd> lu(j);
        if (!lu.isInvertible())
            throw NumericalError("equilibrium solve failure: singular Jacobian");
        x -= lu.solve(r);
    }
    if (residual(x).lpNorm<Eigen::Infinity>() > 1e-10)
        throw NumericalError("equilibrium solve failure: residual did not vanish");

    // The device must actually reproduce the requested terminal current.
    const Vector2d i_inj = -terminal_current(ctx, x);
    if ((i_inj - ctx.i0_inj).lpNorm<Eigen::Infinity>() > 1e-6)
        throw ConfigError("set-points inconsistent with the operating point (injected current "
                          "mismatch " +
                          std::to_string((i_inj - ctx.i0_inj).lpNorm<Eigen::Infinity>()) + ")");
    if (filter_current_mag(ctx, x) > ctx.p.current_limit)
        throw NonlinearExcursion("nonlinear excursion: equilibrium exceeds the current limit");
    return x;
}

}  // namespace

void IbrParameters::validate() const {
    auto non_negative = [](double v, const char* name) {
        if (v < 0.0) throw ConfigError(std::string(name) + ": must be >= 0");
    };
    if (l_f <= 0.0) throw ConfigError("filter.l_f: must be > 0");
    non_negative(r_f, "filter.r_f");
    non_negative(current_control.kp, "current_control.kp");
    non_negative(current_control.ki, "current_control.ki");
    if (current_limit <= 0.0) throw ConfigError("current_limit: must be > 0");
    if (kind == IbrKind::gfl) {
        non_negative(pll.kp, "pll.kp");
        non_negative(pll.ki, "pll.ki");
        non_negative(outer_power.kp, "outer_power.kp");
        non_negative(outer_power.ki, "outer_power.ki");
    } else {
        non_negative(m_p, "droop.m_p");
        non_negative(n_q, "droop.n_q");
        non_negative(voltage_control.kp, "voltage_control.kp");
        non_negative(voltage_control.ki, "voltage_control.ki");
    }
}

IbrParameters load_ibr_parameters(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(util::read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("failed to parse " + path.string() + ": " + e.what());
    }
    const std::string file = path.filename().string();

    IbrParameters p;
    if (!j.contains("kind") || !j["kind"].is_string())
        throw ConfigError(file + ": missing string field 'kind'");
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "GFL")
        p.kind = IbrKind::gfl;
    else if (kind == "GFM")
        p.kind = IbrKind::gfm;
    else
        throw ConfigError(file + ".kind: expected GFL or GFM, got '" + kind + "'");

    std::set<std::string> allowed{"kind", "filter", "current_control", "setpoints",
                                  "current_limit"};
    if (p.kind == IbrKind::gfl) {
        allowed.insert("pll");
        allowed.insert("outer_power");
    } else {
        allowed.insert("droop");
        allowed.insert("voltage_control");
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(file + ": field '" + it.key() + "' does not belong to a " + kind +
                              " device");

    if (!j.contains("filter")) throw ConfigError(file + ": missing section 'filter'");
    p.r_f = j["filter"].value("r_f", -1.0);
    p.l_f = j["filter"].value("l_f", -1.0);
    p.current_control = read_pi(j, "current_control", file);
    if (p.kind == IbrKind::gfl) {
        p.pll = read_pi(j, "pll", file);
        p.outer_power = read_pi(j, "outer_power", file);
    } else {
        if (!j.contains("droop")) throw ConfigError(file + ": missing section 'droop'");
        p.m_p = j["droop"].value("m_p", -1.0);
        p.n_q = j["droop"].value("n_q", -1.0);
        p.voltage_control = read_pi(j, "voltage_control", file);
    }
    if (!j.contains("setpoints")) throw ConfigError(file + ": missing section 'setpoints'");
    p.p_ref = j["setpoints"].value("p_ref", 0.0);
    p.q_ref = j["setpoints"].value("q_ref", 0.0);
    p.v_ref = j["setpoints"].value("v_ref", 1.0);
    if (!j.contains("current_limit"))
        throw ConfigError(file + ": missing field 'current_limit'");
    p.current_limit = j["current_limit"].get<double>();

    p.validate();
    return p;
}

IbrParameters with_operating_setpoints(const IbrParameters& p,
                                       const network::DeviceOperatingPoint& op) {
    IbrParameters out = p;
    out.p_ref = op.p_pu;
    out.q_ref = op.q_pu;
    out.v_ref = op.v_mag();
    return out;
}

int TimeSeries::length() const {
    return channels.empty() ? 0 : static_cast<int>(channels.front().size());
}

double TimeSeries::duration_s() const { return sample_period_s * std::max(0, length() - 1); }

const std::vector<double>& TimeSeries::channel(const std::string& name) const {
    for (std::size_t i = 0; i < channel_names.size(); ++i)
        if (channel_names[i] == name) return channels[i];
    throw ConfigError("time series has no channel '" + name + "'");
}

std::vector<double>& TimeSeries::channel(const std::string& name) {
    return const_cast<std::vector<double>&>(std::as_const(*this).channel(name));
}

void TimeSeries::add_channel(const std::string& name, int length) {
    channel_names.push_back(name);
    channels.emplace_back(length, 0.0);
}

void TimeSeries::validate() const {
    if (sample_period_s <= 0.0) throw ConfigError("time series: sample_period_s must be > 0");
    if (channel_names.size() != channels.size())
        throw ConfigError("time series: name/channel count mismatch");
    for (std::size_t i = 1; i < channels.size(); ++i)
        if (channels[i].size() != channels[0].size())
            throw ConfigError("time series: channel '" + channel_names[i] +
                              "' length differs from '" + channel_names[0] + "'");
}

void write_timeseries_csv(const std::filesystem::path& path, const TimeSeries& ts) {
    ts.validate();
    std::vector<std::string> header{"t"};
    header.insert(header.end(), ts.channel_names.begin(), ts.channel_names.end());
    std::vector<std::vector<double>> rows;
    rows.reserve(ts.length());
    for (int k = 0; k < ts.length(); ++k) {
        std::vector<double> row{k * ts.sample_period_s};
        for (const auto& ch : ts.channels) row.push_back(ch[k]);
        rows.push_back(std::move(row));
    }
    util::write_csv(path, header, rows);
}

TimeSeries read_timeseries_csv(const std::filesystem::path& path) {
    const auto table = util::read_csv(path);
    if (table.header.empty() || table.header.front() != "t")
        throw ConfigError(path.string() + ": first column must be 't'");
    if (table.rows.size() < 2)
        throw ConfigError(path.string() + ": need at least two samples");

    TimeSeries ts;
    ts.sample_period_s = table.rows[1][0] - table.rows[0][0];
    if (ts.sample_period_s <= 0.0)
        throw ConfigError(path.string() + ": non-increasing time column");
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
        const double dt = table.rows[r][0] - table.rows[r - 1][0];
        if (std::abs(dt - ts.sample_period_s) > 1e-9 * std::max(1.0, ts.sample_period_s))
            throw ConfigError(path.string() + ": non-uniform sampling at row " +
                              std::to_string(r));
    }
    for (std::size_t c = 1; c < table.header.size(); ++c) {
        ts.add_channel(table.header[c], static_cast<int>(table.rows.size()));
        auto& ch = ts.channels.back();
        for (std::size_t r = 0; r < table.rows.size(); ++r) ch[r] = table.rows[r][c];
    }
    ts.validate();
    return ts;
}

TimeSeries simulate_terminal(const IbrParameters& p, const network::DeviceOperatingPoint& op,
                             double f0_hz, const TimeSeries& v_waveform, InputHold hold) {
    v_waveform.validate();
    const auto& vd = v_waveform.channel("v_d");
    const auto& vq = v_waveform.channel("v_q");
    const int n = v_waveform.length();
    if (n < 2) throw ConfigError("simulate_terminal: waveform needs at least two samples");

    const DeviceContext ctx = make_context(p, op, f0_hz);
    if (std::abs(vd[0] - op.v_d) > 1e-6 || std::abs(vq[0] - op.v_q) > 1e-6)
        throw ConfigError("simulate_terminal: waveform does not start at the operating-point "
                          "voltage");

    VectorXd x = solve_equilibrium(ctx);
    const double dt = v_waveform.sample_period_s;

    TimeSeries out;
    out.sample_period_s = dt;
    out.add_channel("i_d", n);
    out.add_channel("i_q", n);
    auto& id_out = out.channel("i_d");
    auto& iq_out = out.channel("i_q");

    VectorXd k1, k2, k3, k4;
    for (int k = 0; k < n; ++k) {
        const Vector2d i_term = terminal_current(ctx, x);
        id_out[k] = i_term(0);
        iq_out[k] = i_term(1);
        if (k + 1 == n) break;

        const Vector2d u0(vd[k], vq[k]);
        const Vector2d u1(vd[k + 1], vq[k + 1]);
        const Vector2d um = hold == InputHold::linear ? Vector2d(0.5 * (u0 + u1)) : u0;
        const Vector2d ue = hold == InputHold::linear ? u1 : u0;

        k1 = model_rhs(ctx, x, u0);
        k2 = model_rhs(ctx, x + 0.5 * dt * k1, um);
        k3 = model_rhs(ctx, x + 0.5 * dt * k2, um);
        k4 = model_rhs(ctx, x + dt * k3, ue);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if (filter_current_mag(ctx, x) > p.current_limit)
            throw NonlinearExcursion("nonlinear excursion: current limit reached at t = " +
                                     std::to_string((k + 1) * dt) + " s");
        if (!x.allFinite())
            throw NumericalError("simulate_terminal: state diverged at t = " +
                                 std::to_string((k + 1) * dt) + " s");
    }
    return out;
}

lti::StateSpaceModel linearize(const IbrParameters& p, const network::DeviceOperatingPoint& op,
                               double f0_hz, const std::string& device_id) {
    const DeviceContext ctx = make_context(p, op, f0_hz);
    const VectorXd x0 = solve_equilibrium(ctx);
    const int nx = static_cast<int>(x0.size());

    lti::StateSpaceModel m;
    m.A = numeric_jacobian(
        [&](const VectorXd& x) { return model_rhs(ctx, x, ctx.v0); }, x0, nx);
    m.B = numeric_jacobian(
        [&](const VectorXd& u) { return model_rhs(ctx, x0, Vector2d(u(0), u(1))); },
        VectorXd(ctx.v0), nx);
    m.C = numeric_jacobian(
        [&](const VectorXd& x) { return VectorXd(terminal_current(ctx, x)); }, x0, 2);
    m.D = Eigen::MatrixXd::Zero(2, 2);  // the terminal current is a pure state readout

    m.state_tags.assign(nx, device_id);
    const std::string bus_label = std::to_string(op.bus_id);
    m.input_ports = {{bus_label, lti::Axis::d}, {bus_label, lti::Axis::q}};
    m.output_ports = m.input_ports;
    m.validate();
    return m;
}

Eigen::VectorXd equilibrium_state(const IbrParameters& p,
                                  const network::DeviceOperatingPoint& op, double f0_hz) {
    return solve_equilibrium(make_context(p, op, f0_hz));
}

std::vector<std::string> state_names(const IbrParameters& p) {
    if (p.kind == IbrKind::gfl)
        return {"delta",   "pll_integrator", "p_integrator", "q_integrator",
                "gamma_d", "gamma_q",        "i_d",          "i_q"};
    return {"delta", "p_filter", "q_filter", "xi_d", "xi_q", "gamma_d", "gamma_q", "i_d",
            "i_q"};
}

}  // namespace ssoscope::ibr
