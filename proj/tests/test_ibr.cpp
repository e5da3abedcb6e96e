#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "ssoscope/errors.hpp"
#include "ssoscope/ibr.hpp"
#include "ssoscope/lti.hpp"
#include "ssoscope/util.hpp"

using namespace ssoscope;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

constexpr double kF0 = 60.0;

ibr::IbrParameters gfl_defaults() {
    return ibr::load_ibr_parameters(std::filesystem::path(SSOSCOPE_CASE_DIR) /
                                    "gfl_default.json");
}

ibr::IbrParameters gfm_defaults() {
    return ibr::load_ibr_parameters(std::filesystem::path(SSOSCOPE_CASE_DIR) /
                                    "gfm_default.json");
}

// Operating point with the terminal conditions implied by an injected
// complex power s at voltage v.
network::DeviceOperatingPoint make_op(std::complex<double> v, std::complex<double> s) {
    network::DeviceOperatingPoint op;
    op.device_id = "DUT";
    op.bus_id = 5;
    op.p_pu = s.real();
    op.q_pu = s.imag();
    op.v_d = v.real();
    op.v_q = v.imag();
    const std::complex<double> i = std::conj(s / v);
    op.i_d = i.real();
    op.i_q = i.imag();
    return op;
}

// Parameters tuned so the device holds this operating point exactly.
ibr::IbrParameters at_op(ibr::IbrParameters p, const network::DeviceOperatingPoint& op) {
    return ibr::with_operating_setpoints(p, op);
}

ibr::TimeSeries flat_voltage(const network::DeviceOperatingPoint& op, double dt, double dur) {
    ibr::TimeSeries ts;
    ts.sample_period_s = dt;
    const int n = static_cast<int>(std::lround(dur / dt)) + 1;
    ts.add_channel("v_d", n);
    ts.add_channel("v_q", n);
    std::fill(ts.channels[0].begin(), ts.channels[0].end(), op.v_d);
    std::fill(ts.channels[1].begin(), ts.channels[1].end(), op.v_q);
    return ts;
}

// RK4 on the linearized model with the same input treatment as the bench,
// for deviation inputs du; returns total current i0 + C x.
ibr::TimeSeries integrate_linear(const lti::StateSpaceModel& m,
                                 const network::DeviceOperatingPoint& op,
                                 const ibr::TimeSeries& v_waveform) {
    const auto& vd = v_waveform.channel("v_d");
    const auto& vq = v_waveform.channel("v_q");
    const int n = v_waveform.length();
    const double dt = v_waveform.sample_period_s;
    const Vector2d i0(-op.i_d, -op.i_q);  // into-device at the operating point

    VectorXd x = VectorXd::Zero(m.A.rows());
    ibr::TimeSeries out;
    out.sample_period_s = dt;
    out.add_channel("i_d", n);
    out.add_channel("i_q", n);
    auto& id = out.channels[0];
    auto& iq = out.channels[1];

    auto rhs = [&](const VectorXd& xs, const Vector2d& du) -> VectorXd {
        return m.A * xs + m.B * du;
    };
    for (int k = 0; k < n; ++k) {
        const Vector2d y = i0 + Vector2d(m.C * x);
        id[k] = y(0);
        iq[k] = y(1);
        if (k + 1 == n) break;
        const Vector2d u0(vd[k] - op.v_d, vq[k] - op.v_q);
        const Vector2d u1(vd[k + 1] - op.v_d, vq[k + 1] - op.v_q);
        const Vector2d um = 0.5 * (u0 + u1);
        const VectorXd k1 = rhs(x, u0);
        const VectorXd k2 = rhs(x + 0.5 * dt * k1, um);
        const VectorXd k3 = rhs(x + 0.5 * dt * k2, um);
        const VectorXd k4 = rhs(x + dt * k3, u1);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return out;
}

double rms_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(acc / a.size());
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("parameter files load and reject foreign sections") {
    const auto gfl = gfl_defaults();
    CHECK(gfl.kind == ibr::IbrKind::gfl);
    CHECK(gfl.l_f == doctest::Approx(0.015));
    CHECK(gfl.pll.kp == doctest::Approx(80.0));
    CHECK(gfl.current_limit == doctest::Approx(25.0));

    const auto gfm = gfm_defaults();
    CHECK(gfm.kind == ibr::IbrKind::gfm);
    CHECK(gfm.m_p == doctest::Approx(4.0));
    CHECK(gfm.voltage_control.ki == doctest::Approx(40.0));

    const auto path = temp_file("bad_ibr.json");
    util::write_text_file(path, R"({
      "kind": "GFL",
      "filter": { "r_f": 0.0005, "l_f": 0.015 },
      "current_control": { "kp": 0.025, "ki": 3.0 },
      "pll": { "kp": 80.0, "ki": 3500.0 },
      "outer_power": { "kp": 0.3, "ki": 19.0 },
      "droop": { "m_p": 2.0, "n_q": 0.005 },
      "setpoints": {},
      "current_limit": 25.0
    })");
    CHECK_THROWS_WITH_AS(ibr::load_ibr_parameters(path),
                         doctest::Contains("'droop' does not belong to a GFL"), ConfigError);

    util::write_text_file(path, R"({ "kind": "STATCOM" })");
    CHECK_THROWS_WITH_AS(ibr::load_ibr_parameters(path), doctest::Contains("expected GFL or GFM"),
                         ConfigError);

    util::write_text_file(path, R"({
      "kind": "GFM",
      "filter": { "r_f": 0.0005, "l_f": 0.015 },
      "current_control": { "kp": 0.025, "ki": 3.0 },
      "droop": { "m_p": 2.0, "n_q": 0.005 },
      "setpoints": {},
      "current_limit": 25.0
    })");
    CHECK_THROWS_WITH_AS(ibr::load_ibr_parameters(path),
                         doctest::Contains("missing section 'voltage_control'"), ConfigError);

    std::filesystem::remove(path);
}

TEST_CASE("parameter validation rejects non-physical values") {
    auto p = gfl_defaults();
    p.l_f = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = gfl_defaults();
    p.current_limit = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = gfl_defaults();
    p.pll.ki = -2.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("equilibrium states satisfy the set-points exactly") {
    const auto op = make_op({1.0, 0.0}, {0.5, 0.1});
    for (bool gfm : {false, true}) {
        const auto p = at_op(gfm ? gfm_defaults() : gfl_defaults(), op);
        const VectorXd x0 = ibr::equilibrium_state(p, op, kF0);
        CHECK(x0.size() == (gfm ? 9 : 8));
        CHECK(std::abs(x0(0)) < 1e-12);  // delta = 0 when v_q = 0
        // Filter current equals the injected current in the device frame.
        CHECK(x0(gfm ? 7 : 6) == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(x0(gfm ? 8 : 7) == doctest::Approx(-0.1).epsilon(1e-10));
    }
}

TEST_CASE("flat waveform holds the operating point") {
    const auto op = make_op({0.98, 0.12}, {0.4, 0.05});
    for (bool gfm : {false, true}) {
        CAPTURE(gfm);
        const auto p = at_op(gfm ? gfm_defaults() : gfl_defaults(), op);
        const auto v = flat_voltage(op, 1e-4, 2.0);
        const auto out = ibr::simulate_terminal(p, op, kF0, v);
        CHECK(out.length() == v.length());
        const auto& id = out.channel("i_d");
        const auto& iq = out.channel("i_q");
        for (int k = 0; k < out.length(); k += 500) {
            CHECK(std::abs(id[k] - (-op.i_d)) < 1e-6);
            CHECK(std::abs(iq[k] - (-op.i_q)) < 1e-6);
        }
    }
}

TEST_CASE("small voltage step matches the linearized response") {
    const auto op = make_op({1.0, 0.0}, {0.6, -0.05});
    for (bool gfm : {false, true}) {
        CAPTURE(gfm);
        const auto p = at_op(gfm ? gfm_defaults() : gfl_defaults(), op);
        auto v = flat_voltage(op, 1e-4, 2.0);
        auto& vd = v.channels[0];
        for (std::size_t k = 1000; k < vd.size(); ++k) vd[k] += 1e-3;

        const auto nonlinear = ibr::simulate_terminal(p, op, kF0, v);
        const auto m = ibr::linearize(p, op, kF0, "DUT");
        const auto linear = integrate_linear(m, op, v);

        // The stiff voltage loop gives the GFM a larger quadratic term;
        // both bounds were checked to shrink 16x when the step halves twice.
        const double tol = gfm ? 1e-4 : 1e-5;
        CHECK(rms_diff(nonlinear.channel("i_d"), linear.channel("i_d")) < tol);
        CHECK(rms_diff(nonlinear.channel("i_q"), linear.channel("i_q")) < tol);
    }
}

TEST_CASE("multisine perturbation stays in the linear regime") {
    const auto op = make_op({1.0, 0.0}, {0.3, 0.0});
    const auto p = at_op(gfl_defaults(), op);
    auto v = flat_voltage(op, 1e-4, 1.0);
    auto& vd = v.channels[0];
    auto& vq = v.channels[1];
    for (std::size_t k = 0; k < vd.size(); ++k) {
        const double t = k * 1e-4;
        vd[k] += 1e-4 * (std::sin(2 * std::numbers::pi * 3.0 * t) +
                         std::sin(2 * std::numbers::pi * 17.0 * t));
        vq[k] += 1e-4 * std::sin(2 * std::numbers::pi * 7.0 * t);
    }
    const auto nonlinear = ibr::simulate_terminal(p, op, kF0, v);
    const auto m = ibr::linearize(p, op, kF0, "DUT");
    const auto linear = integrate_linear(m, op, v);
    CHECK(rms_diff(nonlinear.channel("i_d"), linear.channel("i_d")) < 1e-6);
    CHECK(rms_diff(nonlinear.channel("i_q"), linear.channel("i_q")) < 1e-6);
}

TEST_CASE("deep voltage sag winds the current up to the limit") {
    const auto op = make_op({1.0, 0.0}, {0.5, 0.0});
    auto p = at_op(gfl_defaults(), op);
    p.current_limit = 1.0;  // the sagged dispatch needs 2.5 pu, so this must trip
    auto v = flat_voltage(op, 1e-4, 1.0);
    auto& vd = v.channels[0];
    for (std::size_t k = 100; k < vd.size(); ++k) vd[k] = 0.2;
    CHECK_THROWS_WITH_AS(ibr::simulate_terminal(p, op, kF0, v),
                         doctest::Contains("nonlinear excursion"), NonlinearExcursion);
}

TEST_CASE("linearized models are stable and well-formed at dispatch") {
    const auto op = make_op({1.0, 0.02}, {0.7, 0.15});
    for (bool gfm : {false, true}) {
        CAPTURE(gfm);
        const auto p = at_op(gfm ? gfm_defaults() : gfl_defaults(), op);
        const auto m = ibr::linearize(p, op, kF0, "IBR9");
        CHECK(m.A.rows() == (gfm ? 9 : 8));
        CHECK(m.D.cwiseAbs().maxCoeff() == 0.0);
        CHECK(m.state_tags.size() == static_cast<std::size_t>(m.A.rows()));
        for (const auto& tag : m.state_tags) CHECK(tag == "IBR9");
        REQUIRE(m.input_ports.size() == 2);
        CHECK(m.input_ports[0].bus_id == "5");
        CHECK(m.input_ports[0].axis == lti::Axis::d);
        CHECK(m.output_ports[1].axis == lti::Axis::q);

        const auto eigs = lti::poles_of(m);
        for (int k = 0; k < eigs.size(); ++k) {
            CAPTURE(eigs(k));
            CHECK(eigs(k).real() < 0.0);
        }
    }
}

TEST_CASE("zero-power grid-following admittance has rotational symmetry") {
    const auto op = make_op({1.0, 0.0}, {0.0, 0.0});
    const auto p = at_op(gfl_defaults(), op);
    const auto m = ibr::linearize(p, op, kF0, "DUT");
    for (int k = 0; k < 20; ++k) {
        const double f = 0.5 * std::pow(400.0, k / 19.0);
        const auto y = lti::evaluate(m, f);
        CHECK(std::abs(y(0, 0) - y(1, 1)) < 1e-9);
        CHECK(std::abs(y(0, 1) + y(1, 0)) < 1e-9);
    }
}

TEST_CASE("set-points inconsistent with the terminal conditions are rejected") {
    auto op = make_op({1.0, 0.0}, {0.5, 0.1});
    auto p = at_op(gfl_defaults(), op);
    p.p_ref = 0.8;  // disagrees with op.p_pu
    CHECK_THROWS_WITH_AS(ibr::equilibrium_state(p, op, kF0), doctest::Contains("inconsistent"),
                         ConfigError);
}

TEST_CASE("waveform must start at the operating-point voltage") {
    const auto op = make_op({1.0, 0.0}, {0.2, 0.0});
    const auto p = at_op(gfl_defaults(), op);
    auto v = flat_voltage(op, 1e-4, 0.01);
    for (auto& s : v.channels[0]) s += 0.01;
    CHECK_THROWS_WITH_AS(ibr::simulate_terminal(p, op, kF0, v),
                         doctest::Contains("does not start at the operating-point"), ConfigError);
}

TEST_CASE("waveforms without both voltage channels are rejected") {
    const auto op = make_op({1.0, 0.0}, {0.2, 0.0});
    const auto p = at_op(gfl_defaults(), op);
    ibr::TimeSeries v;
    v.sample_period_s = 1e-4;
    v.add_channel("v_d", 100);
    std::fill(v.channels[0].begin(), v.channels[0].end(), 1.0);
    CHECK_THROWS_WITH_AS(ibr::simulate_terminal(p, op, kF0, v),
                         doctest::Contains("no channel 'v_q'"), ConfigError);
}

TEST_CASE("time series survive a CSV round trip with the pinned header") {
    ibr::TimeSeries ts;
    ts.sample_period_s = 2.5e-4;
    for (const char* name : {"v_d", "v_q", "i_d", "i_q"}) ts.add_channel(name, 40);
    for (int k = 0; k < 40; ++k) {
        ts.channels[0][k] = std::sin(0.1 * k);
        ts.channels[1][k] = std::cos(0.2 * k);
        ts.channels[2][k] = 0.5 * k;
        ts.channels[3][k] = -0.25 * k;
    }
    const auto path = temp_file("ts_roundtrip.csv");
    ibr::write_timeseries_csv(path, ts);

    const auto text = util::read_text_file(path);
    CHECK(text.rfind("t,v_d,v_q,i_d,i_q\n", 0) == 0);

    const auto back = ibr::read_timeseries_csv(path);
    CHECK(back.sample_period_s == doctest::Approx(2.5e-4).epsilon(1e-12));
    REQUIRE(back.channel_names == ts.channel_names);
    for (std::size_t c = 0; c < ts.channels.size(); ++c)
        for (int k = 0; k < 40; ++k)
            CHECK(back.channels[c][k] == doctest::Approx(ts.channels[c][k]).epsilon(1e-12));
    std::filesystem::remove(path);
}

TEST_CASE("with_operating_setpoints pins the dispatch to the solved flow") {
    const auto op = make_op({0.97, -0.08}, {-0.3, 0.2});
    const auto p = ibr::with_operating_setpoints(gfm_defaults(), op);
    CHECK(p.p_ref == doctest::Approx(-0.3));
    CHECK(p.q_ref == doctest::Approx(0.2));
    CHECK(p.v_ref == doctest::Approx(std::hypot(0.97, 0.08)));
    // The resulting equilibrium reproduces the operating point.
    const VectorXd x0 = ibr::equilibrium_state(p, op, kF0);
    CHECK(x0.allFinite());
}
