#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "ssoscope/errors.hpp"
#include "ssoscope/network.hpp"
#include "ssoscope/util.hpp"

using namespace ssoscope;
using oracles::Cplx;
using std::numbers::pi;

namespace {

network::NetworkCase kundur_case() {
    return network::load_case(std::filesystem::path(SSOSCOPE_CASE_DIR) /
                              "kundur11_modified.json");
}

network::BusSpec bus(int id, double b = 0.0, double g = 0.0) {
    network::BusSpec s;
    s.id = id;
    s.shunt_b_pu = b;
    s.shunt_g_pu = g;
    return s;
}

network::BranchSpec branch(int from, int to, double r, double x, double b = 0.0, int k = 1) {
    network::BranchSpec s;
    s.from_bus = from;
    s.to_bus = to;
    s.r_pu = r;
    s.x_pu = x;
    s.b_pu = b;
    s.parallel_count = k;
    return s;
}

network::DeviceSpec device(const std::string& id, int bus_id, network::DeviceKind kind,
                           double p, double q, std::optional<double> v = {},
                           network::IbrFamily family = network::IbrFamily::unspecified) {
    network::DeviceSpec d;
    d.device_id = id;
    d.bus_id = bus_id;
    d.kind = kind;
    d.family = family;
    d.p_set_pu = p;
    d.q_set_pu = q;
    d.v_set_pu = v;
    return d;
}

std::filesystem::path write_temp_json(const std::string& name, const std::string& body) {
    const auto dir = std::filesystem::temp_directory_path() / "ssoscope_net_test";
    std::filesystem::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST_CASE("bundled 11-bus case has the documented shape") {
    const auto c = kundur_case();
    CHECK(c.buses.size() == 11);
    int ibr_count = 0;
    for (const auto& d : c.devices)
        if (d.kind == network::DeviceKind::ibr) ++ibr_count;
    CHECK(ibr_count == 4);

    bool found = false;
    for (const auto& br : c.branches)
        if ((br.from_bus == 7 && br.to_bus == 9) || (br.from_bus == 9 && br.to_bus == 7)) {
            found = true;
            CHECK(br.parallel_count == 4);
        }
    CHECK(found);

    CHECK(c.device("IBR1").family == network::IbrFamily::gfl);
    CHECK(c.device("IBR3").family == network::IbrFamily::gfm);
    CHECK(c.resolve_slack() == "IBR3");
    CHECK(c.device("L9").kind == network::DeviceKind::load);
    CHECK(c.bus_index(7) == 6);
}

TEST_CASE("case validation names the offending element") {
    network::NetworkCase c;
    c.buses = {bus(1), bus(2), bus(3)};
    c.branches = {branch(1, 2, 0.0, 0.1)};
    c.devices = {device("G", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm)};
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("bus 3"), ConfigError);

    c.branches.push_back(branch(2, 3, 0.0, -0.1));
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("branches[1].x_pu"), ConfigError);

    c.branches[1].x_pu = 0.1;
    c.devices.push_back(device("G", 2, network::DeviceKind::load, 1.0, 0.0));
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("duplicate"), ConfigError);
}

TEST_CASE("loader rejects unknown fields and unknown kinds") {
    const auto p1 = write_temp_json("bad_field.json", R"({
        "base_mva": 100.0, "base_frequency_hz": 60.0,
        "buses": [{"id": 1, "shuntb": 0.1}],
        "branches": [], "devices": []})");
    CHECK_THROWS_WITH_AS((void)network::load_case(p1), doctest::Contains("shuntb"),
                         ConfigError);

    const auto p2 = write_temp_json("bad_kind.json", R"({
        "base_mva": 100.0, "base_frequency_hz": 60.0,
        "buses": [{"id": 1}],
        "branches": [],
        "devices": [{"device_id": "X", "bus_id": 1, "kind": "TURBINE",
                     "p_set_pu": 0.0, "q_set_pu": 0.0}]})");
    CHECK_THROWS_WITH_AS((void)network::load_case(p2),
                         doctest::Contains("unknown device kind 'TURBINE'"), ConfigError);

    CHECK_THROWS_AS((void)network::load_case("/nonexistent/case.json"), ConfigError);
}

TEST_CASE("single-bus flat start") {
    network::NetworkCase c;
    c.buses = {bus(1)};
    c.devices = {device("GFM", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm)};
    const auto op = network::solve_power_flow(c);
    CHECK(op.v_mag_pu[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(op.v_angle_rad[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(op.devices[0].p_pu) < 1e-9);
    // The default bus capacitor generates a sliver of reactive power the
    // slack must absorb.
    CHECK(op.devices[0].q_pu == doctest::Approx(-1e-4).epsilon(1e-6));
    CHECK(op.max_mismatch_pu < 1e-8);
}

TEST_CASE("two-bus lossless transfer follows the sine law") {
    network::NetworkCase c;
    c.buses = {bus(1), bus(2)};
    c.branches = {branch(1, 2, 0.0, 0.5)};
    c.devices = {device("S", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm),
                 device("G", 2, network::DeviceKind::ibr, 0.5, 0.0, 1.0,
                        network::IbrFamily::gfl)};
    const auto op = network::solve_power_flow(c);
    const double dth = op.v_angle_rad[1] - op.v_angle_rad[0];
    CHECK(dth == doctest::Approx(std::asin(0.25)).epsilon(1e-9));
    CHECK(op.devices[0].p_pu == doctest::Approx(-0.5).epsilon(1e-8));

    // dq components agree with magnitude/angle in the synchronous frame.
    const auto& g = op.device("G");
    CHECK(g.v_d == doctest::Approx(op.v_mag_pu[1] * std::cos(op.v_angle_rad[1])).epsilon(1e-12));
    CHECK(g.v_q == doctest::Approx(op.v_mag_pu[1] * std::sin(op.v_angle_rad[1])).epsilon(1e-12));
    const Cplx v(g.v_d, g.v_q), i(g.i_d, g.i_q);
    const Cplx s = v * std::conj(i);
    CHECK(s.real() == doctest::Approx(g.p_pu).epsilon(1e-10));
    CHECK(s.imag() == doctest::Approx(g.q_pu).epsilon(1e-10));
}

TEST_CASE("11-bus power flow converges with consistent terminals") {
    const auto c = kundur_case();
    const auto op = network::solve_power_flow(c);
    CHECK(op.max_mismatch_pu < 1e-8);

    for (double v : op.v_mag_pu) {
        CHECK(v > 0.85);
        CHECK(v < 1.15);
    }
    const auto& slack = op.device("IBR3");
    CHECK(slack.p_pu > 9.0);
    CHECK(slack.p_pu < 14.0);

    for (const auto& d : op.devices) {
        const int slot = op.bus_slot(d.bus_id);
        const Cplx v_polar = std::polar(op.v_mag_pu[slot], op.v_angle_rad[slot]);
        CHECK(std::abs(Cplx(d.v_d, d.v_q) - v_polar) < 1e-10);
        const Cplx s = Cplx(d.v_d, d.v_q) * std::conj(Cplx(d.i_d, d.i_q));
        CHECK(std::abs(s - Cplx(d.p_pu, d.q_pu)) < 1e-9);
    }
    // Non-slack devices hold their set-points.
    CHECK(op.device("IBR1").p_pu == doctest::Approx(7.0).epsilon(1e-10));
    CHECK(op.device("IBR2").p_pu == doctest::Approx(5.2).epsilon(1e-10));
    CHECK(op.device("L9").p_pu == doctest::Approx(-8.67).epsilon(1e-10));
}

TEST_CASE("operating point JSON round trip") {
    network::NetworkCase c;
    c.buses = {bus(1), bus(2)};
    c.branches = {branch(1, 2, 0.01, 0.2, 0.05)};
    c.devices = {device("S", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.02,
                        network::IbrFamily::gfm),
                 device("L", 2, network::DeviceKind::load, 0.4, 0.1)};
    const auto op = network::solve_power_flow(c);

    nlohmann::json j = op;
    network::OperatingPoint back = j.get<network::OperatingPoint>();
    REQUIRE(back.bus_ids == op.bus_ids);
    for (std::size_t i = 0; i < op.bus_ids.size(); ++i) {
        CHECK(back.v_mag_pu[i] == op.v_mag_pu[i]);
        CHECK(back.v_angle_rad[i] == op.v_angle_rad[i]);
    }
    REQUIRE(back.devices.size() == op.devices.size());
    CHECK(back.device("L").i_d == op.device("L").i_d);
    CHECK(back.max_mismatch_pu == op.max_mismatch_pu);
}

TEST_CASE("infeasible transfer reports divergence") {
    network::NetworkCase c;
    c.buses = {bus(1), bus(2)};
    c.branches = {branch(1, 2, 0.0, 0.5)};
    c.devices = {device("S", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm),
                 device("L", 2, network::DeviceKind::load, 100.0, 0.0)};
    CHECK_THROWS_AS((void)network::solve_power_flow(c), NumericalError);
}

TEST_CASE("single-bus capacitor dynamics") {
    network::NetworkCase c;
    c.buses = {bus(1, 0.01)};
    c.devices = {device("G", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm)};
    const double w0 = c.omega0();

    auto grid = network::build_grid_model(c);
    REQUIRE(grid.model.order() == 2);
    auto eigs = lti::poles_of(grid.model);
    std::vector<Cplx> ev{eigs(0), eigs(1)};
    std::sort(ev.begin(), ev.end(), [](Cplx a, Cplx b) { return a.imag() < b.imag(); });
    CHECK(std::abs(ev[0] - Cplx(0.0, -w0)) < 1e-9 * w0);
    CHECK(std::abs(ev[1] - Cplx(0.0, w0)) < 1e-9 * w0);

    // Added parallel conductance shifts the real part by -g/C.
    c.buses[0].shunt_g_pu = 0.002;
    auto damped = network::build_grid_model(c);
    eigs = lti::poles_of(damped.model);
    const double re_expected = -0.002 * w0 / 0.01;
    CHECK(eigs(0).real() == doctest::Approx(re_expected).epsilon(1e-9));
    CHECK(std::abs(std::abs(eigs(0).imag()) - w0) < 1e-9 * w0);
}

TEST_CASE("two-bus grid impedance matches the shifted nodal oracle") {
    network::NetworkCase c;
    c.buses = {bus(1, 0.01), bus(2, 0.02)};
    c.branches = {branch(1, 2, 0.01, 0.1, 0.02)};
    c.devices = {device("A", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm),
                 device("B", 2, network::DeviceKind::ibr, 0.0, 0.0)};
    const auto grid = network::build_grid_model(c);
    CHECK(grid.model.order() == 6);
    CHECK(grid.model.D.norm() == 0.0);
    for (const auto& t : grid.model.state_tags) CHECK(t == "network");

    for (int k = 0; k < 100; ++k) {
        const double f = 0.1 * std::pow(300.0 / 0.1, k / 99.0);
        const auto z = lti::evaluate(grid.model, f);
        const auto zo = oracles::dq_shifted(
            [&](Cplx s) { return oracles::nodal_impedance(c, s); }, 2 * pi * f, c.omega0());
        CHECK((z - zo).norm() < 1e-8 * zo.norm());
    }
}

TEST_CASE("11-bus grid impedance: oracle match, passivity, reciprocity") {
    const auto c = kundur_case();
    const auto grid = network::build_grid_model(c);
    CHECK(grid.model.order() == 2 * 10 + 2 * 11);  // 10 branches + 11 buses
    CHECK(grid.model.num_inputs() == 16);
    CHECK(grid.extended_output.rows() == 22);

    const auto dev_rows = [&] {
        std::vector<int> rows;
        for (const auto& d : c.devices) {
            const int b = c.bus_index(d.bus_id);
            rows.push_back(2 * b);
            rows.push_back(2 * b + 1);
        }
        return rows;
    }();

    for (int k = 0; k < 20; ++k) {
        const double f = 0.5 * std::pow(200.0 / 0.5, k / 19.0);
        const auto z = lti::evaluate(grid.model, f);
        const auto zfull = oracles::dq_shifted(
            [&](Cplx s) { return oracles::nodal_impedance(c, s); }, 2 * pi * f, c.omega0());
        Eigen::MatrixXcd zo(12, 12);
        for (int i = 0; i < 12; ++i)
            for (int j = 0; j < 12; ++j) zo(i, j) = zfull(dev_rows[i], dev_rows[j]);
        CHECK((z - zo).norm() < 1e-8 * zo.norm());
    }

    const auto eigs = lti::poles_of(grid.model);
    for (int i = 0; i < eigs.size(); ++i) CHECK(eigs(i).real() < 1e-9);

    // Reciprocity: the 2x2 block coupling device i to device j equals the
    // block coupling j to i.
    const auto z = lti::evaluate(grid.model, 13.7);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const auto bij = z.block(2 * i, 2 * j, 2, 2);
            const auto bji = z.block(2 * j, 2 * i, 2, 2);
            CHECK((bij - bji).norm() < 1e-9 * z.norm());
        }
}

TEST_CASE("parallel_count equals explicit duplicate branches") {
    network::NetworkCase merged;
    merged.buses = {bus(1, 0.01), bus(2, 0.015)};
    merged.branches = {branch(1, 2, 0.02, 0.3, 0.04, 3)};
    merged.devices = {device("A", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                             network::IbrFamily::gfm)};

    network::NetworkCase expanded = merged;
    expanded.branches = {branch(1, 2, 0.02, 0.3, 0.04), branch(1, 2, 0.02, 0.3, 0.04),
                         branch(1, 2, 0.02, 0.3, 0.04)};

    const auto za = network::build_grid_model(merged);
    const auto zb = network::build_grid_model(expanded);
    CHECK(za.model.order() == 6);
    CHECK(zb.model.order() == 10);
    for (double f : {0.3, 1.0, 7.7, 31.0, 59.9, 60.1, 144.0}) {
        const auto ha = lti::evaluate(za.model, f);
        const auto hb = lti::evaluate(zb.model, f);
        CHECK((ha - hb).norm() < 1e-10 * std::max(1.0, ha.norm()));
    }
}

TEST_CASE("default shunt keeps device buses dynamic") {
    network::NetworkCase c;
    c.buses = {bus(1), bus(2, 0.01)};
    c.branches = {branch(1, 2, 0.0, 0.1)};
    c.devices = {device("A", 1, network::DeviceKind::ibr, 0.0, 0.0, 1.0,
                        network::IbrFamily::gfm)};
    CHECK(c.total_shunt_b(1) == doctest::Approx(1e-4));

    c.default_shunt_b = 0.0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("no shunt capacitance"), ConfigError);
}

TEST_CASE("load admittance block orientation") {
    network::DeviceOperatingPoint op;
    op.device_id = "L";
    op.bus_id = 4;
    op.p_pu = -0.5;  // consumes 0.5 pu, the two-ohm resistor at 1 pu voltage
    op.q_pu = 0.0;
    op.v_d = 1.0;
    op.v_q = 0.0;
    auto blk = network::load_admittance_block(op);
    CHECK(blk.order() == 0);
    CHECK((blk.D - 0.5 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
    CHECK(blk.input_ports[0].bus_id == "4");

    op.p_pu = -1.0;
    op.q_pu = -0.5;
    blk = network::load_admittance_block(op);
    Eigen::MatrixXd want(2, 2);
    want << 1.0, 0.5, -0.5, 1.0;
    CHECK((blk.D - want).norm() < 1e-14);

    // An inductive load damps; its conductance must stay positive and its
    // susceptance negative in the admittance sense.
    CHECK(blk.D(0, 0) > 0.0);
    CHECK(blk.D(1, 0) == -blk.D(0, 1));
}
