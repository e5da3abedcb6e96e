#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "oracles.hpp"
#include "ssoscope/errors.hpp"
#include "ssoscope/fitting.hpp"
#include "ssoscope/lti.hpp"
#include "ssoscope/util.hpp"

using namespace ssoscope;
using oracles::Cplx;
using std::numbers::pi;

namespace {

std::vector<double> log_grid(double f_lo, double f_hi, int n) {
    std::vector<double> f(n);
    for (int i = 0; i < n; ++i)
        f[i] = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / (n - 1));
    return f;
}

lti::FrequencyResponse sample_oracle(const lti::PoleResidueModel& m,
                                     const std::vector<double>& f_hz) {
    lti::FrequencyResponse fr;
    fr.frequencies_hz = f_hz;
    for (double f : f_hz) fr.samples.push_back(oracles::rational_sum(m, Cplx(0.0, 2 * pi * f)));
    return fr;
}

// Every true pole must have a fitted pole within rel_tol, and the counts
// must agree.
double worst_pole_recovery(const std::vector<Cplx>& truth, const std::vector<Cplx>& fit) {
    REQUIRE(truth.size() == fit.size());
    double worst = 0.0;
    for (const auto& p : truth) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : fit) best = std::min(best, std::abs(p - q));
        worst = std::max(worst, best / std::abs(p));
    }
    return worst;
}

}  // namespace

TEST_CASE("single real pole recovered from exact samples") {
    lti::PoleResidueModel truth;
    truth.poles = {Cplx(-1.0, 0.0)};
    truth.residues = {Eigen::MatrixXcd::Constant(1, 1, Cplx(1.0, 0.0))};
    truth.direct = Eigen::MatrixXd::Zero(1, 1);

    const auto fr = sample_oracle(truth, log_grid(0.01, 10.0, 30));
    const auto [model, report] = fitting::vector_fit(fr, 1);

    REQUIRE(model.poles.size() == 1);
    CHECK(std::abs(model.poles[0] - Cplx(-1.0, 0.0)) < 1e-8);
    CHECK(std::abs(model.residues[0](0, 0) - Cplx(1.0, 0.0)) < 1e-8);
    CHECK(std::abs(model.direct(0, 0)) < 1e-8);
    CHECK(report.rms_relative_error < 1e-10);
    CHECK(report.model_order == 1);
    CHECK(report.iterations_used >= 1);
}

TEST_CASE("constant response lands in the direct term") {
    Eigen::MatrixXd d(2, 2);
    d << 2.0, -0.5, 0.3, 1.0;
    lti::FrequencyResponse fr;
    fr.frequencies_hz = log_grid(0.1, 100.0, 40);
    for (std::size_t i = 0; i < fr.frequencies_hz.size(); ++i)
        fr.samples.push_back(d.cast<Cplx>());

    const auto [model, report] = fitting::vector_fit(fr, 2);
    CHECK(report.rms_relative_error < 1e-10);
    CHECK((model.direct - d).norm() < 1e-8 * d.norm());
    for (const auto& r : model.residues) CHECK(r.norm() < 1e-7 * d.norm());
}

TEST_CASE("order-6 model round trip: poles, residues, response") {
    util::Rng rng(401);
    const auto truth = oracles::random_stable_model(rng, 6, 2, 2, 2 * pi * 0.5, 2 * pi * 50.0);
    const auto fr = sample_oracle(truth, log_grid(0.1, 100.0, 120));

    const auto [model, report] = fitting::vector_fit(fr, 6);
    CHECK(report.rms_relative_error < 1e-9);
    CHECK(worst_pole_recovery(truth.poles, model.poles) < 1e-7);

    // Response agreement off the fit grid.
    for (double f : log_grid(0.17, 77.0, 31)) {
        const auto a = oracles::rational_sum(truth, Cplx(0.0, 2 * pi * f));
        const auto b = lti::evaluate(model, f);
        CHECK((a - b).norm() < 1e-7 * std::max(1.0, a.norm()));
    }
}

TEST_CASE("batch recovery across orders 2..12") {
    util::Rng rng(77);
    for (int order : {2, 3, 5, 8, 12}) {
        CAPTURE(order);
        const auto truth =
            oracles::random_stable_model(rng, order, 2, 2, 2 * pi * 0.5, 2 * pi * 50.0);
        const auto fr = sample_oracle(truth, log_grid(0.1, 100.0, 140));
        const auto [model, report] = fitting::vector_fit(fr, order);
        CHECK(report.rms_relative_error < 1e-8);
        CHECK(worst_pole_recovery(truth.poles, model.poles) < 1e-6);
        CHECK(report.stability_flips == 0);
    }
}

TEST_CASE("order scan stops at the first order meeting the threshold") {
    util::Rng rng(19);
    const auto truth = oracles::random_stable_model(rng, 6, 2, 2, 2 * pi * 1.0, 2 * pi * 30.0);
    const auto fr = sample_oracle(truth, log_grid(0.1, 100.0, 120));

    const auto [model, report] = fitting::select_order(fr, 2, 12, 1e-6);
    CHECK(report.met_threshold);
    CHECK(report.rms_relative_error <= 1e-6);
    CHECK(report.model_order <= 6);

    // Impossible threshold: best effort comes back flagged.
    fitting::FitOptions opts;
    opts.max_iterations = 8;
    const auto [m2, r2] = fitting::select_order(fr, 1, 2, 1e-14, opts);
    CHECK_FALSE(r2.met_threshold);
}

TEST_CASE("unstable data is reflected into the left half plane") {
    lti::PoleResidueModel truth;
    truth.poles = {Cplx(1.0, 0.0)};
    truth.residues = {Eigen::MatrixXcd::Constant(1, 1, Cplx(1.0, 0.0))};
    truth.direct = Eigen::MatrixXd::Zero(1, 1);
    const auto fr = sample_oracle(truth, log_grid(0.01, 10.0, 30));

    const auto [model, report] = fitting::vector_fit(fr, 1);
    CHECK(report.stability_flips >= 1);
    for (const auto& p : model.poles) CHECK(p.real() < 0.0);

    fitting::FitOptions loose;
    loose.enforce_stability = false;
    const auto [m2, r2] = fitting::vector_fit(fr, 1, loose);
    REQUIRE(m2.poles.size() == 1);
    CHECK(std::abs(m2.poles[0] - Cplx(1.0, 0.0)) < 1e-8);
    CHECK(r2.stability_flips == 0);
}

TEST_CASE("inverse magnitude weighting handles an identically zero entry") {
    util::Rng rng(23);
    auto truth = oracles::random_stable_model(rng, 4, 2, 2, 2 * pi * 1.0, 2 * pi * 20.0);
    for (auto& r : truth.residues) r(0, 1) = Cplx(0.0, 0.0);
    truth.direct(0, 1) = 0.0;
    const auto fr = sample_oracle(truth, log_grid(0.1, 100.0, 100));

    fitting::FitOptions opts;
    opts.weighting = fitting::Weighting::inverse_magnitude;
    const auto [model, report] = fitting::vector_fit(fr, 4, opts);
    CHECK(report.rms_relative_error < 1e-8);
    double zero_entry = 0.0, scale = 0.0;
    for (double f : log_grid(0.1, 100.0, 25)) {
        const auto h = lti::evaluate(model, f);
        zero_entry = std::max(zero_entry, std::abs(h(0, 1)));
        scale = std::max(scale, h.norm());
    }
    CHECK(zero_entry < 1e-7 * scale);
}

TEST_CASE("sigma comparison against an independent realization") {
    util::Rng rng(31);
    const auto truth = oracles::random_stable_model(rng, 6, 2, 2, 2 * pi * 1.0, 2 * pi * 40.0);
    const auto fr = sample_oracle(truth, log_grid(0.1, 100.0, 120));
    const auto [model, report] = fitting::vector_fit(fr, 6);

    const auto ss = lti::realize(truth, "ref");
    const auto cmp = fitting::compare_sigma(model, ss, log_grid(0.2, 80.0, 40));
    CHECK(cmp.max_relative_deviation < 1e-6);
    REQUIRE(cmp.sigma_fit.size() == 40);
    REQUIRE(cmp.sigma_fit.front().size() == 2);

    const auto dir = std::filesystem::temp_directory_path() / "ssoscope_fit_test";
    std::filesystem::create_directories(dir);
    const auto csv = dir / "sigma.csv";
    fitting::write_sigma_csv(csv, cmp);
    const auto table = util::read_csv(csv);
    REQUIRE(table.header.size() == 5);
    CHECK(table.header[0] == "f_hz");
    CHECK(table.header[1] == "sigma1_fit");
    CHECK(table.header[2] == "sigma2_fit");
    CHECK(table.header[3] == "sigma1_ref");
    CHECK(table.header[4] == "sigma2_ref");
    CHECK(table.rows.size() == 40);
    CHECK(table.rows[7][1] == doctest::Approx(cmp.sigma_fit[7][0]).epsilon(1e-12));
    std::filesystem::remove_all(dir);
}

TEST_CASE("fit preconditions") {
    lti::FrequencyResponse fr;
    fr.frequencies_hz = {1.0, 2.0, 3.0, 4.0};
    for (int i = 0; i < 4; ++i) fr.samples.push_back(Eigen::MatrixXcd::Identity(2, 2));

    CHECK_THROWS_AS((void)fitting::vector_fit(fr, 0), ConfigError);
    CHECK_THROWS_AS((void)fitting::vector_fit(fr, 2), ConfigError);  // needs 6 samples
    CHECK_THROWS_AS((void)fitting::select_order(fr, 3, 2, 1e-3), ConfigError);
    CHECK_THROWS_AS((void)fitting::select_order(fr, 2, 8, 1e-3), ConfigError);
}
