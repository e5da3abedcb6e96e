#include "ssoscope/probe.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <set>

#include <unsupported/Eigen/MatrixFunctions>

#include "ssoscope/errors.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::probe {
namespace {

using Eigen::Matrix2cd;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

constexpr double kPi = std::numbers::pi;

// Number of samples spanning the periodic window: N * dt = span exactly.
int window_samples(double span_s, double rate_hz, const char* what, int min_n = 2) {
    const double raw = span_s * rate_hz;
    const long n = std::lround(raw);
    if (n < min_n || std::abs(raw - n) > 1e-6)
        throw ConfigError(std::string(what) + ": duration is not a whole number of samples");
    return static_cast<int>(n);
}

double multisine_value(const PerturbationPlan& plan, double t) {
    double s = 0.0;
    for (std::size_t l = 0; l < plan.bin_frequencies_hz.size(); ++l)
        s += plan.amplitude_pu[l] *
             std::sin(2.0 * kPi * plan.bin_frequencies_hz[l] * t + plan.phases_rad[l]);
    return s;
}

// First zero crossing of the multisine, so experiments can start exactly
// at the operating-point voltage and stay periodic afterwards.
double multisine_start_offset(const PerturbationPlan& plan) {
    const double total =
        std::accumulate(plan.amplitude_pu.begin(), plan.amplitude_pu.end(), 0.0);
    if (total <= 0.0) return 0.0;
    double t0 = 0.0, s0 = multisine_value(plan, 0.0);
    if (std::abs(s0) < 1e-12 * total) return 0.0;
    const double step = 1.0 / plan.sample_rate_hz;
    double t1 = t0, s1 = s0;
    for (int k = 1; k <= std::lround(plan.record_time_s * plan.sample_rate_hz); ++k) {
        t1 = k * step;
        s1 = multisine_value(plan, t1);
        if (s0 * s1 <= 0.0) break;
        t0 = t1;
        s0 = s1;
    }
    if (s0 * s1 > 0.0)
        throw NumericalError("multisine has no zero crossing over one period");
    for (int it = 0; it < 80; ++it) {
        const double tm = 0.5 * (t0 + t1);
        const double sm = multisine_value(plan, tm);
        if (s0 * sm <= 0.0) {
            t1 = tm;
            s1 = sm;
        } else {
            t0 = tm;
            s0 = sm;
        }
    }
    return 0.5 * (t0 + t1);
}

ibr::TimeSeries make_axis_waveform(const network::DeviceOperatingPoint& op,
                                   const PerturbationPlan& plan, bool q_axis) {
    const double dt = 1.0 / plan.sample_rate_hz;
    const int n_settle =
        window_samples(plan.settle_time_s, plan.sample_rate_hz, "settle window", 0);
    const int n_rec = window_samples(plan.record_time_s, plan.sample_rate_hz, "record window");
    const double t_off = multisine_start_offset(plan);

    ibr::TimeSeries w;
    w.sample_period_s = dt;
    w.add_channel("v_d", n_settle + n_rec);
    w.add_channel("v_q", n_settle + n_rec);
    auto& vd = w.channel("v_d");
    auto& vq = w.channel("v_q");
    for (int k = 0; k < n_settle + n_rec; ++k) {
        const double s = multisine_value(plan, k * dt + t_off);
        vd[k] = op.v_d + (q_axis ? 0.0 : s);
        vq[k] = op.v_q + (q_axis ? s : 0.0);
    }
    return w;
}

ibr::TimeSeries trim_record(const ibr::TimeSeries& waveform, const ibr::TimeSeries& response,
                            int n_rec) {
    ibr::TimeSeries rec;
    rec.sample_period_s = waveform.sample_period_s;
    const int total = waveform.length();
    const int start = total - n_rec;
    for (const char* name : {"v_d", "v_q"}) {
        rec.add_channel(name, n_rec);
        const auto& src = waveform.channel(name);
        std::copy(src.begin() + start, src.end(), rec.channel(name).begin());
    }
    for (const char* name : {"i_d", "i_q"}) {
        rec.add_channel(name, n_rec);
        const auto& src = response.channel(name);
        std::copy(src.begin() + start, src.end(), rec.channel(name).begin());
    }
    return rec;
}

Matrix2cd bin_solve(const ibr::TimeSeries& rec_d, const ibr::TimeSeries& rec_q, double dt,
                    double f_hz) {
    Matrix2cd v, i;
    v(0, 0) = util::dft_line(rec_d.channel("v_d"), dt, f_hz);
    v(1, 0) = util::dft_line(rec_d.channel("v_q"), dt, f_hz);
    v(0, 1) = util::dft_line(rec_q.channel("v_d"), dt, f_hz);
    v(1, 1) = util::dft_line(rec_q.channel("v_q"), dt, f_hz);
    i(0, 0) = util::dft_line(rec_d.channel("i_d"), dt, f_hz);
    i(1, 0) = util::dft_line(rec_d.channel("i_q"), dt, f_hz);
    i(0, 1) = util::dft_line(rec_q.channel("i_d"), dt, f_hz);
    i(1, 1) = util::dft_line(rec_q.channel("i_q"), dt, f_hz);

    Eigen::JacobiSVD<Matrix2cd> svd(v);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(1);
    if (smin <= 0.0 || smax / smin > 1e6)
        throw NumericalError("insufficient excitation at " + util::fmt_double(f_hz) + " Hz");
    return i * v.inverse();
}

}  // namespace

void PerturbationPlan::validate() const {
    if (record_time_s <= 0.0) throw ConfigError("plan: record_time_s must be > 0");
    if (settle_time_s < 0.0) throw ConfigError("plan: settle_time_s must be >= 0");
    if (bin_frequencies_hz.empty()) throw ConfigError("plan: no bins");
    if (amplitude_pu.size() != bin_frequencies_hz.size() ||
        phases_rad.size() != bin_frequencies_hz.size())
        throw ConfigError("plan: amplitude/phase lists must match the bin list");
    const double df = 1.0 / record_time_s;
    double prev = 0.0;
    for (double f : bin_frequencies_hz) {
        const double k = f / df;
        if (std::abs(k - std::round(k)) > 1e-6)
            throw ConfigError("plan: bin " + util::fmt_double(f) +
                              " Hz is not a multiple of 1/record_time");
        if (f < band_hz.first - 1e-9 || f > band_hz.second + 1e-9)
            throw ConfigError("plan: bin " + util::fmt_double(f) + " Hz outside the band");
        if (f <= prev) throw ConfigError("plan: bins must be strictly increasing");
        prev = f;
    }
    for (double a : amplitude_pu)
        if (a < 0.0) throw ConfigError("plan: negative amplitude");
    if (sample_rate_hz <= 10.0 * band_hz.second)
        throw ConfigError("plan: sample rate must exceed 10x the band edge");
}

nlohmann::json to_json(const PerturbationPlan& plan) {
    return nlohmann::json{{"band_hz", {plan.band_hz.first, plan.band_hz.second}},
                          {"bin_frequencies_hz", plan.bin_frequencies_hz},
                          {"amplitude_pu", plan.amplitude_pu},
                          {"phases_rad", plan.phases_rad},
                          {"settle_time_s", plan.settle_time_s},
                          {"record_time_s", plan.record_time_s},
                          {"sample_rate_hz", plan.sample_rate_hz}};
}

PerturbationPlan plan_from_json(const nlohmann::json& j) {
    PerturbationPlan p;
    const std::set<std::string> known{"band_hz",      "bin_frequencies_hz", "amplitude_pu",
                                      "phases_rad",   "settle_time_s",      "record_time_s",
                                      "sample_rate_hz"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("plan: unknown field '" + it.key() + "'");
    const auto& band = j.at("band_hz");
    p.band_hz = {band.at(0).get<double>(), band.at(1).get<double>()};
    p.bin_frequencies_hz = j.at("bin_frequencies_hz").get<std::vector<double>>();
    p.amplitude_pu = j.at("amplitude_pu").get<std::vector<double>>();
    p.phases_rad = j.at("phases_rad").get<std::vector<double>>();
    p.settle_time_s = j.at("settle_time_s").get<double>();
    p.record_time_s = j.at("record_time_s").get<double>();
    p.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    p.validate();
    return p;
}

PerturbationPlan design_multisine(std::pair<double, double> band_hz, int n_bins,
                                  double amplitude_pu, double record_time_s) {
    if (n_bins < 2) throw ConfigError("design_multisine: need at least two bins");
    if (band_hz.first <= 0.0 || band_hz.second <= band_hz.first)
        throw ConfigError("design_multisine: invalid band");
    if (record_time_s <= 0.0) throw ConfigError("design_multisine: invalid record time");
    const double df = 1.0 / record_time_s;
    if (band_hz.first < df - 1e-12)
        throw ConfigError("design_multisine: band infeasible for record length (f_min < 1/T)");

    const long k_lo = std::lround(std::ceil(band_hz.first / df - 1e-9));
    const long k_hi = std::lround(std::floor(band_hz.second / df + 1e-9));
    if (k_hi < k_lo)
        throw ConfigError("design_multisine: band infeasible for record length (no bins)");

    std::set<long> ks;
    const double ratio = band_hz.second / band_hz.first;
    for (int i = 0; i < n_bins; ++i) {
        const double target = band_hz.first * std::pow(ratio, double(i) / (n_bins - 1));
        ks.insert(std::clamp(std::lround(target / df), k_lo, k_hi));
    }

    PerturbationPlan plan;
    plan.band_hz = band_hz;
    plan.record_time_s = record_time_s;
    const long l_total = static_cast<long>(ks.size());
    long l = 1;
    for (long k : ks) {
        plan.bin_frequencies_hz.push_back(k * df);
        plan.amplitude_pu.push_back(amplitude_pu);
        plan.phases_rad.push_back(-kPi * double(l) * double(l - 1) / double(l_total));
        ++l;
    }
    plan.sample_rate_hz = std::max(10000.0, 20.0 * band_hz.second);
    plan.validate();
    return plan;
}

IbrTerminal::IbrTerminal(ibr::IbrParameters params, network::DeviceOperatingPoint op,
                         double f0_hz)
    : params_(std::move(params)), op_(std::move(op)), f0_hz_(f0_hz) {}

ibr::TimeSeries IbrTerminal::respond(const ibr::TimeSeries& v_waveform, ibr::InputHold hold) {
    return ibr::simulate_terminal(params_, op_, f0_hz_, v_waveform, hold);
}

LinearTerminal::LinearTerminal(lti::StateSpaceModel model, network::DeviceOperatingPoint op)
    : model_(std::move(model)), op_(std::move(op)) {
    model_.validate();
    if (model_.num_inputs() != 2 || model_.num_outputs() != 2)
        throw ConfigError("LinearTerminal: model must be 2x2");
}

ibr::TimeSeries LinearTerminal::respond(const ibr::TimeSeries& v_waveform,
                                        ibr::InputHold hold) {
    v_waveform.validate();
    const auto& vd = v_waveform.channel("v_d");
    const auto& vq = v_waveform.channel("v_q");
    const int n = v_waveform.length();
    const double dt = v_waveform.sample_period_s;
    const int nx = model_.order();

    // Exact discretization via the augmented exponential: F = e^(A dt),
    // G1 = int e^(A(dt-s)) B ds, G2 = int e^(A(dt-s)) B s ds.
    const int m = 2;
    MatrixXd aug = MatrixXd::Zero(nx + 2 * m, nx + 2 * m);
    aug.topLeftCorner(nx, nx) = model_.A;
    aug.block(0, nx, nx, m) = model_.B;
    aug.block(nx, nx + m, m, m) = MatrixXd::Identity(m, m);
    const MatrixXd e = (aug * dt).exp();
    const MatrixXd f = e.topLeftCorner(nx, nx);
    const MatrixXd g1 = e.block(0, nx, nx, m);
    const MatrixXd g2 = e.block(0, nx + m, nx, m);
    const MatrixXd b_now =
        hold == ibr::InputHold::linear ? MatrixXd(g1 - g2 / dt) : g1;
    const MatrixXd b_next =
        hold == ibr::InputHold::linear ? MatrixXd(g2 / dt) : MatrixXd::Zero(nx, m);

    const Vector2d base(-op_.i_d, -op_.i_q);
    ibr::TimeSeries out;
    out.sample_period_s = dt;
    out.add_channel("i_d", n);
    out.add_channel("i_q", n);
    auto& id = out.channel("i_d");
    auto& iq = out.channel("i_q");

    VectorXd x = VectorXd::Zero(nx);
    for (int k = 0; k < n; ++k) {
        const Vector2d u(vd[k] - op_.v_d, vq[k] - op_.v_q);
        const Vector2d y = base + Vector2d(model_.C * x) + Vector2d(model_.D * u);
        id[k] = y(0);
        iq[k] = y(1);
        if (k + 1 == n) break;
        const Vector2d u1(vd[k + 1] - op_.v_d, vq[k + 1] - op_.v_q);
        x = f * x + b_now * u + b_next * u1;
    }
    return out;
}

std::pair<ibr::TimeSeries, ibr::TimeSeries> run_axis_experiments(
    BlackBoxTerminal& device, const network::DeviceOperatingPoint& op,
    const PerturbationPlan& plan) {
    plan.validate();
    const int n_rec = window_samples(plan.record_time_s, plan.sample_rate_hz, "record window");

    const auto wave_d = make_axis_waveform(op, plan, false);
    const auto wave_q = make_axis_waveform(op, plan, true);
    const auto resp_d = device.respond(wave_d, ibr::InputHold::linear);
    const auto resp_q = device.respond(wave_q, ibr::InputHold::linear);
    return {trim_record(wave_d, resp_d, n_rec), trim_record(wave_q, resp_q, n_rec)};
}

lti::FrequencyResponse extract_frequency_response(
    const std::pair<ibr::TimeSeries, ibr::TimeSeries>& records,
    const PerturbationPlan& plan) {
    plan.validate();
    const auto& rec_d = records.first;
    const auto& rec_q = records.second;
    rec_d.validate();
    rec_q.validate();
    const double dt = rec_d.sample_period_s;
    if (std::abs(rec_q.sample_period_s - dt) > 1e-12)
        throw ConfigError("extract_frequency_response: records disagree on sample period");
    for (const auto* rec : {&rec_d, &rec_q})
        if (std::abs(rec->length() * dt - plan.record_time_s) > 1e-6 * plan.record_time_s)
            throw ConfigError(
                "extract_frequency_response: record does not span record_time exactly");

    lti::FrequencyResponse fr;
    for (double f : plan.bin_frequencies_hz) {
        fr.frequencies_hz.push_back(f);
        fr.samples.push_back(bin_solve(rec_d, rec_q, dt, f));
    }
    fr.validate();
    return fr;
}

lti::FrequencyResponse sweep_single_sine(BlackBoxTerminal& device,
                                         const network::DeviceOperatingPoint& op,
                                         const std::vector<double>& frequencies_hz,
                                         double amplitude_pu, double sample_rate_hz) {
    lti::FrequencyResponse fr;
    for (double f : frequencies_hz) {
        if (f <= 0.0) throw ConfigError("sweep: frequencies must be positive");
        const double fs =
            sample_rate_hz > 0.0 ? sample_rate_hz : std::max(10000.0, 20.0 * f);
        // Smallest window >= 1 s holding whole periods and whole samples.
        long periods = std::lround(std::ceil(f * 1.0 - 1e-9));
        bool found = false;
        double t_rec = 0.0;
        for (; periods < 100000; ++periods) {
            const double raw = periods / f * fs;
            if (std::abs(raw - std::lround(raw)) < 1e-6) {
                t_rec = std::lround(raw) / fs;
                found = true;
                break;
            }
        }
        if (!found)
            throw ConfigError("sweep: " + util::fmt_double(f) +
                              " Hz does not admit an integer number of periods");

        PerturbationPlan plan;
        plan.band_hz = {f, f};
        plan.bin_frequencies_hz = {f};
        plan.amplitude_pu = {amplitude_pu};
        plan.phases_rad = {0.0};
        plan.record_time_s = t_rec;
        plan.sample_rate_hz = fs;
        const auto records = run_axis_experiments(device, op, plan);
        fr.frequencies_hz.push_back(f);
        fr.samples.push_back(
            bin_solve(records.first, records.second, 1.0 / fs, f));
    }
    fr.validate();
    return fr;
}

std::pair<ibr::TimeSeries, ibr::TimeSeries> run_pulse_experiments(
    BlackBoxTerminal& device, const network::DeviceOperatingPoint& op, double sample_period_s,
    double duration_s, double pulse_height_pu, double bench_rate_hz) {
    if (sample_period_s <= 0.0 || pulse_height_pu <= 0.0)
        throw ConfigError("run_pulse_experiments: bad pulse parameters");
    const double raw_stride = sample_period_s * bench_rate_hz;
    const int stride = static_cast<int>(std::lround(raw_stride));
    if (stride < 1 || std::abs(raw_stride - stride) > 1e-9)
        throw ConfigError(
            "run_pulse_experiments: sample period is not a whole number of bench steps");
    const int n_out = window_samples(duration_s, 1.0 / sample_period_s, "pulse record");
    // One leading equilibrium sample before the pulse keeps the bench
    // start condition; it is dropped from the returned records.
    const int n_bench = (n_out + 1) * stride + 1;
    const double dt = 1.0 / bench_rate_hz;

    std::pair<ibr::TimeSeries, ibr::TimeSeries> out;
    for (bool q_axis : {false, true}) {
        ibr::TimeSeries w;
        w.sample_period_s = dt;
        w.add_channel("v_d", n_bench);
        w.add_channel("v_q", n_bench);
        auto& vd = w.channel("v_d");
        auto& vq = w.channel("v_q");
        std::fill(vd.begin(), vd.end(), op.v_d);
        std::fill(vq.begin(), vq.end(), op.v_q);
        auto& active = q_axis ? vq : vd;
        for (int k = stride; k < 2 * stride; ++k) active[k] += pulse_height_pu;

        const auto resp = device.respond(w, ibr::InputHold::previous);
        ibr::TimeSeries rec;
        rec.sample_period_s = sample_period_s;
        rec.add_channel("i_d", n_out);
        rec.add_channel("i_q", n_out);
        const double scale = 1.0 / (pulse_height_pu * sample_period_s);
        const auto& rid = resp.channel("i_d");
        const auto& riq = resp.channel("i_q");
        for (int k = 0; k < n_out; ++k) {
            rec.channel("i_d")[k] = (rid[(k + 1) * stride] - (-op.i_d)) * scale;
            rec.channel("i_q")[k] = (riq[(k + 1) * stride] - (-op.i_q)) * scale;
        }
        (q_axis ? out.second : out.first) = std::move(rec);
    }
    return out;
}

lti::StateSpaceModel era_identify(
    const std::pair<ibr::TimeSeries, ibr::TimeSeries>& pulse_records, int model_order,
    double sample_period_s, EraInfo* info) {
    if (model_order < 1) throw ConfigError("era_identify: model_order must be >= 1");
    if (sample_period_s <= 0.0) throw ConfigError("era_identify: bad sample period");
    const auto& rec_d = pulse_records.first;
    const auto& rec_q = pulse_records.second;
    rec_d.validate();
    rec_q.validate();
    const int n = std::min(rec_d.length(), rec_q.length());
    if (n < 3) throw ConfigError("era_identify: records too short");
    const double ts = sample_period_s;

    // Markov parameters of the sampled system, columns = pulse axis.
    std::vector<Eigen::Matrix2d> markov(n);
    for (int k = 0; k < n; ++k) {
        markov[k](0, 0) = ts * rec_d.channel("i_d")[k];
        markov[k](1, 0) = ts * rec_d.channel("i_q")[k];
        markov[k](0, 1) = ts * rec_q.channel("i_d")[k];
        markov[k](1, 1) = ts * rec_q.channel("i_q")[k];
    }

    const int r = std::min((n - 1) / 2, 200);
    MatrixXd h0(2 * r, 2 * r), h1(2 * r, 2 * r);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
            h0.block<2, 2>(2 * i, 2 * j) = markov[1 + i + j];
            h1.block<2, 2>(2 * i, 2 * j) = markov[2 + i + j];
        }

    Eigen::BDCSVD<MatrixXd> svd(h0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd sv = svd.singularValues();
    int n_eff = 0;
    while (n_eff < sv.size() && n_eff < model_order && sv(n_eff) > 1e-8 * sv(0) &&
           sv(n_eff) > 0.0)
        ++n_eff;

    if (info) {
        info->effective_order = n_eff;
        info->rank_deficient = n_eff < model_order;
        info->singular_values.assign(sv.data(),
                                     sv.data() + std::min<int>(sv.size(), 2 * model_order + 4));
    }

    const std::vector<lti::PortLabel> ports{{"dut", lti::Axis::d}, {"dut", lti::Axis::q}};
    if (n_eff == 0)
        return lti::StateSpaceModel::static_gain(markov[0], ports, ports);

    const MatrixXd u = svd.matrixU().leftCols(n_eff);
    const MatrixXd v = svd.matrixV().leftCols(n_eff);
    const VectorXd s_half = sv.head(n_eff).cwiseSqrt();
    const MatrixXd ad = s_half.cwiseInverse().asDiagonal() * u.transpose() * h1 * v *
                        s_half.cwiseInverse().asDiagonal();
    const MatrixXd bd = (s_half.asDiagonal() * v.transpose()).leftCols(2);
    const MatrixXd cd = (u * s_half.asDiagonal()).topRows(2);

    // Continuous conversion through the eigenvalue logarithm.
    Eigen::EigenSolver<MatrixXd> eig(ad);
    if (eig.info() != Eigen::Success)
        throw NumericalError("era_identify: discrete eigenvalue solve failed");
    const Eigen::VectorXcd lam = eig.eigenvalues();
    for (int k = 0; k < lam.size(); ++k) {
        if (std::abs(lam(k).imag()) < 1e-12 * std::max(1.0, std::abs(lam(k))) &&
            lam(k).real() <= 0.0)
            throw NumericalError(
                "logarithm ambiguity: discrete eigenvalue on the negative real axis");
    }
    const MatrixXcd vmat = eig.eigenvectors();
    Eigen::PartialPivLU<MatrixXcd> vlu(vmat);
    Eigen::VectorXcd log_lam(lam.size()), phi_inv(lam.size());
    for (int k = 0; k < lam.size(); ++k) {
        log_lam(k) = std::log(lam(k));
        const std::complex<double> dl = lam(k) - 1.0;
        phi_inv(k) = std::abs(dl) < 1e-9 ? std::complex<double>(1.0, 0.0) : log_lam(k) / dl;
    }
    const MatrixXcd ac_c = vmat * log_lam.asDiagonal() * vlu.inverse() / ts;
    const MatrixXcd bc_c = vmat * phi_inv.asDiagonal() * vlu.inverse() * bd / ts;
    if (ac_c.imag().cwiseAbs().maxCoeff() > 1e-6 * (1.0 + ac_c.real().cwiseAbs().maxCoeff()))
        throw NumericalError("era_identify: continuous conversion lost realness");

    lti::StateSpaceModel m;
    m.A = ac_c.real();
    m.B = bc_c.real();
    m.C = cd;
    m.D = markov[0];
    m.state_tags.assign(n_eff, "dut");
    m.input_ports = ports;
    m.output_ports = ports;
    m.validate();
    return m;
}

void write_frequency_response_csv(const std::filesystem::path& path,
                                  const lti::FrequencyResponse& fr) {
    fr.validate();
    for (const auto& s : fr.samples)
        if (s.rows() != 2 || s.cols() != 2)
            throw ConfigError("frequency response CSV export needs 2x2 samples");
    const std::vector<std::string> header{"f_hz",  "re_dd", "im_dd", "re_dq", "im_dq",
                                          "re_qd", "im_qd", "re_qq", "im_qq"};
    std::vector<std::vector<double>> rows;
    rows.reserve(fr.size());
    for (int k = 0; k < fr.size(); ++k) {
        const auto& s = fr.samples[k];
        rows.push_back({fr.frequencies_hz[k], s(0, 0).real(), s(0, 0).imag(), s(0, 1).real(),
                        s(0, 1).imag(), s(1, 0).real(), s(1, 0).imag(), s(1, 1).real(),
                        s(1, 1).imag()});
    }
    util::write_csv(path, header, rows);
}

lti::FrequencyResponse read_frequency_response_csv(const std::filesystem::path& path) {
    const auto table = util::read_csv(path);
    const std::vector<std::string> expect{"f_hz",  "re_dd", "im_dd", "re_dq", "im_dq",
                                          "re_qd", "im_qd", "re_qq", "im_qq"};
    if (table.header != expect)
        throw ConfigError(path.string() + ": unexpected frequency-response header");
    lti::FrequencyResponse fr;
    for (const auto& row : table.rows) {
        fr.frequencies_hz.push_back(row[0]);
        Matrix2cd s;
        s(0, 0) = {row[1], row[2]};
        s(0, 1) = {row[3], row[4]};
        s(1, 0) = {row[5], row[6]};
        s(1, 1) = {row[7], row[8]};
        fr.samples.push_back(s);
    }
    fr.validate();
    return fr;
}

}  // namespace ssoscope::probe
