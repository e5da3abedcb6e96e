#include "ssoscope/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "ssoscope/errors.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::fitting {
namespace {

using lti::FrequencyResponse;
using lti::PoleResidueModel;
using std::complex;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

// One shared pole, or one conjugate pair stored as (re, im>0).
struct PoleGroup {
    bool is_pair = false;
    double re = 0.0;
    double im = 0.0;

    int width() const { return is_pair ? 2 : 1; }
};

int total_width(const std::vector<PoleGroup>& groups) {
    int n = 0;
    for (const auto& g : groups) n += g.width();
    return n;
}

// Real partial-fraction basis evaluated at s. Real pole: 1/(s-a).
// Pair: [1/(s-p) + 1/(s-pbar), j/(s-p) - j/(s-pbar)].
void basis_row(const std::vector<PoleGroup>& groups, complex<double> s, VectorXcd& row) {
    int col = 0;
    for (const auto& g : groups) {
        if (g.is_pair) {
            const complex<double> p(g.re, g.im);
            const complex<double> f1 = 1.0 / (s - p);
            const complex<double> f2 = 1.0 / (s - std::conj(p));
            row(col) = f1 + f2;
            row(col + 1) = complex<double>(0.0, 1.0) * (f1 - f2);
            col += 2;
        } else {
            row(col) = 1.0 / (s - complex<double>(g.re, 0.0));
            col += 1;
        }
    }
}

std::vector<complex<double>> flatten(const std::vector<PoleGroup>& groups) {
    std::vector<complex<double>> out;
    for (const auto& g : groups) {
        if (g.is_pair) {
            out.emplace_back(g.re, g.im);
            out.emplace_back(g.re, -g.im);
        } else {
            out.emplace_back(g.re, 0.0);
        }
    }
    return out;
}

void sort_groups(std::vector<PoleGroup>& groups) {
    std::sort(groups.begin(), groups.end(), [](const PoleGroup& a, const PoleGroup& b) {
        if (a.im != b.im) return a.im < b.im;
        return a.re < b.re;
    });
}

std::vector<PoleGroup> initial_poles(double w_lo, double w_hi, int order,
                                     const FitOptions& options) {
    std::vector<PoleGroup> groups;
    const int npairs = order / 2;
    util::Rng rng(options.seed);
    for (int k = 0; k < npairs; ++k) {
        double beta;
        if (npairs == 1) {
            beta = std::sqrt(w_lo * w_hi);
        } else {
            const double t = static_cast<double>(k) / (npairs - 1);
            beta = w_lo * std::pow(w_hi / w_lo, t);
        }
        if (options.start_pole_jitter > 0.0)
            beta *= std::exp(options.start_pole_jitter * (2.0 * rng.uniform() - 1.0));
        groups.push_back({true, -beta / 100.0, beta});
    }
    if (order % 2 == 1) groups.push_back({false, -std::sqrt(w_lo * w_hi), 0.0});
    sort_groups(groups);
    return groups;
}

// Weighted linear LS for the pole-relocation step. Entry residues and a
// per-entry constant ride along with the shared sigma coefficients; the
// relaxation row keeps sigma away from zero without pinning its high
// frequency value. Returns sigma coefficients (size n) and the sigma
// constant d~.
struct SigmaSolution {
    VectorXd coeffs;
    double d_tilde = 1.0;
};

SigmaSolution solve_relocation_system(const std::vector<PoleGroup>& groups,
                                      const std::vector<complex<double>>& s,
                                      const std::vector<MatrixXcd>& samples,
                                      const MatrixXd& weights, bool relaxed) {
    const int n = total_width(groups);
    const int ns = static_cast<int>(s.size());
    const int rows_mat = static_cast<int>(samples.front().rows());
    const int cols_mat = static_cast<int>(samples.front().cols());
    const int entries = rows_mat * cols_mat;

    const int per_entry = n + 1;
    const int sigma_cols = relaxed ? n + 1 : n;
    const int unknowns = entries * per_entry + sigma_cols;
    const int rows = 2 * ns * entries + (relaxed ? 1 : 0);

    MatrixXd A = MatrixXd::Zero(rows, unknowns);
    VectorXd rhs = VectorXd::Zero(rows);

    VectorXcd phi(n);
    double sigma_row_scale = 0.0;
    for (int i = 0; i < ns; ++i) {
        basis_row(groups, s[i], phi);
        for (int e = 0; e < entries; ++e) {
            const double w = weights(i, e);
            const complex<double> h = samples[i](e / cols_mat, e % cols_mat);
            const int r_re = 2 * (i * entries + e);
            const int r_im = r_re + 1;
            const int c0 = e * per_entry;
            for (int k = 0; k < n; ++k) {
                A(r_re, c0 + k) = w * phi(k).real();
                A(r_im, c0 + k) = w * phi(k).imag();
            }
            A(r_re, c0 + n) = w;
            const int sc = entries * per_entry;
            for (int k = 0; k < n; ++k) {
                const complex<double> v = -h * phi(k);
                A(r_re, sc + k) = w * v.real();
                A(r_im, sc + k) = w * v.imag();
            }
            if (relaxed) {
                A(r_re, sc + n) = w * (-h).real();
                A(r_im, sc + n) = w * (-h).imag();
            } else {
                rhs(r_re) = w * h.real();
                rhs(r_im) = w * h.imag();
            }
            sigma_row_scale += w * w * std::norm(h);
        }
    }

    if (relaxed) {
        // sum_i Re{sigma(s_i)} = ns, scaled to the data magnitude.
        const double scale = std::sqrt(sigma_row_scale) / ns;
        const int r = rows - 1;
        const int sc = entries * per_entry;
        VectorXcd phi_sum = VectorXcd::Zero(n);
        for (int i = 0; i < ns; ++i) {
            basis_row(groups, s[i], phi);
            phi_sum += phi;
        }
        for (int k = 0; k < n; ++k) A(r, sc + k) = scale * phi_sum(k).real();
        A(r, sc + n) = scale * ns;
        rhs(r) = scale * ns;
    }

    const VectorXd x = A.colPivHouseholderQr().solve(rhs);
    SigmaSolution sol;
    const int sc = entries * per_entry;
    sol.coeffs = x.segment(sc, n);
    sol.d_tilde = relaxed ? x(sc + n) : 1.0;
    return sol;
}

// New pole set = zeros of sigma = eig(L - b * c~^T / d~) in the real block
// realization of the basis.
std::vector<PoleGroup> relocate_poles(const std::vector<PoleGroup>& groups,
                                      const SigmaSolution& sigma, bool enforce_stability,
                                      int& flips) {
    const int n = total_width(groups);
    MatrixXd L = MatrixXd::Zero(n, n);
    VectorXd b = VectorXd::Zero(n);
    int col = 0;
    for (const auto& g : groups) {
        if (g.is_pair) {
            L(col, col) = g.re;
            L(col, col + 1) = g.im;
            L(col + 1, col) = -g.im;
            L(col + 1, col + 1) = g.re;
            b(col) = 2.0;
            col += 2;
        } else {
            L(col, col) = g.re;
            b(col) = 1.0;
            col += 1;
        }
    }
    const MatrixXd H = L - b * (sigma.coeffs.transpose() / sigma.d_tilde);
    Eigen::EigenSolver<MatrixXd> es(H);
    if (es.info() != Eigen::Success)
        throw NumericalError("pole relocation: eigenvalue iteration failed");

    std::vector<PoleGroup> next;
    for (int i = 0; i < n; ++i) {
        const complex<double> lam = es.eigenvalues()(i);
        const double im_tol = 1e-12 * std::max(1.0, std::abs(lam));
        if (lam.imag() > im_tol)
            next.push_back({true, lam.real(), lam.imag()});
        else if (std::abs(lam.imag()) <= im_tol)
            next.push_back({false, lam.real(), 0.0});
    }
    if (total_width(next) != n)
        throw NumericalError("pole relocation: conjugate pairing lost");

    for (auto& g : next) {
        if (enforce_stability && g.re > 0.0) {
            g.re = -g.re;
            flips += g.width();
        }
        if (g.re == 0.0) g.re = -1e-9 * std::max(1.0, g.im);
    }
    sort_groups(next);
    return next;
}

double pole_movement(const std::vector<PoleGroup>& before, const std::vector<PoleGroup>& after) {
    const auto a = flatten(before);
    const auto b = flatten(after);
    double worst = 0.0;
    for (const auto& pb : b) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pa : a) best = std::min(best, std::abs(pb - pa));
        worst = std::max(worst, best / std::max(1.0, std::abs(pb)));
    }
    return worst;
}

MatrixXd make_weights(const std::vector<MatrixXcd>& samples, int entries, Weighting mode) {
    const int ns = static_cast<int>(samples.size());
    const int cols_mat = static_cast<int>(samples.front().cols());
    MatrixXd w = MatrixXd::Ones(ns, entries);
    if (mode == Weighting::uniform) return w;
    double gmax = 0.0;
    for (const auto& m : samples) gmax = std::max(gmax, m.cwiseAbs().maxCoeff());
    if (gmax == 0.0) return w;
    const double floor = 1e-8 * gmax;
    for (int i = 0; i < ns; ++i)
        for (int e = 0; e < entries; ++e) {
            const double mag = std::abs(samples[i](e / cols_mat, e % cols_mat));
            w(i, e) = 1.0 / std::max(mag, floor);
        }
    return w;
}

}  // namespace

std::pair<PoleResidueModel, FitReport> vector_fit(const FrequencyResponse& data, int order,
                                                  const FitOptions& options) {
    data.validate();
    if (order < 1) throw ConfigError("vector_fit: order must be at least 1");
    const int ns = static_cast<int>(data.frequencies_hz.size());
    if (ns < 2 * order + 2)
        throw ConfigError("vector_fit: need at least 2*order+2 frequency samples, have " +
                          std::to_string(ns) + " for order " + std::to_string(order));

    const int rows_mat = static_cast<int>(data.samples.front().rows());
    const int cols_mat = static_cast<int>(data.samples.front().cols());
    const int entries = rows_mat * cols_mat;

    const double w_lo = 2.0 * std::numbers::pi * data.frequencies_hz.front();
    const double w_hi = 2.0 * std::numbers::pi * data.frequencies_hz.back();
    const double w_scale = std::sqrt(w_lo * w_hi);

    std::vector<complex<double>> s(ns);
    for (int i = 0; i < ns; ++i)
        s[i] = complex<double>(0.0, 2.0 * std::numbers::pi * data.frequencies_hz[i] / w_scale);

    auto groups = initial_poles(w_lo / w_scale, w_hi / w_scale, order, options);
    const MatrixXd weights = make_weights(data.samples, entries, options.weighting);

    FitReport report;
    report.model_order = order;

    for (int it = 0; it < options.max_iterations; ++it) {
        SigmaSolution sigma =
            solve_relocation_system(groups, s, data.samples, weights, /*relaxed=*/true);
        if (std::abs(sigma.d_tilde) < 1e-12 * (1.0 + sigma.coeffs.norm()))
            sigma = solve_relocation_system(groups, s, data.samples, weights, /*relaxed=*/false);
        auto next = relocate_poles(groups, sigma, options.enforce_stability,
                                   report.stability_flips);
        const double movement = pole_movement(groups, next);
        groups = std::move(next);
        report.iterations_used = it + 1;
        if (movement < options.pole_movement_tol) break;
    }

    // Residue pass with sigma fixed to one.
    const int n = total_width(groups);
    MatrixXd A(2 * ns, n + 1);
    VectorXcd phi(n);
    std::vector<MatrixXcd> phis(ns, MatrixXcd(1, n));
    for (int i = 0; i < ns; ++i) {
        basis_row(groups, s[i], phi);
        phis[i] = phi.transpose();
    }

    PoleResidueModel model;
    model.direct = MatrixXd::Zero(rows_mat, cols_mat);
    const auto scaled_poles = flatten(groups);
    model.poles.reserve(scaled_poles.size());
    for (const auto& p : scaled_poles) model.poles.push_back(p * w_scale);
    model.residues.assign(model.poles.size(), MatrixXcd::Zero(rows_mat, cols_mat));

    for (int e = 0; e < entries; ++e) {
        VectorXd rhs(2 * ns);
        for (int i = 0; i < ns; ++i) {
            const double w = weights(i, e);
            for (int k = 0; k < n; ++k) {
                A(2 * i, k) = w * phis[i](0, k).real();
                A(2 * i + 1, k) = w * phis[i](0, k).imag();
            }
            A(2 * i, n) = w;
            A(2 * i + 1, n) = 0.0;
            const complex<double> h = data.samples[i](e / cols_mat, e % cols_mat);
            rhs(2 * i) = w * h.real();
            rhs(2 * i + 1) = w * h.imag();
        }
        const VectorXd x = A.colPivHouseholderQr().solve(rhs);
        const int r = e / cols_mat, c = e % cols_mat;
        int col = 0, pole_idx = 0;
        for (const auto& g : groups) {
            if (g.is_pair) {
                const complex<double> res(x(col), x(col + 1));
                model.residues[pole_idx](r, c) = res * w_scale;
                model.residues[pole_idx + 1](r, c) = std::conj(res) * w_scale;
                col += 2;
                pole_idx += 2;
            } else {
                model.residues[pole_idx](r, c) = complex<double>(x(col), 0.0) * w_scale;
                col += 1;
                pole_idx += 1;
            }
        }
        model.direct(r, c) = x(n);
    }
    model.validate();

    // Error accounting against the fit data.
    double num = 0.0, den = 0.0, gmax = 0.0;
    std::vector<double> point_norm(ns);
    for (int i = 0; i < ns; ++i) {
        point_norm[i] = data.samples[i].norm();
        gmax = std::max(gmax, point_norm[i]);
    }
    report.frequencies_hz = data.frequencies_hz;
    report.sigma_fit.resize(ns);
    report.sigma_data.resize(ns);
    for (int i = 0; i < ns; ++i) {
        const MatrixXcd fit = lti::evaluate(model, data.frequencies_hz[i]);
        const double err = (fit - data.samples[i]).norm();
        num += err * err;
        den += point_norm[i] * point_norm[i];
        const double rel = err / std::max(point_norm[i], 1e-12 * std::max(gmax, 1.0));
        if (rel >= report.worst_point_error) {
            report.worst_point_error = rel;
            report.worst_point_frequency_hz = data.frequencies_hz[i];
        }
        report.sigma_fit[i] = lti::singular_values(fit);
        report.sigma_data[i] = lti::singular_values(data.samples[i]);
    }
    report.rms_relative_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num / ns);
    return {std::move(model), std::move(report)};
}

std::pair<PoleResidueModel, FitReport> select_order(const FrequencyResponse& data, int order_min,
                                                    int order_max, double rms_threshold,
                                                    const FitOptions& options) {
    if (order_min < 1 || order_max < order_min)
        throw ConfigError("select_order: invalid order range");
    data.validate();
    const int ns = static_cast<int>(data.frequencies_hz.size());

    std::pair<PoleResidueModel, FitReport> best;
    bool have_best = false;
    for (int order = order_min; order <= order_max; ++order) {
        if (ns < 2 * order + 2) break;
        auto attempt = vector_fit(data, order, options);
        if (attempt.second.rms_relative_error <= rms_threshold) {
            attempt.second.met_threshold = true;
            return attempt;
        }
        if (!have_best ||
            attempt.second.rms_relative_error < best.second.rms_relative_error) {
            best = std::move(attempt);
            have_best = true;
        }
    }
    if (!have_best)
        throw ConfigError("select_order: no feasible order for " + std::to_string(ns) +
                          " samples");
    best.second.met_threshold = false;
    return best;
}

namespace {

SigmaComparison compare_on_grid(const lti::PoleResidueModel& fitted,
                                const std::vector<double>& grid_hz,
                                const std::vector<MatrixXcd>& reference) {
    SigmaComparison cmp;
    cmp.frequencies_hz = grid_hz;
    const int ns = static_cast<int>(grid_hz.size());
    cmp.sigma_fit.resize(ns);
    cmp.sigma_ref.resize(ns);
    for (int i = 0; i < ns; ++i) {
        cmp.sigma_fit[i] = lti::singular_values(lti::evaluate(fitted, grid_hz[i]));
        cmp.sigma_ref[i] = lti::singular_values(reference[i]);
        for (std::size_t k = 0; k < cmp.sigma_ref[i].size(); ++k) {
            const double rel = std::abs(cmp.sigma_fit[i][k] - cmp.sigma_ref[i][k]) /
                               std::max(cmp.sigma_ref[i][k], std::numeric_limits<double>::min());
            if (rel > cmp.max_relative_deviation) {
                cmp.max_relative_deviation = rel;
                cmp.at_frequency_hz = grid_hz[i];
            }
        }
    }
    return cmp;
}

}  // namespace

SigmaComparison compare_sigma(const lti::PoleResidueModel& fitted,
                              const FrequencyResponse& reference) {
    reference.validate();
    return compare_on_grid(fitted, reference.frequencies_hz, reference.samples);
}

SigmaComparison compare_sigma(const lti::PoleResidueModel& fitted,
                              const lti::StateSpaceModel& reference,
                              const std::vector<double>& grid_hz) {
    std::vector<MatrixXcd> ref(grid_hz.size());
    for (std::size_t i = 0; i < grid_hz.size(); ++i)
        ref[i] = lti::evaluate(reference, grid_hz[i]);
    return compare_on_grid(fitted, grid_hz, ref);
}

void write_sigma_csv(const std::filesystem::path& path, const SigmaComparison& cmp) {
    std::vector<std::string> header{"f_hz"};
    const std::size_t nsig = cmp.sigma_fit.empty() ? 0 : cmp.sigma_fit.front().size();
    for (std::size_t k = 0; k < nsig; ++k)
        header.push_back("sigma" + std::to_string(k + 1) + "_fit");
    for (std::size_t k = 0; k < nsig; ++k)
        header.push_back("sigma" + std::to_string(k + 1) + "_ref");
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < cmp.frequencies_hz.size(); ++i) {
        std::vector<double> row;
        row.push_back(cmp.frequencies_hz[i]);
        row.insert(row.end(), cmp.sigma_fit[i].begin(), cmp.sigma_fit[i].end());
        row.insert(row.end(), cmp.sigma_ref[i].begin(), cmp.sigma_ref[i].end());
        rows.push_back(std::move(row));
    }
    util::write_csv(path, header, rows);
}

}  // namespace ssoscope::fitting
