#include "ssoscope/lti.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "ssoscope/errors.hpp"

namespace ssoscope::lti {

std::string axis_name(Axis a) { return a == Axis::d ? "d" : "q"; }

Axis axis_from_name(const std::string& s) {
    if (s == "d") return Axis::d;
    if (s == "q") return Axis::q;
    throw ConfigError("axis must be 'd' or 'q', got '" + s + "'");
}

void StateSpaceModel::validate() const {
    const auto n = A.rows();
    if (A.cols() != n) throw ConfigError("A must be square");
    if (B.rows() != n) throw ConfigError("B row count must match state count");
    if (C.cols() != n) throw ConfigError("C column count must match state count");
    if (D.rows() != C.rows() || D.cols() != B.cols())
        throw ConfigError("D must be (outputs x inputs)");
    if (static_cast<Eigen::Index>(state_tags.size()) != n)
        throw ConfigError("state_tags length must equal state count");
    if (static_cast<Eigen::Index>(input_ports.size()) != B.cols())
        throw ConfigError("input_ports length must equal input count");
    if (static_cast<Eigen::Index>(output_ports.size()) != C.rows())
        throw ConfigError("output_ports length must equal output count");
}

StateSpaceModel StateSpaceModel::static_gain(const Eigen::MatrixXd& D,
                                             const std::vector<PortLabel>& inputs,
                                             const std::vector<PortLabel>& outputs) {
    StateSpaceModel m;
    m.A.resize(0, 0);
    m.B.resize(0, D.cols());
    m.C.resize(D.rows(), 0);
    m.D = D;
    m.input_ports = inputs;
    m.output_ports = outputs;
    m.validate();
    return m;
}

namespace {

constexpr double kConjTol = 1e-9;

bool is_conjugate(std::complex<double> a, std::complex<double> b, double scale) {
    return std::abs(a - std::conj(b)) <= kConjTol * std::max(1.0, scale);
}

}  // namespace

void PoleResidueModel::validate() const {
    if (residues.size() != poles.size())
        throw ConfigError("residue count must equal pole count");
    for (const auto& r : residues)
        if (r.rows() != direct.rows() || r.cols() != direct.cols())
            throw ConfigError("residue dimensions must match the direct term");
    if (proportional &&
        (proportional->rows() != direct.rows() || proportional->cols() != direct.cols()))
        throw ConfigError("proportional dimensions must match the direct term");

    // Conjugate closure: every complex pole pairs with its conjugate and the
    // paired residues are conjugates; real poles carry real residues.
    double scale = 1.0;
    for (auto p : poles) scale = std::max(scale, std::abs(p));
    std::vector<bool> used(poles.size(), false);
    for (size_t i = 0; i < poles.size(); ++i) {
        if (used[i]) continue;
        if (std::abs(poles[i].imag()) <= kConjTol * std::max(1.0, scale)) {
            if (residues[i].imag().cwiseAbs().maxCoeff() >
                kConjTol * std::max(1.0, residues[i].cwiseAbs().maxCoeff()))
                throw ConfigError("real pole carries a complex residue");
            used[i] = true;
            continue;
        }
        bool paired = false;
        for (size_t j = i + 1; j < poles.size(); ++j) {
            if (used[j] || !is_conjugate(poles[i], poles[j], scale)) continue;
            const double rscale =
                std::max(1.0, std::max(residues[i].cwiseAbs().maxCoeff(),
                                       residues[j].cwiseAbs().maxCoeff()));
            if ((residues[i] - residues[j].conjugate()).cwiseAbs().maxCoeff() >
                kConjTol * rscale)
                throw ConfigError("conjugate pole pair carries non-conjugate residues");
            used[i] = used[j] = true;
            paired = true;
            break;
        }
        if (!paired) throw ConfigError("pole set is not closed under conjugation");
    }
}

void FrequencyResponse::validate() const {
    if (samples.size() != frequencies_hz.size())
        throw ConfigError("sample count must equal frequency count");
    for (size_t i = 0; i < frequencies_hz.size(); ++i) {
        if (!(frequencies_hz[i] > 0)) throw ConfigError("frequencies must be positive");
        if (i && !(frequencies_hz[i] > frequencies_hz[i - 1]))
            throw ConfigError("frequencies must be strictly increasing");
    }
    for (const auto& s : samples)
        if (s.rows() != samples.front().rows() || s.cols() != samples.front().cols())
            throw ConfigError("all samples must share one matrix shape");
}

// --- evaluation ---------------------------------------------------------

Eigen::MatrixXcd evaluate_at_s(const StateSpaceModel& m, std::complex<double> s) {
    const auto n = m.A.rows();
    if (n == 0) return m.D.cast<std::complex<double>>();
    Eigen::MatrixXcd M = -m.A.cast<std::complex<double>>();
    M.diagonal().array() += s;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(M);
    // Pivot-ratio condition estimate; full pivoting makes it meaningful.
    const double pmax = lu.maxPivot();
    double pmin = pmax;
    for (Eigen::Index i = 0; i < n; ++i)
        pmin = std::min(pmin, std::abs(lu.matrixLU()(i, i)));
    if (!(pmin > pmax * 1e-13))
        throw NumericalError("evaluation at pole: s is an eigenvalue of A");
    return m.C.cast<std::complex<double>>() * lu.solve(m.B.cast<std::complex<double>>()) +
           m.D.cast<std::complex<double>>();
}

Eigen::MatrixXcd evaluate_at_s(const PoleResidueModel& m, std::complex<double> s) {
    Eigen::MatrixXcd out = m.direct.cast<std::complex<double>>();
    if (m.proportional) out += s * m.proportional->cast<std::complex<double>>();
    for (size_t k = 0; k < m.poles.size(); ++k) {
        const auto d = s - m.poles[k];
        if (std::abs(d) <= 1e-13 * std::max(1.0, std::abs(m.poles[k])))
            throw NumericalError("evaluation at pole: s coincides with a model pole");
        out += m.residues[k] / d;
    }
    return out;
}

Eigen::MatrixXcd evaluate(const StateSpaceModel& m, double f_hz) {
    return evaluate_at_s(m, {0.0, 2.0 * M_PI * f_hz});
}

Eigen::MatrixXcd evaluate(const PoleResidueModel& m, double f_hz) {
    return evaluate_at_s(m, {0.0, 2.0 * M_PI * f_hz});
}

std::vector<double> singular_values(const Eigen::MatrixXcd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    std::vector<double> out(svd.singularValues().data(),
                            svd.singularValues().data() + svd.singularValues().size());
    return out;
}

// --- realization --------------------------------------------------------

StateSpaceModel realize(const PoleResidueModel& m, const std::string& state_tag) {
    m.validate();
    if (m.proportional)
        throw ConfigError("realize requires the proportional term to be absent");

    // Group poles: real ones stand alone, complex ones as conjugate pairs
    // represented by the member with positive imaginary part.
    double scale = 1.0;
    for (auto p : m.poles) scale = std::max(scale, std::abs(p));
    const double tol = kConjTol * std::max(1.0, scale);

    struct Block {
        bool complex_pair;
        std::complex<double> pole;
        Eigen::MatrixXcd residue;
    };
    std::vector<Block> blocks;
    std::vector<bool> used(m.poles.size(), false);
    for (size_t i = 0; i < m.poles.size(); ++i) {
        if (used[i]) continue;
        if (std::abs(m.poles[i].imag()) <= tol) {
            blocks.push_back({false, {m.poles[i].real(), 0.0}, m.residues[i]});
            used[i] = true;
            continue;
        }
        for (size_t j = i + 1; j < m.poles.size(); ++j) {
            if (used[j] || !is_conjugate(m.poles[i], m.poles[j], scale)) continue;
            const bool i_pos = m.poles[i].imag() > 0;
            blocks.push_back({true, i_pos ? m.poles[i] : m.poles[j],
                              i_pos ? m.residues[i] : m.residues[j]});
            used[i] = used[j] = true;
            break;
        }
    }

    const int p = m.rows(), mc = m.cols();
    int states_per_col = 0;
    for (const auto& b : blocks) states_per_col += b.complex_pair ? 2 : 1;
    const int n = states_per_col * mc;

    StateSpaceModel ss;
    ss.A = Eigen::MatrixXd::Zero(n, n);
    ss.B = Eigen::MatrixXd::Zero(n, mc);
    ss.C = Eigen::MatrixXd::Zero(p, n);
    ss.D = m.direct;

    int row = 0;
    for (int col = 0; col < mc; ++col) {
        for (const auto& b : blocks) {
            if (!b.complex_pair) {
                ss.A(row, row) = b.pole.real();
                ss.B(row, col) = 1.0;
                for (int i = 0; i < p; ++i) ss.C(i, row) = b.residue(i, col).real();
                ++row;
            } else {
                const double a = b.pole.real(), w = b.pole.imag();
                ss.A(row, row) = a;
                ss.A(row, row + 1) = w;
                ss.A(row + 1, row) = -w;
                ss.A(row + 1, row + 1) = a;
                ss.B(row, col) = 2.0;
                for (int i = 0; i < p; ++i) {
                    ss.C(i, row) = b.residue(i, col).real();
                    ss.C(i, row + 1) = b.residue(i, col).imag();
                }
                row += 2;
            }
        }
    }

    // Per-block balancing with one scalar per block: A is invariant under
    // uniform scaling of a block's states, while B and C magnitudes stay
    // comparable for downstream eigenvector work.
    row = 0;
    for (int col = 0; col < mc; ++col) {
        for (const auto& b : blocks) {
            const int w = b.complex_pair ? 2 : 1;
            const double bn = ss.B.middleRows(row, w).norm();
            const double cn = ss.C.middleCols(row, w).norm();
            if (bn > 0 && cn > 0) {
                const double s = std::sqrt(cn / bn);
                ss.B.middleRows(row, w) *= s;
                ss.C.middleCols(row, w) /= s;
            }
            row += w;
        }
    }

    ss.state_tags.assign(n, state_tag);
    ss.input_ports.assign(mc, PortLabel{});
    ss.output_ports.assign(p, PortLabel{});
    for (int j = 0; j < mc; ++j) ss.input_ports[j].axis = (j % 2 == 0) ? Axis::d : Axis::q;
    for (int i = 0; i < p; ++i) ss.output_ports[i].axis = (i % 2 == 0) ? Axis::d : Axis::q;
    ss.validate();
    return ss;
}

StateSpaceModel block_diagonal(const std::vector<StateSpaceModel>& blocks) {
    int n = 0, mi = 0, po = 0;
    for (const auto& b : blocks) {
        b.validate();
        n += b.order();
        mi += b.num_inputs();
        po += b.num_outputs();
    }
    StateSpaceModel out;
    out.A = Eigen::MatrixXd::Zero(n, n);
    out.B = Eigen::MatrixXd::Zero(n, mi);
    out.C = Eigen::MatrixXd::Zero(po, n);
    out.D = Eigen::MatrixXd::Zero(po, mi);
    int rn = 0, rm = 0, rp = 0;
    for (const auto& b : blocks) {
        out.A.block(rn, rn, b.order(), b.order()) = b.A;
        out.B.block(rn, rm, b.order(), b.num_inputs()) = b.B;
        out.C.block(rp, rn, b.num_outputs(), b.order()) = b.C;
        out.D.block(rp, rm, b.num_outputs(), b.num_inputs()) = b.D;
        out.state_tags.insert(out.state_tags.end(), b.state_tags.begin(), b.state_tags.end());
        out.input_ports.insert(out.input_ports.end(), b.input_ports.begin(),
                               b.input_ports.end());
        out.output_ports.insert(out.output_ports.end(), b.output_ports.begin(),
                                b.output_ports.end());
        rn += b.order();
        rm += b.num_inputs();
        rp += b.num_outputs();
    }
    out.validate();
    return out;
}

StateSpaceModel feedback_closure(const StateSpaceModel& Z, const StateSpaceModel& Y) {
    Z.validate();
    Y.validate();
    const int nz = Z.order(), ny = Y.order();
    const int nv = Z.num_outputs();  // bus voltage channel count
    if (Z.num_inputs() != Y.num_outputs() || Y.num_inputs() != nv)
        throw ConfigError("feedback closure needs Z inputs = Y outputs and Y inputs = Z outputs");

    // Loop algebra with e = vr - v:
    //   v = Cz xz + Dz (Cy xy + Dy e)  and  e = vr - v
    // give (I + Dz Dy) e = vr - Cz xz - Dz Cy xy.
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(nv, nv) + Z.D * Y.D;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 0) || smax / smin > 1e12)
        throw NumericalError("ill-posed loop: I + Dz*Dy condition number exceeds 1e12");
    Eigen::PartialPivLU<Eigen::MatrixXd> Mlu(M);
    const Eigen::MatrixXd Minv = Mlu.inverse();

    // e = Minv (vr - Cz xz - Dz Cy xy); i = Cy xy + Dy e; v = vr - e.
    const Eigen::MatrixXd ECz = -Minv * Z.C;              // de/dxz
    const Eigen::MatrixXd ECy = -Minv * Z.D * Y.C;        // de/dxy
    const Eigen::MatrixXd Er = Minv;                      // de/dvr

    const int n = nz + ny;
    StateSpaceModel G;
    G.A = Eigen::MatrixXd::Zero(n, n);
    G.B = Eigen::MatrixXd::Zero(n, nv);
    G.C = Eigen::MatrixXd::Zero(nv, n);
    G.D = Eigen::MatrixXd::Zero(nv, nv);

    // xz' = Az xz + Bz i,  i = Cy xy + Dy e
    G.A.topLeftCorner(nz, nz) = Z.A + Z.B * Y.D * ECz;
    G.A.topRightCorner(nz, ny) = Z.B * (Y.C + Y.D * ECy);
    G.B.topRows(nz) = Z.B * Y.D * Er;
    // xy' = Ay xy + By e
    G.A.bottomLeftCorner(ny, nz) = Y.B * ECz;
    G.A.bottomRightCorner(ny, ny) = Y.A + Y.B * ECy;
    G.B.bottomRows(ny) = Y.B * Er;
    // v = vr - e
    G.C.leftCols(nz) = -ECz;
    G.C.rightCols(ny) = -ECy;
    G.D = Eigen::MatrixXd::Identity(nv, nv) - Er;

    G.state_tags = Z.state_tags;
    G.state_tags.insert(G.state_tags.end(), Y.state_tags.begin(), Y.state_tags.end());
    G.input_ports = Z.output_ports;  // vr aligns with the voltage channels
    G.output_ports = Z.output_ports;
    G.validate();
    return G;
}

Eigen::VectorXcd poles_of(const StateSpaceModel& m) {
    if (m.order() == 0) return Eigen::VectorXcd(0);
    Eigen::EigenSolver<Eigen::MatrixXd> es(m.A, false);
    return es.eigenvalues();
}

}  // namespace ssoscope::lti
