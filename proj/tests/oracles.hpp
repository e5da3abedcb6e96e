#pragma once

// Reference computations the test suite trusts. Each one evaluates the
// quantity under test through a different formula or representation than
// the library code path, so agreement is evidence rather than tautology.

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "ssoscope/lti.hpp"
#include "ssoscope/network.hpp"
#include "ssoscope/util.hpp"

namespace oracles {

using Cplx = std::complex<double>;
using ssoscope::lti::PoleResidueModel;
using ssoscope::lti::StateSpaceModel;

// Rational sum evaluated directly from pole-residue data.
inline Eigen::MatrixXcd rational_sum(const PoleResidueModel& m, Cplx s) {
    Eigen::MatrixXcd out = m.direct.cast<Cplx>();
    for (size_t k = 0; k < m.poles.size(); ++k) out += m.residues[k] / (s - m.poles[k]);
    return out;
}

// Closed-loop response (I + Z(s)Y(s))^-1 Z(s) Y(s) assembled pointwise from
// the operand responses, never from an interconnected realization.
inline Eigen::MatrixXcd closure_pointwise(const Eigen::MatrixXcd& Z,
                                          const Eigen::MatrixXcd& Y) {
    const Eigen::MatrixXcd ZY = Z * Y;
    const Eigen::MatrixXcd M =
        Eigen::MatrixXcd::Identity(ZY.rows(), ZY.cols()) + ZY;
    return M.partialPivLu().solve(ZY);
}

// Random stable pole-residue model with conjugate-closed poles inside the
// decade band [w_lo, w_hi] rad/s. Deterministic for a given rng state.
PoleResidueModel random_stable_model(ssoscope::util::Rng& rng, int order, int rows, int cols,
                                     double w_lo, double w_hi);

// Random stable state-space model with eigenvalues in a moderate band.
StateSpaceModel random_stable_state_space(ssoscope::util::Rng& rng, int order, int inputs,
                                          int outputs);

// Locates a simple pole of s -> u^T G(s) v near the probe point from three
// pointwise samples, assuming locally G ~ R/(s-p) + const. Returns the
// estimated pole location and the estimated residue magnitude.
struct PoleProbe {
    Cplx location;
    double residue_magnitude;
};
PoleProbe probe_pole(const std::function<Eigen::MatrixXcd(Cplx)>& G, Cplx near,
                     const Eigen::VectorXcd& u, const Eigen::VectorXcd& v, double eps);

// Stationary-frame nodal impedance of the case's RLC network at complex
// frequency s, over all buses in file order. Stamps branches and shunts
// directly from the case fields and inverts the nodal matrix, so it shares
// no assembly code with the state-space construction.
Eigen::MatrixXcd nodal_impedance(const ssoscope::network::NetworkCase& c, Cplx s);

// dq-frame response at rotation w0 and frequency w (rad/s) of a
// stationary-frame transfer h: one 2x2 block per scalar entry built from
// the two shifted evaluations h(j(w +/- w0)).
Eigen::MatrixXcd dq_shifted(const std::function<Eigen::MatrixXcd(Cplx)>& h, double w,
                            double w0);

}  // namespace oracles
