#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace ssoscope::lti {

enum class Axis { d, q };

std::string axis_name(Axis a);
Axis axis_from_name(const std::string& s);

// Labels one scalar terminal quantity: which bus, and which dq axis.
struct PortLabel {
    std::string bus_id;
    Axis axis = Axis::d;

    bool operator==(const PortLabel&) const = default;
};

// Real state-space model x' = Ax + Bu, y = Cx + Du.
// state_tags[i] names the owner of state i (a device id or "network");
// ports label the input/output channels.
struct StateSpaceModel {
    Eigen::MatrixXd A, B, C, D;
    std::vector<std::string> state_tags;
    std::vector<PortLabel> input_ports;
    std::vector<PortLabel> output_ports;

    int order() const { return static_cast<int>(A.rows()); }
    int num_inputs() const { return static_cast<int>(B.cols()); }
    int num_outputs() const { return static_cast<int>(C.rows()); }

    // Dimension and label consistency; throws ConfigError on violation.
    void validate() const;

    // Memoryless y = Du block.
    static StateSpaceModel static_gain(const Eigen::MatrixXd& D,
                                       const std::vector<PortLabel>& inputs,
                                       const std::vector<PortLabel>& outputs);
};

// Rational matrix H(s) = sum_k R_k / (s - p_k) + D (+ sE). Complex poles
// carry both members of each conjugate pair explicitly.
struct PoleResidueModel {
    std::vector<std::complex<double>> poles;
    std::vector<Eigen::MatrixXcd> residues;  // one p x m matrix per pole
    Eigen::MatrixXd direct;
    std::optional<Eigen::MatrixXd> proportional;

    int rows() const { return static_cast<int>(direct.rows()); }
    int cols() const { return static_cast<int>(direct.cols()); }
    int order() const { return static_cast<int>(poles.size()); }

    // Checks conjugate closure of poles and residues and dimension
    // consistency; throws ConfigError on violation.
    void validate() const;
};

// Sampled frequency response: samples[k] is the complex matrix at
// frequencies_hz[k]. Frequencies are strictly increasing and positive.
struct FrequencyResponse {
    std::vector<double> frequencies_hz;
    std::vector<Eigen::MatrixXcd> samples;

    int size() const { return static_cast<int>(frequencies_hz.size()); }
    void validate() const;
};

// --- evaluation ---------------------------------------------------------

// H(s) at arbitrary complex s. Throws NumericalError("evaluation at pole")
// when s coincides with a system pole within machine tolerance.
Eigen::MatrixXcd evaluate_at_s(const StateSpaceModel& m, std::complex<double> s);
Eigen::MatrixXcd evaluate_at_s(const PoleResidueModel& m, std::complex<double> s);

// H(j*2*pi*f) for real frequency in Hz.
Eigen::MatrixXcd evaluate(const StateSpaceModel& m, double f_hz);
Eigen::MatrixXcd evaluate(const PoleResidueModel& m, double f_hz);

// Singular values in descending order.
std::vector<double> singular_values(const Eigen::MatrixXcd& m);

// --- construction -------------------------------------------------------

// Real minimal-block realization of a pole-residue model: one 1x1 block per
// real pole and one 2x2 block per conjugate pair, repeated per input
// column. Requires the proportional term to be absent. Eigenvalues of the
// result equal the pole set; the response matches the rational form.
StateSpaceModel realize(const PoleResidueModel& m, const std::string& state_tag = "");

// Direct sum: block-diagonal A/B/C/D, concatenated tags and ports.
StateSpaceModel block_diagonal(const std::vector<StateSpaceModel>& blocks);

// Closes the loop i = Y*(vr - v), v = Z*i around impedance Z and
// admittance Y. Input is the reference vr, output is the bus voltage v:
// the realization of (I + Z*Y)^-1 * Z*Y. States of Z precede states of Y.
// Throws NumericalError("ill-posed loop") when I + Dz*Dy is numerically
// singular (condition number above 1e12).
StateSpaceModel feedback_closure(const StateSpaceModel& Z, const StateSpaceModel& Y);

// Eigenvalues of the dynamics matrix.
Eigen::VectorXcd poles_of(const StateSpaceModel& m);

}  // namespace ssoscope::lti
