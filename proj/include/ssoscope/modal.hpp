#pragma once

#include <complex>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssoscope/lti.hpp"
#include "ssoscope/network.hpp"
#include "ssoscope/synthesis.hpp"

namespace ssoscope::modal {

// One eigenmode of the closed-loop grid model. Complex pairs are reduced to
// the representative with Im >= 0. Eigenvector-derived fields hold for the
// retained representative; observability fields stay empty until
// observability() runs (they need the extended bus readout).
struct Mode {
    std::complex<double> eigenvalue;
    double frequency_hz = 0.0;
    double damping_ratio = 0.0;
    Eigen::VectorXcd right_vector;  // psi, unit norm
    Eigen::VectorXcd left_vector;   // phi, matching row of the inverse basis
    Eigen::VectorXcd obs_per_output;
    std::map<int, double> obs_vmag_per_bus;
    std::map<std::string, double> participation_per_device;
    std::map<std::string, double> participation_normalized;
};

struct ModalResult {
    std::vector<Mode> modes;           // Im >= 0 representatives
    Eigen::VectorXcd eigenvalues_all;  // full spectrum, conjugates included
    std::vector<int> sso_indices;      // into modes, ascending damping ratio
    int least_damped_sso = -1;         // index into modes, -1 when none
    std::pair<double, double> band_hz{1.0, 45.0};
    double damping_max = 0.1;
    double residual = 0.0;       // ||A Psi - Psi Lambda|| / ||A||
    double psi_condition = 0.0;  // condition number of the eigenbasis
};

// Full eigendecomposition with left vectors taken from the inverse of the
// right basis, so biorthonormality is exact. Participation is filled per
// mode; the SSO screening uses the given band and damping threshold.
// Throws NumericalError("near-defective spectrum ...") when the eigenbasis
// condition exceeds 1e10.
ModalResult eigen_analysis(const synthesis::SystemModel& sys,
                           std::pair<double, double> band_hz = {1.0, 45.0},
                           double damping_max = 0.1);

// Modes with frequency inside the band and damping ratio below the
// threshold, ascending by damping ratio. An empty list is valid.
std::vector<Mode> screen_sso(const ModalResult& result,
                             std::pair<double, double> band_hz = {1.0, 45.0},
                             double damping_max = 0.1);

// Per-bus voltage-magnitude observability of a mode through the extended
// bus readout (rows = every bus x {d,q} over the network states). Fills
// mode.obs_per_output and mode.obs_vmag_per_bus, returns the per-bus map.
std::map<int, double> observability(Mode& mode, const synthesis::SystemModel& sys,
                                    const Eigen::MatrixXd& extended_output,
                                    const std::vector<lti::PortLabel>& extended_ports);

struct Participation {
    std::map<std::string, double> raw;
    std::map<std::string, double> normalized;  // max over devices = 1
};

// |phi_k . psi_k| summed over each device's states. Invariant under
// psi -> a psi, phi -> phi / a.
Participation ibr_participation(const Mode& mode, const synthesis::SystemModel& sys);

struct StepSpec {
    std::string device_id;
    double magnitude_fraction = 0.05;
};

struct SeverityResult {
    std::map<int, double> severity;  // bus -> normalized band-passed peak-to-peak
    double horizon_used_s = 0.0;
    std::vector<std::string> warnings;
};

// Linear closed-loop response to a reference step on one device, scaled so
// the DC power change approximates magnitude_fraction of the device's
// dispatch. Per bus: peak-to-peak of the band-passed linearized voltage
// magnitude, normalized to the worst bus. An unstable system truncates the
// horizon to 10 / max Re(lambda) and records an "unbounded response"
// warning.
SeverityResult step_severity(const synthesis::SystemModel& sys,
                             const lti::StateSpaceModel& y_m,
                             const network::OperatingPoint& op,
                             const Eigen::MatrixXd& extended_output,
                             const std::vector<lti::PortLabel>& extended_ports,
                             const StepSpec& step, double horizon_s = 10.0,
                             std::pair<double, double> band_hz = {1.0, 45.0});

// Lean serialization: eigenvalues, screening metadata, participation and
// observability maps. Eigenvectors are not serialized.
nlohmann::json to_json(const ModalResult& r);
ModalResult modal_from_json(const nlohmann::json& j);

// One row per retained mode: re,im,freq_hz,damping,is_sso.
void write_eigen_scatter_csv(const std::filesystem::path& path, const ModalResult& r);

}  // namespace ssoscope::modal
