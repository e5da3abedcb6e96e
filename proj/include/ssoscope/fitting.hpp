#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "ssoscope/lti.hpp"

namespace ssoscope::fitting {

enum class Weighting { uniform, inverse_magnitude };

struct FitOptions {
    int max_iterations = 30;
    double pole_movement_tol = 1e-6;  // relative, convergence criterion
    Weighting weighting = Weighting::uniform;
    bool enforce_stability = true;
    // Relative log-spacing jitter on the starting poles; 0 keeps the
    // deterministic default. Seeded so runs reproduce exactly.
    double start_pole_jitter = 0.0;
    unsigned long long seed = 0;
};

struct FitReport {
    int model_order = 0;
    int iterations_used = 0;
    double rms_relative_error = 0.0;
    double worst_point_error = 0.0;
    double worst_point_frequency_hz = 0.0;
    int stability_flips = 0;
    bool met_threshold = true;
    // Sigma-plot data on the fit grid: per frequency, singular values of
    // the fitted model and of the measured samples.
    std::vector<double> frequencies_hz;
    std::vector<std::vector<double>> sigma_fit;
    std::vector<std::vector<double>> sigma_data;
};

// Common-pole rational fit of a sampled response. All matrix entries share
// one pole set; iterative pole relocation starts from log-spaced
// complex-conjugate pairs (real part = -imag/100) and runs until the pole
// set moves less than pole_movement_tol between iterations. Unstable poles
// are reflected into the left half plane when enforce_stability is set.
std::pair<lti::PoleResidueModel, FitReport> vector_fit(const lti::FrequencyResponse& data,
                                                       int order,
                                                       const FitOptions& options = {});

// Ascending order scan: returns the first fit whose relative rms error
// meets the threshold, otherwise the best one seen with met_threshold
// false.
std::pair<lti::PoleResidueModel, FitReport> select_order(const lti::FrequencyResponse& data,
                                                         int order_min, int order_max,
                                                         double rms_threshold,
                                                         const FitOptions& options = {});

struct SigmaComparison {
    std::vector<double> frequencies_hz;
    std::vector<std::vector<double>> sigma_fit;
    std::vector<std::vector<double>> sigma_ref;
    double max_relative_deviation = 0.0;
    double at_frequency_hz = 0.0;
};

SigmaComparison compare_sigma(const lti::PoleResidueModel& fitted,
                              const lti::FrequencyResponse& reference);
SigmaComparison compare_sigma(const lti::PoleResidueModel& fitted,
                              const lti::StateSpaceModel& reference,
                              const std::vector<double>& grid_hz);

// Writes f_hz,sigma1_fit,sigma2_fit,sigma1_ref,sigma2_ref rows.
void write_sigma_csv(const std::filesystem::path& path, const SigmaComparison& cmp);

}  // namespace ssoscope::fitting
