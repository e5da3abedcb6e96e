#pragma once

#include <complex>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ssoscope::util {

// Shortest-round-trip style formatting with a fixed upper bound on digits.
// Identical doubles format to identical bytes, which the artifact writers
// rely on for reproducible outputs.
std::string fmt_double(double x);

// Fixed-precision variant for plot coordinates and colors.
std::string fmt_fixed(double x, int digits);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

// Minimal CSV support: numeric tables with a single header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& p);
void write_csv(const std::filesystem::path& p, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Spearman rank correlation. Ties receive average ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Minimum-cost assignment (Hungarian algorithm) on a rectangular cost
// matrix. Returns, for each row, the assigned column or -1.
std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost);

// Single-bin discrete Fourier line: sum x[n] * exp(-j*2*pi*f*n*dt).
// Exact for frequencies that fit an integer number of periods in the window.
std::complex<double> dft_line(const std::vector<double>& x, double dt, double f_hz);

// Zero-phase band-pass: a second-order Butterworth band-pass run forward and
// backward (fourth-order magnitude response, no phase distortion).
std::vector<double> bandpass_zero_phase(const std::vector<double>& x, double sample_rate_hz,
                                        double f_lo_hz, double f_hi_hz);

// Deterministic xorshift-based generator for seeded choices; avoids
// depending on library-specific std::random distributions.
class Rng {
  public:
    explicit Rng(unsigned long long seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    unsigned long long next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)

  private:
    unsigned long long state_;
};

}  // namespace ssoscope::util
