#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssoscope/modal.hpp"
#include "ssoscope/network.hpp"

namespace ssoscope::report {

// Marker role of a bus on the spatial map. A bus hosting an inverter whose
// normalized mode participation reaches 0.95 gets the arrow treatment on
// top of its square.
enum class BusRole { non_ibr, ibr, ibr_top };

std::string role_name(BusRole r);

// Amplitude ratio in decibels, floored at -300 dB so a zero never produces
// -inf in an artifact file.
double amplitude_db(double v);

struct HeatmapSpec {
    struct BusPoint {
        int bus_id = 0;
        double x = 0.0;
        double y = 0.0;
        std::string area_label;
    };

    std::string title;
    std::vector<BusPoint> buses;
    std::map<int, double> value_db;  // per-bus field samples, already in dB
    std::map<int, BusRole> role;
    // Gaussian kernel width in layout units; 0 picks 0.15 x the layout
    // bounding-box diagonal.
    double kernel_width = 0.0;
};

// Assembles a HeatmapSpec from a case layout and an analyzed mode: field
// values are the mode's per-bus voltage observability normalized to a 0 dB
// maximum, roles come from device kinds and normalized participation.
HeatmapSpec heatmap_spec(const network::NetworkCase& c, const modal::Mode& mode,
                         const std::string& title);

// One figure: an SVG document plus the matching CSV table.
struct Artifact {
    std::string svg;
    std::string csv;
};

void write_artifact(const Artifact& a, const std::filesystem::path& svg_path,
                    const std::filesystem::path& csv_path);

// Spatial map: a 200x200 Gaussian-interpolated field of the bus dB values
// over the layout bounding box, bus markers by role, per-area labels and a
// dB color scale. CSV columns: bus_id,x,y,obs_db,role.
Artifact render_heatmap(const HeatmapSpec& spec);

// Grouped bars comparing three per-bus series; each series is scaled to a
// maximum of 1 before plotting. CSV columns: bus,actual,estimated,severity.
Artifact render_bars(const std::vector<double>& obs_benchmark,
                     const std::vector<double>& obs_estimated,
                     const std::vector<double>& severity, const std::vector<int>& buses);

// Overlaid eigenvalue scatter (real part vs. frequency), one series per
// label, band modes highlighted. With exactly two series, band modes are
// paired by proximity and joined with displacement segments. CSV columns:
// series,re,im,freq_hz,damping,is_sso.
Artifact render_eigen_scatter(const std::vector<modal::ModalResult>& results,
                              const std::vector<std::string>& labels);

}  // namespace ssoscope::report
