#include "ssoscope/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ssoscope/errors.hpp"
#include "ssoscope/util.hpp"

namespace ssoscope::report {

namespace {

constexpr int kGrid = 200;  // field resolution per axis
constexpr int kCell = 2;    // pixels per field cell

struct Ramp {
    double t;
    int r, g, b;
};

// Five-stop approximation of a perceptually ordered dark-to-bright ramp.
constexpr Ramp kRamp[] = {
    {0.00, 68, 1, 84},   {0.25, 59, 82, 139}, {0.50, 33, 145, 140},
    {0.75, 94, 201, 98}, {1.00, 253, 231, 37},
};

std::string ramp_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    int lo = 0;
    while (lo + 2 < static_cast<int>(std::size(kRamp)) && kRamp[lo + 1].t <= t) ++lo;
    const Ramp& a = kRamp[lo];
    const Ramp& b = kRamp[lo + 1];
    const double u = (t - a.t) / (b.t - a.t);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround(a.r + u * (b.r - a.r))),
                  static_cast<int>(std::lround(a.g + u * (b.g - a.g))),
                  static_cast<int>(std::lround(a.b + u * (b.b - a.b))));
    return buf;
}

std::string px(double v) { return util::fmt_fixed(v, 2); }

void svg_open(std::ostringstream& s, int w, int h) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\">\n";
    s << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n";
}

void svg_text(std::ostringstream& s, double x, double y, int size, const std::string& anchor,
              const std::string& fill, const std::string& text) {
    s << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" font-size=\"" << size << "\"";
    if (!anchor.empty()) s << " text-anchor=\"" << anchor << "\"";
    s << " fill=\"" << fill << "\">" << text << "</text>\n";
}

const char* kSeriesColors[] = {"#4878d0", "#ee854a", "#6acc64",
                               "#d65f5f", "#956cb4", "#8c613c"};

}  // namespace

std::string role_name(BusRole r) {
    switch (r) {
        case BusRole::non_ibr: return "non_ibr";
        case BusRole::ibr: return "ibr";
        case BusRole::ibr_top: return "ibr_top";
    }
    throw ConfigError("unknown bus role");
}

double amplitude_db(double v) {
    if (!(v > 1e-15)) return -300.0;
    return 20.0 * std::log10(v);
}

HeatmapSpec heatmap_spec(const network::NetworkCase& c, const modal::Mode& mode,
                         const std::string& title) {
    if (mode.obs_vmag_per_bus.empty())
        throw ConfigError("mode carries no per-bus observability values");
    HeatmapSpec spec;
    spec.title = title;
    double vmax = 0.0;
    for (const auto& [bus, v] : mode.obs_vmag_per_bus) vmax = std::max(vmax, v);
    for (const auto& b : c.buses) {
        spec.buses.push_back({b.id, b.x_coord, b.y_coord, b.area_label});
        auto it = mode.obs_vmag_per_bus.find(b.id);
        if (it == mode.obs_vmag_per_bus.end())
            throw ConfigError("no observability value for bus " + std::to_string(b.id));
        spec.value_db[b.id] = amplitude_db(vmax > 0.0 ? it->second / vmax : it->second);
        spec.role[b.id] = BusRole::non_ibr;
    }
    for (const auto& d : c.devices) {
        if (d.kind != network::DeviceKind::ibr) continue;
        BusRole r = BusRole::ibr;
        auto it = mode.participation_normalized.find(d.device_id);
        if (it != mode.participation_normalized.end() && it->second >= 0.95) r = BusRole::ibr_top;
        BusRole& slot = spec.role.at(d.bus_id);
        if (r > slot) slot = r;
    }
    return spec;
}

void write_artifact(const Artifact& a, const std::filesystem::path& svg_path,
                    const std::filesystem::path& csv_path) {
    util::write_text_file(svg_path, a.svg);
    util::write_text_file(csv_path, a.csv);
}

Artifact render_heatmap(const HeatmapSpec& spec) {
    if (spec.buses.empty()) throw ConfigError("heatmap needs at least one bus");
    std::set<int> layout_ids;
    for (const auto& b : spec.buses) layout_ids.insert(b.bus_id);
    for (const auto& [bus, v] : spec.value_db)
        if (!layout_ids.count(bus))
            throw ConfigError("bus " + std::to_string(bus) + " has no coordinates in the layout");
    for (const auto& [bus, r] : spec.role)
        if (!layout_ids.count(bus))
            throw ConfigError("bus " + std::to_string(bus) + " has no coordinates in the layout");
    for (const auto& b : spec.buses)
        if (!spec.value_db.count(b.bus_id))
            throw ConfigError("bus " + std::to_string(b.bus_id) + " has no field value");

    double xmin = spec.buses[0].x, xmax = xmin, ymin = spec.buses[0].y, ymax = ymin;
    for (const auto& b : spec.buses) {
        xmin = std::min(xmin, b.x);
        xmax = std::max(xmax, b.x);
        ymin = std::min(ymin, b.y);
        ymax = std::max(ymax, b.y);
    }
    const double diag = std::hypot(xmax - xmin, ymax - ymin);
    const double sigma = spec.kernel_width > 0.0 ? spec.kernel_width
                         : diag > 0.0            ? 0.15 * diag
                                                 : 1.0;
    // 5% margin around the bounding box; degenerate spans fall back to 1.
    double sx = xmax - xmin, sy = ymax - ymin;
    if (sx <= 0.0) sx = 1.0;
    if (sy <= 0.0) sy = 1.0;
    const double wx0 = xmin - 0.05 * sx, wx1 = xmax + 0.05 * sx;
    const double wy0 = ymin - 0.05 * sy, wy1 = ymax + 0.05 * sy;

    constexpr double kPX0 = 60.0, kPY0 = 40.0, kSide = kGrid * kCell;
    auto to_px = [&](double x) { return kPX0 + (x - wx0) / (wx1 - wx0) * kSide; };
    auto to_py = [&](double y) { return kPY0 + (wy1 - y) / (wy1 - wy0) * kSide; };

    double vmin = spec.value_db.begin()->second, vmax = vmin;
    for (const auto& [bus, v] : spec.value_db) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    auto color_of = [&](double v) {
        return ramp_color(vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.5);
    };

    std::ostringstream s;
    svg_open(s, 640, 500);
    svg_text(s, 320, 22, 14, "middle", "#000000", spec.title);

    // Field: normalized Gaussian interpolation is a convex combination of
    // the bus values, so every cell lies inside [vmin, vmax].
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    s << "<g id=\"field\">\n";
    for (int j = 0; j < kGrid; ++j) {
        const double wy = wy1 - (j + 0.5) / kGrid * (wy1 - wy0);
        for (int i = 0; i < kGrid; ++i) {
            const double wx = wx0 + (i + 0.5) / kGrid * (wx1 - wx0);
            double num = 0.0, den = 0.0;
            for (const auto& b : spec.buses) {
                const double dx = wx - b.x, dy = wy - b.y;
                const double w = std::exp(-(dx * dx + dy * dy) * inv2s2);
                num += w * spec.value_db.at(b.bus_id);
                den += w;
            }
            const double v = den > 0.0 ? num / den : vmin;
            s << "<rect x=\"" << static_cast<int>(kPX0) + kCell * i << "\" y=\""
              << static_cast<int>(kPY0) + kCell * j << "\" width=\"" << kCell << "\" height=\""
              << kCell << "\" fill=\"" << color_of(v) << "\"/>\n";
        }
    }
    s << "</g>\n";
    s << "<rect x=\"60\" y=\"40\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"#333333\"/>\n";

    // Area labels at the centroid of each area's buses.
    std::map<std::string, std::pair<double, int>> area_x;
    std::map<std::string, std::pair<double, int>> area_y;
    for (const auto& b : spec.buses) {
        if (b.area_label.empty()) continue;
        area_x[b.area_label].first += to_px(b.x);
        area_x[b.area_label].second += 1;
        area_y[b.area_label].first += to_py(b.y);
        area_y[b.area_label].second += 1;
    }
    for (const auto& [label, acc] : area_x) {
        const double cx = acc.first / acc.second;
        const double cy = area_y[label].first / area_y[label].second;
        svg_text(s, cx, cy + 44, 13, "middle", "#f2f2f2", label);
    }

    s << "<g id=\"markers\">\n";
    for (const auto& b : spec.buses) {
        const double cx = to_px(b.x), cy = to_py(b.y);
        const BusRole r = spec.role.count(b.bus_id) ? spec.role.at(b.bus_id) : BusRole::non_ibr;
        if (r == BusRole::non_ibr) {
            s << "<circle cx=\"" << px(cx) << "\" cy=\"" << px(cy)
              << "\" r=\"5\" fill=\"#2c7fb8\" stroke=\"#ffffff\"/>\n";
        } else {
            s << "<rect x=\"" << px(cx - 5) << "\" y=\"" << px(cy - 5)
              << "\" width=\"10\" height=\"10\" fill=\"#7b3294\" stroke=\"#ffffff\"/>\n";
        }
        if (r == BusRole::ibr_top) {
            s << "<g class=\"arrow\"><line x1=\"" << px(cx) << "\" y1=\"" << px(cy - 30)
              << "\" x2=\"" << px(cx) << "\" y2=\"" << px(cy - 12)
              << "\" stroke=\"#d7191c\" stroke-width=\"2\"/><polygon points=\"" << px(cx - 4) << ','
              << px(cy - 14) << ' ' << px(cx + 4) << ',' << px(cy - 14) << ' ' << px(cx) << ','
              << px(cy - 7) << "\" fill=\"#d7191c\"/></g>\n";
        }
        svg_text(s, cx + 7, cy - 7, 10, "", "#111111", "B" + std::to_string(b.bus_id));
    }
    s << "</g>\n";

    // Color scale, annotated top/mid/bottom in dB.
    s << "<g id=\"scale\">\n";
    for (int k = 0; k < 100; ++k) {
        const double t = 1.0 - (k + 0.5) / 100.0;
        s << "<rect x=\"486\" y=\"" << 40 + 4 * k << "\" width=\"18\" height=\"4\" fill=\""
          << ramp_color(t) << "\"/>\n";
    }
    s << "<rect x=\"486\" y=\"40\" width=\"18\" height=\"400\" fill=\"none\" stroke=\"#333333\"/>\n";
    svg_text(s, 509, 46, 10, "", "#000000", util::fmt_fixed(vmax, 1) + " dB");
    svg_text(s, 509, 243, 10, "", "#000000", util::fmt_fixed(0.5 * (vmin + vmax), 1) + " dB");
    svg_text(s, 509, 441, 10, "", "#000000", util::fmt_fixed(vmin, 1) + " dB");
    s << "</g>\n</svg>\n";

    std::ostringstream csv;
    csv << "bus_id,x,y,obs_db,role\n";
    for (const auto& b : spec.buses) {
        const BusRole r = spec.role.count(b.bus_id) ? spec.role.at(b.bus_id) : BusRole::non_ibr;
        csv << b.bus_id << ',' << util::fmt_double(b.x) << ',' << util::fmt_double(b.y) << ','
            << util::fmt_double(spec.value_db.at(b.bus_id)) << ',' << role_name(r) << '\n';
    }
    return {s.str(), csv.str()};
}

Artifact render_bars(const std::vector<double>& obs_benchmark,
                     const std::vector<double>& obs_estimated,
                     const std::vector<double>& severity, const std::vector<int>& buses) {
    if (buses.empty()) throw ConfigError("bar chart needs at least one bus");
    if (obs_benchmark.size() != buses.size() || obs_estimated.size() != buses.size() ||
        severity.size() != buses.size())
        throw ConfigError("bar chart series length mismatch");

    auto normalized = [](std::vector<double> v) {
        const double m = *std::max_element(v.begin(), v.end());
        if (m > 0.0)
            for (double& x : v) x /= m;
        return v;
    };
    const std::vector<std::vector<double>> series = {
        normalized(obs_benchmark), normalized(obs_estimated), normalized(severity)};
    const char* names[] = {"actual", "estimated", "severity"};

    constexpr double kX0 = 60.0, kY0 = 50.0, kW = 520.0, kH = 280.0;
    auto to_py = [&](double v) { return kY0 + (1.0 - v) * kH; };

    std::ostringstream s;
    svg_open(s, 640, 380);
    svg_text(s, 320, 22, 14, "middle", "#000000", "Mode observability vs. step severity");
    for (int g = 0; g <= 4; ++g) {
        const double v = 0.25 * g;
        const double y = to_py(v);
        s << "<line x1=\"60\" y1=\"" << px(y) << "\" x2=\"580\" y2=\"" << px(y)
          << "\" stroke=\"#dddddd\"/>\n";
        svg_text(s, 54, y + 3, 10, "end", "#000000", util::fmt_fixed(v, 2));
    }
    const int n = static_cast<int>(buses.size());
    const double group = kW / n;
    const double bw = std::min(0.24 * group, 26.0);
    s << "<g id=\"bars\">\n";
    for (int i = 0; i < n; ++i) {
        const double cx = kX0 + (i + 0.5) * group;
        for (int k = 0; k < 3; ++k) {
            const double v = series[k][i];
            const double x = cx + (k - 1) * (bw + 2.0) - bw / 2.0;
            s << "<rect x=\"" << px(x) << "\" y=\"" << px(to_py(v)) << "\" width=\"" << px(bw)
              << "\" height=\"" << px(v * kH) << "\" fill=\"" << kSeriesColors[k] << "\"/>\n";
        }
        svg_text(s, cx, kY0 + kH + 16, 10, "middle", "#000000", "B" + std::to_string(buses[i]));
    }
    s << "</g>\n";
    for (int k = 0; k < 3; ++k) {
        const double lx = 120.0 + 140.0 * k;
        s << "<rect x=\"" << px(lx) << "\" y=\"30\" width=\"10\" height=\"10\" fill=\""
          << kSeriesColors[k] << "\"/>\n";
        svg_text(s, lx + 14, 39, 10, "", "#000000", names[k]);
    }
    s << "<rect x=\"60\" y=\"50\" width=\"520\" height=\"280\" fill=\"none\" stroke=\"#333333\"/>\n";
    s << "</svg>\n";

    std::ostringstream csv;
    csv << "bus,actual,estimated,severity\n";
    for (int i = 0; i < n; ++i)
        csv << buses[i] << ',' << util::fmt_double(series[0][i]) << ','
            << util::fmt_double(series[1][i]) << ',' << util::fmt_double(series[2][i]) << '\n';
    return {s.str(), csv.str()};
}

Artifact render_eigen_scatter(const std::vector<modal::ModalResult>& results,
                              const std::vector<std::string>& labels) {
    if (results.empty()) throw ConfigError("eigenvalue scatter needs at least one result");
    if (labels.size() != results.size()) throw ConfigError("one label per scatter series");

    double fband = 0.0;
    for (const auto& r : results) fband = std::max(fband, r.band_hz.second);
    const double fmax = 1.5 * (fband > 0.0 ? fband : 45.0);

    struct Pt {
        int series;
        double re, im, f, zeta;
        bool sso;
    };
    std::vector<Pt> pts;
    for (int si = 0; si < static_cast<int>(results.size()); ++si) {
        const auto& r = results[si];
        std::set<int> sso(r.sso_indices.begin(), r.sso_indices.end());
        for (int k = 0; k < static_cast<int>(r.modes.size()); ++k) {
            const auto& m = r.modes[k];
            pts.push_back({si, m.eigenvalue.real(), m.eigenvalue.imag(), m.frequency_hz,
                           m.damping_ratio, sso.count(k) > 0});
        }
    }

    double xlo = 0.0, xhi = 0.0;
    for (const auto& p : pts) {
        if (p.f > fmax) continue;
        xlo = std::min(xlo, p.re);
        xhi = std::max(xhi, p.re);
    }
    double span = xhi - xlo;
    if (span <= 0.0) span = 1.0;
    xlo -= 0.05 * span;
    xhi += 0.05 * span;

    constexpr double kX0 = 70.0, kY0 = 40.0, kW = 500.0, kH = 380.0;
    auto to_px = [&](double re) { return kX0 + (re - xlo) / (xhi - xlo) * kW; };
    auto to_py = [&](double f) { return kY0 + (fmax - f) / fmax * kH; };

    std::ostringstream s;
    svg_open(s, 640, 480);
    svg_text(s, 320, 22, 14, "middle", "#000000", "Eigenvalues (band modes highlighted)");
    for (int g = 0; g <= 4; ++g) {
        const double f = fmax * g / 4.0;
        svg_text(s, 64, to_py(f) + 3, 10, "end", "#000000", util::fmt_fixed(f, 1));
        const double re = xlo + (xhi - xlo) * g / 4.0;
        svg_text(s, to_px(re), kY0 + kH + 14, 10, "middle", "#000000", util::fmt_fixed(re, 2));
    }
    svg_text(s, 320, kY0 + kH + 32, 11, "middle", "#000000", "real part [1/s]");
    svg_text(s, 16, 230, 11, "", "#000000", "f [Hz]");
    if (xlo < 0.0 && xhi > 0.0)
        s << "<line x1=\"" << px(to_px(0.0)) << "\" y1=\"40\" x2=\"" << px(to_px(0.0))
          << "\" y2=\"420\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";

    // With a benchmark/estimated pair, join matched band modes so the
    // displacement between the two spectra is visible.
    if (results.size() == 2) {
        std::vector<const modal::Mode*> a, b;
        for (int k : results[0].sso_indices) a.push_back(&results[0].modes[k]);
        for (int k : results[1].sso_indices) b.push_back(&results[1].modes[k]);
        if (!a.empty() && !b.empty()) {
            std::vector<std::vector<double>> cost(a.size(), std::vector<double>(b.size()));
            for (size_t i = 0; i < a.size(); ++i)
                for (size_t j = 0; j < b.size(); ++j)
                    cost[i][j] = std::abs(a[i]->eigenvalue - b[j]->eigenvalue);
            const std::vector<int> match = util::min_cost_assignment(cost);
            for (size_t i = 0; i < a.size(); ++i) {
                if (match[i] < 0) continue;
                const auto* q = b[static_cast<size_t>(match[i])];
                const double x1 = to_px(a[i]->eigenvalue.real()), y1 = to_py(a[i]->frequency_hz);
                const double x2 = to_px(q->eigenvalue.real()), y2 = to_py(q->frequency_hz);
                s << "<g class=\"pair\"><line x1=\"" << px(x1) << "\" y1=\"" << px(y1)
                  << "\" x2=\"" << px(x2) << "\" y2=\"" << px(y2)
                  << "\" stroke=\"#999999\"/>";
                const double df = std::abs(a[i]->frequency_hz - q->frequency_hz) * 1000.0;
                const double dz = std::abs(a[i]->damping_ratio - q->damping_ratio);
                svg_text(s, 0.5 * (x1 + x2) + 6, 0.5 * (y1 + y2) - 4, 8, "", "#555555",
                         "df=" + util::fmt_fixed(df, 1) + " mHz dz=" + util::fmt_fixed(dz, 4));
                s << "</g>\n";
            }
        }
    }

    s << "<g id=\"points\">\n";
    for (const auto& p : pts) {
        if (p.f > fmax) continue;
        const char* color = kSeriesColors[p.series % 6];
        if (p.sso)
            s << "<circle class=\"sso\" cx=\"" << px(to_px(p.re)) << "\" cy=\"" << px(to_py(p.f))
              << "\" r=\"5\" fill=\"" << color << "\" stroke=\"#d7191c\" stroke-width=\"2\"/>\n";
        else
            s << "<circle class=\"pt\" cx=\"" << px(to_px(p.re)) << "\" cy=\"" << px(to_py(p.f))
              << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
    s << "</g>\n";
    for (int si = 0; si < static_cast<int>(labels.size()); ++si) {
        const double ly = 52.0 + 16.0 * si;
        s << "<circle cx=\"456\" cy=\"" << px(ly) << "\" r=\"4\" fill=\"" << kSeriesColors[si % 6]
          << "\"/>\n";
        svg_text(s, 464, ly + 3, 10, "", "#000000", labels[si]);
    }
    s << "<rect x=\"70\" y=\"40\" width=\"500\" height=\"380\" fill=\"none\" stroke=\"#333333\"/>\n";
    s << "</svg>\n";

    std::ostringstream csv;
    csv << "series,re,im,freq_hz,damping,is_sso\n";
    for (const auto& p : pts)
        csv << labels[p.series] << ',' << util::fmt_double(p.re) << ',' << util::fmt_double(p.im)
            << ',' << util::fmt_double(p.f) << ',' << util::fmt_double(p.zeta) << ','
            << (p.sso ? 1 : 0) << '\n';
    return {s.str(), csv.str()};
}

}  // namespace ssoscope::report
