#include "ssoscope/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ssoscope/errors.hpp"

namespace ssoscope::util {

std::string fmt_double(double x) {
    if (x == 0.0) x = 0.0;  // normalize -0
    char buf[40];
    // 17 significant digits round-trips any double; trim to the shortest
    // representation that still round-trips.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt_fixed(double x, int digits) {
    if (x == 0.0) x = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + p.string());
    out << content;
}

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open csv: " + p.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            t.header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto& c : cells) {
            try {
                row.push_back(std::stod(c));
            } catch (...) {
                throw ConfigError("non-numeric csv cell '" + c + "' in " + p.string());
            }
        }
        if (row.size() != t.header.size())
            throw ConfigError("ragged csv row in " + p.string());
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_csv(const std::filesystem::path& p, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += fmt_double(row[i]);
        }
        out += '\n';
    }
    write_text_file(p, out);
}

namespace {
std::vector<double> ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}
}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ConfigError("spearman requires two equal-length series of length >= 2");
    const auto ra = ranks(a), rb = ranks(b);
    const size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0 || db == 0) return 0.0;
    return num / std::sqrt(da * db);
}

std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    // Hungarian algorithm, O(n^2 m) potential form. Pads to a square
    // problem internally; padded cells carry a large finite cost.
    const int nr = static_cast<int>(cost.size());
    if (nr == 0) return {};
    const int nc = static_cast<int>(cost[0].size());
    for (const auto& row : cost)
        if (static_cast<int>(row.size()) != nc) throw ConfigError("ragged cost matrix");
    const int n = std::max(nr, nc);
    double big = 1.0;
    for (const auto& row : cost)
        for (double c : row) big = std::max(big, std::abs(c));
    big = big * static_cast<double>(n + 1) + 1.0;
    auto at = [&](int r, int c) -> double {
        if (r < nr && c < nc) return cost[r][c];
        return big;
    };

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = std::numeric_limits<double>::infinity();
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> match(nr, -1);
    for (int j = 1; j <= n; ++j) {
        const int i = p[j];
        if (i >= 1 && i <= nr && j <= nc) match[i - 1] = j - 1;
    }
    return match;
}

std::complex<double> dft_line(const std::vector<double>& x, double dt, double f_hz) {
    const double w = 2.0 * M_PI * f_hz * dt;
    // Goertzel-style recurrence keeps this O(n) without per-sample trig.
    const double c = std::cos(w), s = std::sin(w);
    double cr = 1.0, ci = 0.0;  // exp(-j*w*n), advanced by multiplication
    double sum_r = 0.0, sum_i = 0.0;
    for (double xn : x) {
        sum_r += xn * cr;
        sum_i += xn * ci;
        const double nr = cr * c + ci * s;
        const double ni = ci * c - cr * s;
        cr = nr;
        ci = ni;
    }
    return {sum_r, sum_i};
}

std::vector<double> bandpass_zero_phase(const std::vector<double>& x, double sample_rate_hz,
                                        double f_lo_hz, double f_hi_hz) {
    if (!(f_lo_hz > 0) || !(f_hi_hz > f_lo_hz) || !(f_hi_hz < 0.5 * sample_rate_hz))
        throw ConfigError("band-pass requires 0 < f_lo < f_hi < Nyquist");
    // RBJ biquad band-pass (constant skirt gain), bilinear-transform design
    // centered at the geometric mean of the band edges.
    const double f0 = std::sqrt(f_lo_hz * f_hi_hz);
    const double bw_oct = std::log2(f_hi_hz / f_lo_hz);
    const double w0 = 2.0 * M_PI * f0 / sample_rate_hz;
    const double alpha = std::sin(w0) * std::sinh(0.5 * std::log(2.0) * bw_oct * w0 / std::sin(w0));
    const double b0 = alpha, b1 = 0.0, b2 = -alpha;
    const double a0 = 1.0 + alpha, a1 = -2.0 * std::cos(w0), a2 = 1.0 - alpha;

    auto run = [&](const std::vector<double>& in) {
        std::vector<double> out(in.size());
        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (size_t n = 0; n < in.size(); ++n) {
            const double xn = in[n];
            const double yn = (b0 * xn + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
            x2 = x1;
            x1 = xn;
            y2 = y1;
            y1 = yn;
            out[n] = yn;
        }
        return out;
    };

    auto fwd = run(x);
    std::reverse(fwd.begin(), fwd.end());
    auto bwd = run(fwd);
    std::reverse(bwd.begin(), bwd.end());
    return bwd;
}

unsigned long long Rng::next_u64() {
    // xorshift64*
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

}  // namespace ssoscope::util
