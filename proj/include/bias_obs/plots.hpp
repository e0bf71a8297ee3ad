// SVG line charts of the bias-estimate errors against time.
#pragma once

#include "bias_obs/experiment.hpp"

namespace bias_obs {

struct Series {
    std::string name;
    std::string colour;
    std::vector<double> y;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// About five round tick values covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi) {
    const double span = hi - lo;
    if (!(span > 0.0)) return {lo};
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> out;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(v == 0.0 ? 0.0 : v);
    return out;
}

} // namespace detail

/// One chart: polylines of every series against t.
inline std::string line_chart_svg(const std::vector<double>& t, const std::vector<Series>& series,
                                  const std::string& title, const std::string& y_label) {
    const double W = 720, H = 400, left = 80, right = 20, top = 40, bottom = 50;
    double t0 = t.empty() ? 0.0 : t.front(), t1 = t.empty() ? 1.0 : t.back();
    if (!(t1 > t0)) t1 = t0 + 1.0;
    double lo = 0.0, hi = 0.0;
    for (const auto& s : series) {
        for (double v : s.y) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto X = [&](double v) { return left + (v - t0) / (t1 - t0) * (W - left - right); };
    auto Y = [&](double v) { return top + (hi - v) / (hi - lo) * (H - top - bottom); };
    using detail::num;
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                    "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(W) + "\" height=\"" +
                    num(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
    s += "<g stroke=\"#bbb\" stroke-width=\"1\">\n";
    for (double v : detail::ticks(t0, t1)) {
        s += "<line x1=\"" + num(X(v)) + "\" y1=\"" + num(top) + "\" x2=\"" + num(X(v)) + "\" y2=\"" + num(H - bottom) + "\"/>\n";
    }
    for (double v : detail::ticks(lo, hi)) {
        s += "<line x1=\"" + num(left) + "\" y1=\"" + num(Y(v)) + "\" x2=\"" + num(W - right) + "\" y2=\"" + num(Y(v)) + "\"/>\n";
    }
    s += "</g>\n<g text-anchor=\"middle\">\n";
    for (double v : detail::ticks(t0, t1)) {
        s += "<text x=\"" + num(X(v)) + "\" y=\"" + num(H - bottom + 16) + "\">" + num(v) + "</text>\n";
    }
    s += "</g>\n<g text-anchor=\"end\">\n";
    for (double v : detail::ticks(lo, hi)) {
        s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(Y(v) + 4) + "\">" + num(v) + "</text>\n";
    }
    s += "</g>\n";
    s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(W - left - right) + "\" height=\"" +
         num(H - top - bottom) + "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(left + (W - left - right) / 2) + "\" y=\"" + num(H - 12) +
         "\" text-anchor=\"middle\">t (s)</text>\n";
    s += "<text x=\"18\" y=\"" + num(top + (H - top - bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num(top + (H - top - bottom) / 2) + ")\">" + y_label + "</text>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& ser = series[i];
        s += "<polyline fill=\"none\" stroke=\"" + ser.colour + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < ser.y.size() && k < t.size(); ++k) {
            if (k) s += ' ';
            s += num(X(t[k])) + "," + num(Y(ser.y[k]));
        }
        s += "\"/>\n";
        const double ly = top + 14 + 16 * static_cast<double>(i);
        s += "<line x1=\"" + num(W - right - 70) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(W - right - 50) + "\" y2=\"" +
             num(ly - 4) + "\" stroke=\"" + ser.colour + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + num(W - right - 45) + "\" y=\"" + num(ly) + "\">" + ser.name + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

struct PlotFiles {
    std::filesystem::path translation;
    std::filesystem::path rotation;
};

/// bias_v_error.svg and bias_w_error.svg next to the CSV (or in out_dir).
inline PlotFiles emit_plots(const std::filesystem::path& csv, std::filesystem::path out_dir = {}) {
    const std::vector<DiagnosticRow> rows = read_diagnostics(csv);
    if (out_dir.empty()) out_dir = csv.parent_path();
    std::vector<double> t;
    std::array<Series, 3> v{{{"x", "#d62728", {}}, {"y", "#2ca02c", {}}, {"z", "#1f77b4", {}}}};
    std::array<Series, 3> w = v;
    for (const auto& r : rows) {
        t.push_back(r.t);
        for (int c = 0; c < 3; ++c) {
            v[c].y.push_back(r.pve[c]);
            w[c].y.push_back(r.pwe[c]);
        }
    }
    PlotFiles out{out_dir / "bias_v_error.svg", out_dir / "bias_w_error.svg"};
    std::ofstream(out.translation) << line_chart_svg(t, {v.begin(), v.end()}, "Translation bias estimation error",
                                                     "error (m/s)");
    std::ofstream(out.rotation) << line_chart_svg(t, {w.begin(), w.end()}, "Rotation bias estimation error",
                                                  "error (rad/s)");
    return out;
}

} // namespace bias_obs
