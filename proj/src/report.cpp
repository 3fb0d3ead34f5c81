#include "mnn/report.hpp"

#include "mnn/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace mnn {

namespace fs = std::filesystem;

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<MetricsRow> metrics_rows(const RunManifest& m) {
    std::vector<MetricsRow> rows;
    for (const auto& e : m.epochs) {
        rows.push_back({m.run_id, m.config.seed, e.epoch, e.loss_mean, e.lr, e.diag.purity, e.diag.entropy_mean,
                        e.diag.inconsistency_mean, e.knn_acc, e.probe_acc});
    }
    return rows;
}

std::string metrics_csv(std::span<const RunManifest> manifests) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& m : manifests) {
        for (const auto& r : metrics_rows(m)) {
            if (r.run_id.find_first_of(",\n\"") != std::string::npos) {
                throw Error("run_id '" + r.run_id + "' cannot be written to CSV");
            }
            out += r.run_id + ',' + std::to_string(r.seed) + ',' + std::to_string(r.epoch);
            for (double v : {r.loss_mean, r.lr, r.purity, r.entropy_mean, r.inconsistency_mean, r.knn_acc,
                             r.probe_acc}) {
                out += ',' + format_double(v);
            }
            out += '\n';
        }
    }
    return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("metrics csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader) throw Error("metrics csv: unexpected header '" + line + "'");
    std::vector<MetricsRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() != 10) {
            throw Error("metrics csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                        " fields");
        }
        MetricsRow r;
        r.run_id = f[0];
        r.seed = std::stoull(f[1]);
        r.epoch = std::stoull(f[2]);
        r.loss_mean = parse_double(f[3]);
        r.lr = parse_double(f[4]);
        r.purity = parse_double(f[5]);
        r.entropy_mean = parse_double(f[6]);
        r.inconsistency_mean = parse_double(f[7]);
        r.knn_acc = parse_double(f[8]);
        r.probe_acc = parse_double(f[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& path) { return parse_metrics_csv(read_text_file(path)); }

nlohmann::json manifests_json(std::span<const RunManifest> manifests) {
    if (manifests.empty()) throw Error("manifests_json: no manifests");
    if (manifests.size() == 1) return manifests.front().to_json();
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& m : manifests) runs.push_back(m.to_json());
    return {{"schema_version", kManifestSchemaVersion}, {"runs", runs}};
}

std::vector<RunManifest> read_manifests(const fs::path& path) {
    const auto j = nlohmann::json::parse(read_text_file(path));
    std::vector<RunManifest> out;
    if (j.contains("runs")) {
        for (const auto& r : j.at("runs")) out.push_back(RunManifest::from_json(r));
    } else {
        out.push_back(RunManifest::from_json(j));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kPanelW = 380, kPanelH = 280;
constexpr double kLeft = 58, kRight = 14, kTop = 30, kBottom = 44;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) {
            const double pad = std::max(std::abs(lo) * 0.05, 1e-3);
            lo -= pad;
            hi += pad;
        }
    }
};

void draw_panel(std::ostringstream& o, const Panel& p, double x0) {
    const double pw = kPanelW - kLeft - kRight;
    const double ph = kPanelH - kTop - kBottom;
    o << "<g transform=\"translate(" << fmt(x0) << ",0)\">\n";
    o << "<text x=\"" << fmt(kPanelW / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << escape(p.title) << "</text>\n";
    o << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(pw) << "\" height=\""
      << fmt(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";

    Range xr, yr;
    if (p.bars) {
        xr.lo = 0;
        xr.hi = static_cast<double>(std::max<std::size_t>(p.series.size(), 1));
        yr.add(0.0);
        for (const auto& s : p.series) {
            if (!s.y.empty()) yr.add(s.y.back());
        }
    } else {
        for (const auto& s : p.series) {
            for (double v : s.x) xr.add(v);
            for (double v : s.y) yr.add(v);
        }
        xr.finish();
    }
    yr.finish();
    auto sx = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double v) { return kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

    for (int t = 0; t <= 4; ++t) {
        const double v = yr.lo + (yr.hi - yr.lo) * t / 4.0;
        o << "<text x=\"" << fmt(kLeft - 4) << "\" y=\"" << fmt(sy(v) + 4)
          << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(v) << "</text>\n";
    }
    if (!p.bars) {
        for (int t = 0; t <= 4; ++t) {
            const double v = xr.lo + (xr.hi - xr.lo) * t / 4.0;
            o << "<text x=\"" << fmt(sx(v)) << "\" y=\"" << fmt(kTop + ph + 14)
              << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_label(v) << "</text>\n";
        }
    }
    o << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kPanelH - 6)
      << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.x_label) << "</text>\n";
    o << "<text transform=\"translate(12," << fmt(kTop + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">" << escape(p.y_label) << "</text>\n";

    for (std::size_t i = 0; i < p.series.size(); ++i) {
        const auto& s = p.series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        if (p.bars) {
            if (s.y.empty() || !std::isfinite(s.y.back())) continue;
            const double left = sx(static_cast<double>(i) + 0.15);
            const double right = sx(static_cast<double>(i) + 0.85);
            const double top = sy(s.y.back());
            o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(right - left)
              << "\" height=\"" << fmt(sy(yr.lo) - top) << "\" fill=\"" << color << "\"><title>"
              << escape(s.name) << ' ' << format_double(s.y.back()) << "</title></rect>\n";
            o << "<text x=\"" << fmt((left + right) / 2) << "\" y=\"" << fmt(kTop + ph + 14)
              << "\" text-anchor=\"middle\" font-size=\"9\">" << escape(s.name) << "</text>\n";
            continue;
        }
        // NaN points break the line into separate segments
        std::string pts;
        auto flush = [&] {
            if (!pts.empty()) {
                o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts
                  << "\"/>\n";
            }
            pts.clear();
        };
        const std::size_t n = std::min(s.x.size(), s.y.size());
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) {
                flush();
                continue;
            }
            pts += fmt(sx(s.x[k])) + ',' + fmt(sy(s.y[k])) + ' ';
            if (n == 1) {
                o << "<circle cx=\"" << fmt(sx(s.x[k])) << "\" cy=\"" << fmt(sy(s.y[k])) << "\" r=\"3\" fill=\""
                  << color << "\"/>\n";
            }
        }
        flush();
        o << "<text x=\"" << fmt(kLeft + 6) << "\" y=\"" << fmt(kTop + 14 + 12 * static_cast<double>(i))
          << "\" font-size=\"10\" fill=\"" << color << "\">" << escape(s.name) << "</text>\n";
    }
    o << "</g>\n";
}

}  // namespace

std::string render_svg(std::span<const Panel> panels) {
    const double width = kPanelW * static_cast<double>(std::max<std::size_t>(panels.size(), 1));
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(kPanelH)
      << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(kPanelH) << "\" font-family=\"sans-serif\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) draw_panel(o, panels[i], kPanelW * static_cast<double>(i));
    o << "</svg>\n";
    return o.str();
}

std::string report_svg(std::span<const MetricsRow> rows) {
    // preserve first-appearance order of runs
    std::vector<std::string> order;
    std::map<std::string, std::vector<const MetricsRow*>> by_run;
    for (const auto& r : rows) {
        if (!by_run.count(r.run_id)) order.push_back(r.run_id);
        by_run[r.run_id].push_back(&r);
    }
    Panel loss{"training loss", "epoch", "loss_mean", {}, false};
    Panel pur{"neighbor purity", "epoch", "purity", {}, false};
    Panel knn{"final KNN accuracy", "run", "knn_acc", {}, true};
    Panel probe{"final probe accuracy", "run", "probe_acc", {}, true};
    for (const auto& id : order) {
        PlotSeries l{id, {}, {}}, p{id, {}, {}};
        double last_knn = std::nan(""), last_probe = std::nan("");
        for (const auto* r : by_run[id]) {
            l.x.push_back(static_cast<double>(r->epoch));
            l.y.push_back(r->loss_mean);
            p.x.push_back(static_cast<double>(r->epoch));
            p.y.push_back(r->purity);
            if (std::isfinite(r->knn_acc)) last_knn = r->knn_acc;
            if (std::isfinite(r->probe_acc)) last_probe = r->probe_acc;
        }
        loss.series.push_back(std::move(l));
        pur.series.push_back(std::move(p));
        knn.series.push_back({id, {0.0}, {last_knn}});
        probe.series.push_back({id, {0.0}, {last_probe}});
    }
    const Panel panels[] = {loss, pur, knn, probe};
    return render_svg(panels);
}

std::vector<fs::path> emit_report(std::span<const RunManifest> manifests, const fs::path& dir) {
    if (manifests.empty()) throw Error("emit_report: need at least one manifest");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    const std::string csv = metrics_csv(manifests);
    const auto rows = parse_metrics_csv(csv);
    const std::vector<fs::path> paths{dir / kMetricsFile, dir / kManifestFile, dir / kReportFile};
    write_text_file(paths[0], csv);
    write_text_file(paths[1], manifests_json(manifests).dump(2) + "\n");
    write_text_file(paths[2], report_svg(rows));
    return paths;
}

void write_diagnostics_csv(const RunManifest& m, const fs::path& path) {
    std::string out = "run_id,epoch,position,purity_cosine,purity_cas\n";
    for (const auto& e : m.epochs) {
        const auto& a = e.diag.positional_purity;
        const auto& b = e.diag.positional_purity_cas;
        for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
            out += m.run_id + ',' + std::to_string(e.epoch) + ',' + std::to_string(i + 1) + ',' +
                   format_double(i < a.size() ? a[i] : std::nan("")) + ',' +
                   format_double(i < b.size() ? b[i] : std::nan("")) + '\n';
        }
    }
    write_text_file(path, out);
}

}  // namespace mnn
