#include "mnn/sweep.hpp"

#include "mnn/report.hpp"
#include "mnn/util.hpp"

#include <cmath>
#include <fstream>

namespace mnn {

namespace fs = std::filesystem;

const char* to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::k: return "k";
        case SweepAxis::support_size: return "support_size";
        case SweepAxis::augmentation: return "augmentation";
        case SweepAxis::strategy: return "strategy";
        case SweepAxis::lambda: return "lambda";
        case SweepAxis::weight_scheme: return "weight_scheme";
    }
    return "?";
}

SweepAxis parse_sweep_axis(const std::string& s) {
    for (auto a : {SweepAxis::k, SweepAxis::support_size, SweepAxis::augmentation, SweepAxis::strategy,
                   SweepAxis::lambda, SweepAxis::weight_scheme}) {
        if (s == to_string(a)) return a;
    }
    throw Error("unknown sweep axis '" + s + "'");
}

namespace {

std::size_t parse_count(const std::string& v, const char* what) {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || v.front() == '-') {
        throw Error(std::string("sweep: ") + what + " value '" + v + "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(n);
}

AugmentPolicy preset(char c) {
    if (c == 's') return AugmentPolicy::strong();
    if (c == 'w') return AugmentPolicy::weak();
    throw Error("sweep: augmentation strength must be 's' or 'w'");
}

std::string sanitize(const std::string& v) {
    std::string out;
    for (char c : v) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_') ? c : '-';
    return out;
}

}  // namespace

RunConfig apply_axis(RunConfig c, SweepAxis axis, const std::string& value) {
    switch (axis) {
        case SweepAxis::k: c.k = parse_count(value, "k"); break;
        case SweepAxis::support_size: c.support_capacity = parse_count(value, "support_size"); break;
        case SweepAxis::augmentation:
            if (value.size() != 3 || value[1] != '/') {
                throw Error("sweep: augmentation value '" + value + "' must look like s/w");
            }
            c.student_aug = preset(value[0]);
            c.teacher_aug = preset(value[2]);
            break;
        case SweepAxis::strategy:
            if (value == "cosine") c.method = Method::mnn;
            else if (value == "random") c.method = Method::mnn_random;
            else if (value == "oracle") c.method = Method::mnn_oracle;
            else if (value == "none") c.method = Method::byol;
            else throw Error("sweep: unknown strategy '" + value + "'");
            break;
        case SweepAxis::lambda:
            if (value == "uniform") {
                c.mix.mode = MixMode::uniform;
            } else {
                c.mix.mode = MixMode::fixed;
                c.mix.fixed_lambda = parse_double(value);
                if (!std::isfinite(c.mix.fixed_lambda)) throw Error("sweep: bad lambda '" + value + "'");
            }
            break;
        case SweepAxis::weight_scheme:
            switch (parse_weight_tag(value)) {
                case WeightTag::wse: c.method = Method::mnn; break;
                case WeightTag::mse: c.method = Method::msf; break;
                case WeightTag::cas: c.method = Method::mnn_cas; break;
            }
            break;
    }
    return c;
}

std::string comparison_row(SweepAxis axis, const SweepPoint& p) {
    const auto& m = p.manifest;
    const double loss = m.epochs.empty() ? std::nan("") : m.epochs.back().loss_mean;
    const double purity = m.epochs.empty() ? std::nan("") : m.epochs.back().diag.purity;
    return std::string(to_string(axis)) + ',' + p.value + ',' + std::to_string(p.seed) + ',' + m.run_id + ',' +
           to_string(m.config.method) + ',' + format_double(loss) + ',' + format_double(purity) + ',' +
           format_double(m.final_eval.knn_acc) + ',' + format_double(m.final_eval.probe_acc) + '\n';
}

std::string comparison_csv(const SweepResult& r) {
    std::string out = std::string(kComparisonHeader) + '\n';
    for (const auto& p : r.points) out += comparison_row(r.axis, p);
    return out;
}

std::string sweep_svg(const SweepResult& r) {
    // numeric axes plot against the value, categorical ones against the index
    bool numeric = true;
    std::vector<double> xs;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        double v = std::nan("");
        try {
            v = parse_double(r.values[i]);
        } catch (const Error&) {
        }
        if (!std::isfinite(v)) numeric = false;
        xs.push_back(v);
    }
    if (!numeric) {
        for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
    }
    PlotSeries knn{"knn_acc", {}, {}}, probe{"probe_acc", {}, {}}, purity{"purity", {}, {}};
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        double sk = 0, sp = 0, su = 0;
        std::size_t n = 0;
        for (const auto& p : r.points) {
            if (p.value != r.values[i]) continue;
            sk += p.manifest.final_eval.knn_acc;
            sp += p.manifest.final_eval.probe_acc;
            su += p.manifest.epochs.empty() ? std::nan("") : p.manifest.epochs.back().diag.purity;
            ++n;
        }
        if (n == 0) continue;
        const double d = static_cast<double>(n);
        for (auto* s : {&knn, &probe, &purity}) s->x.push_back(xs[i]);
        knn.y.push_back(sk / d);
        probe.y.push_back(sp / d);
        purity.y.push_back(su / d);
    }
    std::string x_label = to_string(r.axis);
    if (!numeric) {
        x_label += " (";
        for (std::size_t i = 0; i < r.values.size(); ++i) x_label += (i ? ", " : "") + std::to_string(i) + "=" + r.values[i];
        x_label += ")";
    }
    const Panel panels[] = {{"accuracy vs " + std::string(to_string(r.axis)), x_label, "seed-mean accuracy",
                             {knn, probe}, false},
                            {"purity vs " + std::string(to_string(r.axis)), x_label, "seed-mean purity", {purity},
                             false}};
    return render_svg(panels);
}

SweepResult sweep(SweepAxis axis, std::span<const std::string> values, const RunConfig& base,
                  const SweepOptions& opt) {
    if (values.empty()) throw Error("sweep: no values given");
    if (opt.seeds.empty()) throw Error("sweep: no seeds given");
    SweepResult r;
    r.axis = axis;
    r.values.assign(values.begin(), values.end());
    r.seeds = opt.seeds;

    // every configuration is validated before any training starts
    std::vector<RunConfig> configs;
    for (const auto& v : values) {
        RunConfig c = apply_axis(base, axis, v);
        c.validate();
        configs.push_back(std::move(c));
    }

    const bool write = !opt.output_dir.empty();
    fs::path csv_path;
    if (write) {
        std::error_code ec;
        fs::create_directories(opt.output_dir, ec);
        if (ec) throw Error("cannot create output directory '" + opt.output_dir.string() + "': " + ec.message());
        csv_path = opt.output_dir / kComparisonFile;
        write_text_file(csv_path, std::string(kComparisonHeader) + '\n');
    }

    for (std::size_t i = 0; i < values.size() && !r.aborted; ++i) {
        for (auto seed : opt.seeds) {
            RunConfig c = configs[i];
            c.seed = seed;
            c.run_id = std::string(to_string(axis)) + "_" + sanitize(values[i]) + "-s" + std::to_string(seed);
            try {
                SweepPoint p{values[i], seed, train(c)};
                if (write) {
                    const RunManifest one[] = {p.manifest};
                    emit_report(one, opt.output_dir / "runs" / c.run_id);
                    std::ofstream out(csv_path, std::ios::app | std::ios::binary);
                    out << comparison_row(axis, p);
                    if (!out) throw Error("cannot append to '" + csv_path.string() + "'");
                }
                r.points.push_back(std::move(p));
                if (opt.on_point) opt.on_point(r.points.back());
            } catch (const std::exception& e) {
                r.aborted = true;
                r.error = c.run_id + ": " + e.what();
                break;
            }
        }
    }
    if (write) write_text_file(opt.output_dir / kSweepPlotFile, sweep_svg(r));
    return r;
}

}  // namespace mnn
