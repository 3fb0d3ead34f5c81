#pragma once

#include "mnn/trainer.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mnn {

inline constexpr const char* kMetricsHeader =
    "run_id,seed,epoch,loss_mean,lr,purity,entropy_mean,inconsistency_mean,knn_acc,probe_acc";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kReportFile = "report.svg";
inline constexpr const char* kDiagnosticsFile = "diagnostics.csv";

/// One line of metrics.csv. Missing values are NaN and print as "nan".
struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double loss_mean = 0.0;
    double lr = 0.0;
    double purity = 0.0;
    double entropy_mean = 0.0;
    double inconsistency_mean = 0.0;
    double knn_acc = 0.0;
    double probe_acc = 0.0;
};

std::vector<MetricsRow> metrics_rows(const RunManifest& manifest);

/// Header plus one row per epoch per manifest, in manifest order.
std::string metrics_csv(std::span<const RunManifest> manifests);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// A single manifest is written as-is; several are wrapped as
/// {"schema_version": .., "runs": [..]}.
nlohmann::json manifests_json(std::span<const RunManifest> manifests);
std::vector<RunManifest> read_manifests(const std::filesystem::path& path);

/// Loss curve, purity per epoch and final accuracy bars, drawn from the
/// metrics rows so the plot matches the CSV exactly.
std::string report_svg(std::span<const MetricsRow> rows);

/// Writes metrics.csv, manifest.json and report.svg into `dir` (created if
/// needed) and returns their paths.
std::vector<std::filesystem::path> emit_report(std::span<const RunManifest> manifests,
                                               const std::filesystem::path& dir);

/// Per-position purity under cosine and CAS order, one row per epoch and position.
void write_diagnostics_csv(const RunManifest& manifest, const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Minimal SVG plotting shared by the report and the sweep.

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    bool bars = false;  // one bar per series, height = last y value
};

/// Panels laid out left to right in one document.
std::string render_svg(std::span<const Panel> panels);

}  // namespace mnn
