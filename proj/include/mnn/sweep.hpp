#pragma once

#include "mnn/config.hpp"
#include "mnn/trainer.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mnn {

enum class SweepAxis { k, support_size, augmentation, strategy, lambda, weight_scheme };

const char* to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& s);

/// Returns `base` with one axis set to `value`.
///
///   k, support_size   integer
///   augmentation      "s/w", "w/w", "s/s" or "w/s" (student/teacher strength)
///   strategy          cosine, random, oracle or none (selects the matching method)
///   lambda            a number in [0, 1] (fixed mixing) or "uniform"
///   weight_scheme     wse, mse or cas (mnn, msf and mnn_cas respectively)
RunConfig apply_axis(RunConfig base, SweepAxis axis, const std::string& value);

struct SweepPoint {
    std::string value;
    std::uint64_t seed = 0;
    RunManifest manifest;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::k;
    std::vector<std::string> values;
    std::vector<std::uint64_t> seeds;
    std::vector<SweepPoint> points;  // value-major, seed-minor
    bool aborted = false;
    std::string error;  // set when aborted
};

struct SweepOptions {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    /// When set, comparison.csv is appended after every finished run, each run
    /// gets a report under runs/<run_id>/, and sweep.svg is written at the end
    /// (also after an abort).
    std::filesystem::path output_dir;
    std::function<void(const SweepPoint&)> on_point;
};

inline constexpr const char* kComparisonHeader =
    "axis,value,seed,run_id,method,final_loss,final_purity,knn_acc,probe_acc";
inline constexpr const char* kComparisonFile = "comparison.csv";
inline constexpr const char* kSweepPlotFile = "sweep.svg";

/// Trains every (value, seed) pair. A failing run stops the sweep; points
/// finished before it are kept and `aborted` is set.
SweepResult sweep(SweepAxis axis, std::span<const std::string> values, const RunConfig& base,
                  const SweepOptions& options = {});

std::string comparison_row(SweepAxis axis, const SweepPoint& point);
std::string comparison_csv(const SweepResult& result);

/// Seed-mean accuracy and purity against the axis values.
std::string sweep_svg(const SweepResult& result);

}  // namespace mnn
