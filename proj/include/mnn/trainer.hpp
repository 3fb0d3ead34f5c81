#pragma once

#include "mnn/config.hpp"
#include "mnn/dataset.hpp"
#include "mnn/model.hpp"
#include "mnn/support_set.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace mnn {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;
inline constexpr const char* kVersionStamp = "mnn 0.1.0";

/// Raised when a training step produces a non-finite loss.
class TrainingError : public Error {
public:
    TrainingError(std::size_t step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

struct EvaluationReport {
    std::size_t k_eval = 0;
    double knn_acc = std::numeric_limits<double>::quiet_NaN();
    double probe_acc = std::numeric_limits<double>::quiet_NaN();
    double probe_train_acc = std::numeric_limits<double>::quiet_NaN();

    nlohmann::json to_json() const;
    static EvaluationReport from_json(const nlohmann::json& j);
    bool operator==(const EvaluationReport&) const = default;
};

/// Neighbor-quality measurements over the fixed probe subset.
struct Diagnostics {
    std::size_t k = 0;
    double purity = std::numeric_limits<double>::quiet_NaN();          // selected neighbors
    double entropy_mean = std::numeric_limits<double>::quiet_NaN();    // CAS weights over cosine top-K
    double inconsistency_mean = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> positional_purity;      // cosine order
    std::vector<double> positional_purity_cas;  // CAS order
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    std::size_t global_step = 0;  // steps completed at epoch end
    double loss_mean = 0.0;
    double lr = 0.0;  // learning rate of the epoch's last step
    Diagnostics diag;
    double knn_acc = std::numeric_limits<double>::quiet_NaN();
    double probe_acc = std::numeric_limits<double>::quiet_NaN();

    nlohmann::json to_json() const;
    static EpochMetrics from_json(const nlohmann::json& j);
};

struct RunManifest {
    int schema_version = kManifestSchemaVersion;
    std::string run_id;
    RunConfig config;
    std::vector<EpochMetrics> epochs;
    EvaluationReport final_eval;
    EvaluationReport baseline_eval;
    std::vector<EvaluationReport> evaluations;  // appended by later evaluate calls
    std::size_t oracle_padded = 0;
    double wall_clock_seconds = 0.0;
    std::string version = kVersionStamp;
    std::string environment;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Per-step loss breakdown summed over the batch, exposed for tests.
struct StepResult {
    std::size_t step = 0;
    double loss = 0.0;        // combined (mean of directions when symmetric)
    double loss_forward = 0.0;   // student on strong view, teacher on weak view
    double loss_mirrored = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN();  // per-batch draw, if any
    std::size_t k_effective = 0;
    bool queried_support = false;
};

/// What one step saw, handed to the step observer after the loss and before
/// any parameter or support-set update. Mirrored fields are null unless the
/// loss is symmetric.
struct StepTrace {
    const StepResult& result;
    const Matrix& prediction;        // student on the strong view
    const Matrix& teacher_z;         // unit teacher embeddings of the weak view
    const Matrix* prediction_mirrored;
    const Matrix* teacher_z_mirrored;
    const std::vector<int>& labels;
    const SupportSet& support;
};

/// Runs the teacher-student loop: augment, encode, retrieve neighbors, mix,
/// weight, loss, backward, SGD, EMA, enqueue.
///
/// All randomness is derived from (seed, global step, row) so a trainer
/// restored from a checkpoint continues bit-identically.
class Trainer {
public:
    explicit Trainer(RunConfig cfg);
    Trainer(RunConfig cfg, Dataset data);

    const RunConfig& config() const noexcept { return cfg_; }
    const Dataset& data() const noexcept { return data_; }
    const EncoderPair& encoders() const noexcept { return pair_; }
    EncoderPair& encoders() noexcept { return pair_; }
    const SupportSet& support() const noexcept { return support_; }
    std::size_t global_step() const noexcept { return step_; }
    std::size_t epochs_done() const noexcept { return step_ / cfg_.steps_per_epoch(); }
    const std::vector<StepResult>& step_log() const noexcept { return steps_; }
    const std::vector<EpochMetrics>& epoch_log() const noexcept { return epochs_; }
    std::size_t oracle_padded() const noexcept { return oracle_padded_; }

    StepResult step();
    EpochMetrics run_epoch();

    /// Remaining epochs plus final evaluation. `on_epoch` sees each epoch as it finishes.
    RunManifest run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

    void set_step_observer(std::function<void(const StepTrace&)> observer) { observer_ = std::move(observer); }

    Diagnostics diagnose() const;
    EvaluationReport evaluate() const;

    nlohmann::json checkpoint() const;
    static Trainer from_checkpoint(const nlohmann::json& j);

private:
    struct DirectionResult {
        double loss = 0.0;
        Matrix grad_prediction;
        std::size_t padded = 0;
    };

    std::vector<std::size_t> batch_indices(std::size_t step) const;
    Matrix augmented(const std::vector<std::size_t>& rows, const AugmentPolicy& policy, std::size_t step,
                     std::uint64_t view) const;
    NeighborSet select(const Vector& z, std::optional<int> label, std::size_t k, std::uint64_t seed,
                       const std::vector<NeighborSet>* cosine_cache, std::size_t row) const;
    DirectionResult direction_loss(const StudentPass& pass, const Matrix& teacher_z,
                                   const std::vector<int>& labels, std::span<const double> batch_lambda,
                                   std::size_t step, std::uint64_t direction) const;

    RunConfig cfg_;
    Dataset data_;
    EncoderPair pair_;
    SgdOptimizer opt_;
    SupportSet support_;
    std::size_t step_ = 0;
    std::size_t oracle_padded_ = 0;
    std::vector<StepResult> steps_;
    std::vector<EpochMetrics> epochs_;
    std::vector<double> epoch_losses_;
    EvaluationReport baseline_;
    bool have_baseline_ = false;
    std::function<void(const StepTrace&)> observer_;
};

/// Builds a trainer, runs it to completion and returns the manifest.
RunManifest train(const RunConfig& cfg);

/// Evaluates the frozen student backbone stored in a checkpoint.
EvaluationReport evaluate_checkpoint(const nlohmann::json& checkpoint);

}  // namespace mnn
