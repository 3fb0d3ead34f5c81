#pragma once

#include "mnn/vecmath.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mnn {

enum class Activation { none, relu };

struct LayerParams {
    Matrix weight;  // out x in
    Vector bias;    // out
};

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::none;
    bool normalize_after = false;
};

/// Normalization applied after the activation of a layer: every feature is
/// centered and scaled to unit variance over the rows of the batch, with no
/// learned affine and no running statistics.
inline constexpr double kBatchNormEps = 1e-5;

/// Fully connected stack: affine, then activation, then optional normalization.
///
/// Every mutation through `mutable_params()` bumps `version()`, which lets
/// `backward` reject tapes recorded against older parameters.
class MlpNetwork {
public:
    MlpNetwork() = default;

    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpNetwork create(std::span<const LayerSpec> specs, std::uint64_t seed);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;
    std::size_t depth() const noexcept { return specs_.size(); }
    std::uint64_t version() const noexcept { return version_; }

    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }
    const std::vector<LayerParams>& params() const noexcept { return params_; }
    std::vector<LayerParams>& mutable_params() noexcept {
        ++version_;
        return params_;
    }

    nlohmann::json to_json() const;
    static MlpNetwork from_json(const nlohmann::json& j);

    bool same_shape(const MlpNetwork& other) const;

private:
    std::vector<LayerSpec> specs_;
    std::vector<LayerParams> params_;
    std::uint64_t version_ = 0;
};

struct LayerTape {
    Matrix input;
    Matrix activated;   // after activation, before normalization
    Vector inv_std;     // per feature, normalization layers only
    Matrix output;
};

/// Activation record of one batched forward pass.
struct Tape {
    const MlpNetwork* network = nullptr;
    std::uint64_t version = 0;
    std::vector<LayerTape> layers;
};

struct ForwardResult {
    Matrix output;  // N x output_dim
    Tape tape;
};

/// Rows of `x` are samples. Layers with `normalize_after` couple the rows
/// through batch statistics and need at least two of them.
ForwardResult forward(const MlpNetwork& net, const Matrix& x);

/// Single-sample convenience over the batched pass.
Vector forward(const MlpNetwork& net, const Vector& x, Tape* tape = nullptr);

struct BackwardResult {
    std::vector<LayerParams> grads;  // summed over the batch rows
    Matrix grad_input;
};

BackwardResult backward(const MlpNetwork& net, const Tape& tape, const Matrix& grad_output);

std::vector<LayerParams> zeros_like(const MlpNetwork& net);

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, const SgdConfig& cfg);

/// Layer-wise `sgd_step` over a whole network.
void sgd_step(MlpNetwork& net, const std::vector<LayerParams>& grads,
              std::vector<LayerParams>& velocity, double lr, const SgdConfig& cfg);

struct LrSchedule {
    double base_lr = 0.06;
    std::size_t warmup_epochs = 5;
    std::size_t total_epochs = 200;
    std::size_t steps_per_epoch = 1;

    std::size_t total_steps() const noexcept { return total_epochs * steps_per_epoch; }
    void validate() const;
};

/// Linear warmup to base_lr, then half-cosine decay over the remaining steps.
double lr_at(const LrSchedule& schedule, std::size_t global_step);

/// Base learning rate scaled linearly with batch size: per_256 * batch / 256.
inline double scaled_base_lr(double per_256, std::size_t batch_size) {
    return per_256 * static_cast<double>(batch_size) / 256.0;
}

// ---------------------------------------------------------------------------
// Student / teacher encoders

struct ArchitectureSpec {
    std::size_t input_dim = 64;
    std::size_t backbone_hidden = 128;
    std::size_t backbone_out = 64;
    std::size_t projector_hidden = 128;
    std::size_t embedding_dim = 16;
    std::size_t predictor_hidden = 128;
};

struct StudentEncoder {
    MlpNetwork backbone;
    MlpNetwork projector;
    MlpNetwork predictor;
};

/// Backbone and projector only; no predictor on the teacher side.
struct TeacherEncoder {
    MlpNetwork backbone;
    MlpNetwork projector;
};

struct EncoderPair {
    StudentEncoder student;
    TeacherEncoder teacher;
    double momentum = 0.99;

    /// Builds a student from `seed` and copies its backbone/projector into the teacher.
    static EncoderPair create(const ArchitectureSpec& arch, std::uint64_t seed, double momentum);
};

/// teacher <- m * teacher + (1 - m) * student, elementwise.
void ema_update(EncoderPair& pair);
void ema_update(MlpNetwork& teacher, const MlpNetwork& student, double momentum);

struct StudentPass {
    Matrix features;     // backbone output
    Matrix projection;   // q, pre-predictor
    Matrix prediction;   // p
    Tape backbone_tape;
    Tape projector_tape;
    Tape predictor_tape;
};

StudentPass student_forward(const StudentEncoder& s, const Matrix& x);

struct StudentGrads {
    std::vector<LayerParams> backbone;
    std::vector<LayerParams> projector;
    std::vector<LayerParams> predictor;
};

StudentGrads zeros_like(const StudentEncoder& s);
void accumulate(StudentGrads& into, const StudentGrads& g, double scale = 1.0);

/// Gradients of all student parameters given dL/d(prediction).
StudentGrads student_backward(const StudentEncoder& s, const StudentPass& pass,
                              const Matrix& grad_prediction);

/// Teacher projections (unnormalized).
Matrix teacher_forward(const TeacherEncoder& t, const Matrix& x);

/// Student backbone features only.
Matrix backbone_features(const StudentEncoder& s, const Matrix& x);

/// Momentum buffers for every student parameter.
class SgdOptimizer {
public:
    SgdOptimizer() = default;
    SgdOptimizer(const StudentEncoder& s, SgdConfig cfg);

    void step(StudentEncoder& s, const StudentGrads& g, double lr);
    const SgdConfig& config() const noexcept { return cfg_; }
    const StudentGrads& velocity() const noexcept { return velocity_; }

    nlohmann::json to_json() const;
    static SgdOptimizer from_json(const nlohmann::json& j);

private:
    SgdConfig cfg_;
    StudentGrads velocity_;
};

// ---------------------------------------------------------------------------
// Augmentation

enum class AugStrength { strong, weak };

struct AugmentPolicy {
    AugStrength strength = AugStrength::strong;
    double noise_sigma = 0.25;
    double dropout_prob = 0.2;
    double scale_low = 0.8;
    double scale_high = 1.25;

    static AugmentPolicy strong();
    static AugmentPolicy weak();
    void validate() const;
};

const char* to_string(AugStrength s);
AugStrength parse_aug_strength(const std::string& s);

/// scale * (x .* keep_mask + noise), deterministic under `seed`.
Vector augment(const Vector& x, const AugmentPolicy& policy, std::uint64_t seed);

nlohmann::json params_to_json(const std::vector<LayerParams>& p);
std::vector<LayerParams> params_from_json(const nlohmann::json& j);

}  // namespace mnn
