#pragma once

#include "mnn/dataset.hpp"
#include "mnn/evaluation.hpp"
#include "mnn/model.hpp"
#include "mnn/objective.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mnn {

enum class Method { mnn, msf, byol, mnn_cas, mnn_random, mnn_oracle, mnn_no_mix };
enum class Selection { none, cosine, random, oracle };

/// What a method tag turns on. `mix` says whether the run's MixPolicy is
/// applied; when false, neighbors enter the loss unmixed.
struct MethodSpec {
    WeightTag scheme;
    bool mix;
    Selection selection;
};

inline constexpr std::array kAllMethods = {Method::mnn,        Method::msf,        Method::byol,
                                           Method::mnn_cas,    Method::mnn_random, Method::mnn_oracle,
                                           Method::mnn_no_mix};

///   method      scheme  mix  selection
///   mnn         wse     on   cosine
///   msf         mse     off  cosine
///   byol        wse     off  none (K forced to 0)
///   mnn_cas     cas     on   cosine
///   mnn_random  wse     on   random
///   mnn_oracle  wse     on   oracle
///   mnn_no_mix  wse     off  cosine
MethodSpec method_spec(Method m);

const char* to_string(Method m);
const char* to_string(Selection s);
Method parse_method(const std::string& s);

struct EvalConfig {
    std::size_t k_eval = 20;
    ProbeConfig probe;
    std::size_t probe_anchors = 512;  // diagnostics subset per epoch
    bool baseline = true;             // also evaluate the untrained encoder
};

/// Everything needed to reproduce one training run. Field defaults follow the
/// published pretraining table; `reference()` gives the desk-scale setup.
struct RunConfig {
    DatasetSpec dataset;
    Method method = Method::mnn;
    std::size_t k = 5;
    std::size_t support_capacity = 4096;
    std::size_t batch_size = 256;
    std::size_t epochs = 200;
    std::size_t warmup_epochs = 5;
    double momentum = 0.99;        // teacher EMA
    double base_lr = 0.06;         // per 256 samples, scaled by batch_size / 256
    double weight_decay = 5e-4;
    double sgd_momentum = 0.9;
    MixPolicy mix;
    std::vector<double> cas_gamma;
    AugmentPolicy student_aug = AugmentPolicy::strong();
    AugmentPolicy teacher_aug = AugmentPolicy::weak();
    bool symmetric_loss = true;
    ArchitectureSpec arch;  // input_dim is taken from the dataset
    EvalConfig eval;
    std::uint64_t seed = 1;
    std::string run_id;  // empty: derived from method, K and seed
    std::string output_dir;

    /// 10 classes, 5000/1000 samples, batch 128, support 1024, 50 epochs.
    static RunConfig reference();

    std::size_t effective_k() const;
    double effective_base_lr() const { return scaled_base_lr(base_lr, batch_size); }
    std::size_t steps_per_epoch() const { return dataset.n_train / batch_size; }
    LrSchedule schedule() const;
    WeightScheme weight_scheme() const;
    /// The mix policy actually applied (mode off when the method does not mix).
    MixPolicy effective_mix() const;
    std::string resolved_run_id() const;

    void validate() const;
    nlohmann::json to_json() const;
    /// Keys absent from `j` keep their value from `base`.
    static RunConfig from_json(const nlohmann::json& j, RunConfig base);
    static RunConfig from_json(const nlohmann::json& j);
};

}  // namespace mnn
