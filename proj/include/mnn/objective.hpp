#pragma once

#include "mnn/random.hpp"
#include "mnn/support_set.hpp"
#include "mnn/vecmath.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mnn {

enum class WeightTag { wse, mse, cas };

/// Which weight generator feeds the loss. `cas_gamma` is empty (meaning all
/// ones) or holds one scaling factor per neighbor.
struct WeightScheme {
    WeightTag tag = WeightTag::wse;
    std::vector<double> cas_gamma;
};

enum class MixMode { off, uniform, fixed };
enum class MixGranularity { per_batch, per_neighbor };

struct MixPolicy {
    MixMode mode = MixMode::uniform;
    double fixed_lambda = 0.5;
    MixGranularity granularity = MixGranularity::per_batch;

    void validate() const;
};

const char* to_string(WeightTag t);
const char* to_string(MixMode m);
const char* to_string(MixGranularity g);
WeightTag parse_weight_tag(const std::string& s);
MixMode parse_mix_mode(const std::string& s);
MixGranularity parse_mix_granularity(const std::string& s);

/// Per-anchor loss with every weighted term. Index 0 of `weights_used` is
/// the positive weight.
struct LossBreakdown {
    double total = 0.0;
    double positive_term = 0.0;
    std::vector<double> neighbor_terms;
    std::vector<double> weights_used;
    std::vector<double> lambda_used;
};

/// [1, 1/K, ..., 1/K]; [1] for K = 0.
std::vector<double> weights_wse(std::size_t k);

/// K+1 entries of 1/(K+1).
std::vector<double> weights_mse(std::size_t k);

/// Entry 0 is 1; entry i is softmax_i(cos(z_i, q1)) / gamma_i. `gamma`
/// empty means all ones.
std::vector<double> weights_cas(const NeighborSet& neighbors, const Vector& q1,
                                std::span<const double> gamma = {});

/// Dispatches on `scheme.tag`. `q1` is read only for CAS.
std::vector<double> make_weights(const WeightScheme& scheme, const NeighborSet& neighbors,
                                 const Vector& q1);

/// Draws the mixing coefficients for K neighbors. For `per_batch` callers
/// draw once per step and pass the same generator state to every row; this
/// helper returns K copies of one draw in that case. Mode `off` yields 1.
std::vector<double> draw_lambdas(const MixPolicy& policy, std::size_t k, Rng& rng);

struct MixResult {
    std::vector<Vector> mixed;
    std::vector<double> lambdas;
};

/// lambda_i * z_i + (1 - lambda_i) * z2 with no re-normalization.
std::vector<Vector> mix_with_lambdas(const Vector& z2, const NeighborSet& neighbors,
                                     std::span<const double> lambdas);

/// Mixes every neighbor with the anchor using coefficients drawn from `policy`.
MixResult mix_neighbors(const Vector& z2, const NeighborSet& neighbors, const MixPolicy& policy,
                        std::uint64_t seed);

enum class MixedNormalization { normalize, raw };

/// sum_i w_i ||p1 - t_i||^2 with t_0 = z2 and t_i = mixed[i-1]. p1 and z2 are
/// always normalized; mixed targets are normalized unless `raw` is requested.
LossBreakdown mnn_loss(const Vector& p1, const Vector& z2, std::span<const Vector> mixed,
                       std::span<const double> weights,
                       MixedNormalization norm = MixedNormalization::normalize);

/// (1 + (1-l)^2) ||p1 - z2||^2 + (l^2 / K) sum ||p1 - z_i||^2.
double simplified_loss(const Vector& p1, const Vector& z2, std::span<const Vector> raw_neighbors,
                       double lambda);

/// Expansion of one mixed neighbor term around unnormalized mixing.
struct MixtureTermParts {
    double neighbor_sq = 0.0;  // ||p1 - z_i||^2
    double anchor_sq = 0.0;    // ||p1 - z2||^2
    double cross = 0.0;        // 2 l (1 - l) (p1 - z_i).(p1 - z2)
    double expanded(double lambda) const {
        return lambda * lambda * neighbor_sq + (1.0 - lambda) * (1.0 - lambda) * anchor_sq + cross;
    }
};
MixtureTermParts mixture_term_parts(const Vector& p1, const Vector& z2, const Vector& zi, double lambda);

/// d loss / d p1 of `mnn_loss`, through the normalization of p1. Targets are
/// treated as constants.
Vector loss_gradient_p1(const Vector& p1, const Vector& z2, std::span<const Vector> mixed,
                        std::span<const double> weights,
                        MixedNormalization norm = MixedNormalization::normalize);

}  // namespace mnn
