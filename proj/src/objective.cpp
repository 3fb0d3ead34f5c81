#include "mnn/objective.hpp"

#include <cmath>

namespace mnn {

void MixPolicy::validate() const {
    if (mode == MixMode::fixed && !(fixed_lambda >= 0.0 && fixed_lambda <= 1.0)) {
        throw Error("MixPolicy: fixed_lambda must lie in [0, 1]");
    }
}

const char* to_string(WeightTag t) {
    switch (t) {
        case WeightTag::wse: return "wse";
        case WeightTag::mse: return "mse";
        case WeightTag::cas: return "cas";
    }
    return "?";
}

const char* to_string(MixMode m) {
    switch (m) {
        case MixMode::off: return "off";
        case MixMode::uniform: return "uniform";
        case MixMode::fixed: return "fixed";
    }
    return "?";
}

const char* to_string(MixGranularity g) {
    return g == MixGranularity::per_batch ? "per_batch" : "per_neighbor";
}

WeightTag parse_weight_tag(const std::string& s) {
    if (s == "wse") return WeightTag::wse;
    if (s == "mse") return WeightTag::mse;
    if (s == "cas") return WeightTag::cas;
    throw Error("unknown weight scheme '" + s + "'");
}

MixMode parse_mix_mode(const std::string& s) {
    if (s == "off") return MixMode::off;
    if (s == "uniform") return MixMode::uniform;
    if (s == "fixed") return MixMode::fixed;
    throw Error("unknown mix mode '" + s + "'");
}

MixGranularity parse_mix_granularity(const std::string& s) {
    if (s == "per_batch") return MixGranularity::per_batch;
    if (s == "per_neighbor") return MixGranularity::per_neighbor;
    throw Error("unknown mix granularity '" + s + "'");
}

std::vector<double> weights_wse(std::size_t k) {
    std::vector<double> w(k + 1, k == 0 ? 1.0 : 1.0 / static_cast<double>(k));
    w[0] = 1.0;
    return w;
}

std::vector<double> weights_mse(std::size_t k) {
    return std::vector<double>(k + 1, 1.0 / static_cast<double>(k + 1));
}

std::vector<double> weights_cas(const NeighborSet& neighbors, const Vector& q1,
                                std::span<const double> gamma) {
    const std::size_t k = neighbors.size();
    if (k == 0) throw Error("weights_cas: undefined without neighbors");
    if (!gamma.empty() && gamma.size() != k) {
        throw Error("weights_cas: gamma has " + std::to_string(gamma.size()) + " entries, expected " +
                    std::to_string(k));
    }
    std::vector<double> logits(k);
    for (std::size_t i = 0; i < k; ++i) logits[i] = cosine(neighbors.members[i].embedding, q1);
    // logits lie in [-1, 1], so exp cannot overflow; no max-shift needed
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    std::vector<double> w(k + 1);
    w[0] = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double g = gamma.empty() ? 1.0 : gamma[i];
        if (!(g > 0.0)) throw Error("weights_cas: gamma must be positive");
        w[i + 1] = std::exp(logits[i]) / denom / g;
    }
    return w;
}

std::vector<double> make_weights(const WeightScheme& scheme, const NeighborSet& neighbors,
                                 const Vector& q1) {
    switch (scheme.tag) {
        case WeightTag::wse: return weights_wse(neighbors.size());
        case WeightTag::mse: return weights_mse(neighbors.size());
        case WeightTag::cas:
            if (neighbors.empty()) return {1.0};
            return weights_cas(neighbors, q1, scheme.cas_gamma);
    }
    throw Error("make_weights: bad tag");
}

std::vector<double> draw_lambdas(const MixPolicy& policy, std::size_t k, Rng& rng) {
    switch (policy.mode) {
        case MixMode::off: return std::vector<double>(k, 1.0);
        case MixMode::fixed: return std::vector<double>(k, policy.fixed_lambda);
        case MixMode::uniform: break;
    }
    if (policy.granularity == MixGranularity::per_batch) {
        return std::vector<double>(k, uniform01(rng));
    }
    std::vector<double> out(k);
    for (auto& l : out) l = uniform01(rng);
    return out;
}

std::vector<Vector> mix_with_lambdas(const Vector& z2, const NeighborSet& neighbors,
                                     std::span<const double> lambdas) {
    if (lambdas.size() != neighbors.size()) {
        throw Error("mix_with_lambdas: need one lambda per neighbor");
    }
    std::vector<Vector> out;
    out.reserve(neighbors.size());
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        const auto& zi = neighbors.members[i].embedding;
        if (zi.size() != z2.size()) throw Error("mix_with_lambdas: dimension mismatch");
        out.emplace_back(lambdas[i] * zi + (1.0 - lambdas[i]) * z2);
    }
    return out;
}

MixResult mix_neighbors(const Vector& z2, const NeighborSet& neighbors, const MixPolicy& policy,
                        std::uint64_t seed) {
    policy.validate();
    Rng rng(seed);
    MixResult r;
    r.lambdas = draw_lambdas(policy, neighbors.size(), rng);
    r.mixed = mix_with_lambdas(z2, neighbors, r.lambdas);
    return r;
}

namespace {

struct NormalizedTargets {
    Vector p;   // normalized p1
    double p_norm;
    std::vector<Vector> targets;  // index 0 is z2
};

NormalizedTargets prepare(const Vector& p1, const Vector& z2, std::span<const Vector> mixed,
                          std::span<const double> weights, MixedNormalization norm) {
    if (weights.size() != mixed.size() + 1) {
        throw Error("mnn_loss: expected " + std::to_string(mixed.size() + 1) + " weights, got " +
                    std::to_string(weights.size()));
    }
    if (p1.size() != z2.size()) throw Error("mnn_loss: p1/z2 dimension mismatch");
    NormalizedTargets t;
    t.p_norm = p1.norm();
    t.p = l2_normalize(p1);
    t.targets.reserve(mixed.size() + 1);
    t.targets.push_back(l2_normalize(z2));
    for (std::size_t i = 0; i < mixed.size(); ++i) {
        if (mixed[i].size() != p1.size()) {
            throw Error("mnn_loss: mixed neighbor " + std::to_string(i) + " has wrong dimension");
        }
        if (norm == MixedNormalization::raw) {
            t.targets.push_back(mixed[i]);
            continue;
        }
        const double n = mixed[i].norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error("mnn_loss: mixed neighbor " + std::to_string(i) + " is a zero vector");
        }
        t.targets.push_back(mixed[i] / n);
    }
    return t;
}

}  // namespace

LossBreakdown mnn_loss(const Vector& p1, const Vector& z2, std::span<const Vector> mixed,
                       std::span<const double> weights, MixedNormalization norm) {
    const auto t = prepare(p1, z2, mixed, weights, norm);
    LossBreakdown out;
    out.weights_used.assign(weights.begin(), weights.end());
    out.positive_term = (t.p - t.targets[0]).squaredNorm();
    out.total = weights[0] * out.positive_term;
    out.neighbor_terms.reserve(mixed.size());
    for (std::size_t i = 1; i < t.targets.size(); ++i) {
        const double term = (t.p - t.targets[i]).squaredNorm();
        out.neighbor_terms.push_back(term);
        out.total += weights[i] * term;
    }
    return out;
}

double simplified_loss(const Vector& p1, const Vector& z2, std::span<const Vector> raw_neighbors,
                       double lambda) {
    const std::size_t k = raw_neighbors.size();
    if (k == 0) throw Error("simplified_loss: K must be at least 1");
    const double anchor = (p1 - z2).squaredNorm();
    double neighbor_sum = 0.0;
    for (const auto& zi : raw_neighbors) neighbor_sum += (p1 - zi).squaredNorm();
    const double one_minus = 1.0 - lambda;
    return (1.0 + one_minus * one_minus) * anchor +
           (lambda * lambda / static_cast<double>(k)) * neighbor_sum;
}

MixtureTermParts mixture_term_parts(const Vector& p1, const Vector& z2, const Vector& zi, double lambda) {
    const Vector dn = p1 - zi;
    const Vector da = p1 - z2;
    MixtureTermParts parts;
    parts.neighbor_sq = dn.squaredNorm();
    parts.anchor_sq = da.squaredNorm();
    parts.cross = 2.0 * lambda * (1.0 - lambda) * dn.dot(da);
    return parts;
}

Vector loss_gradient_p1(const Vector& p1, const Vector& z2, std::span<const Vector> mixed,
                        std::span<const double> weights, MixedNormalization norm) {
    const auto t = prepare(p1, z2, mixed, weights, norm);
    // dL/dp_hat, then project out the radial component: J = (I - p p^T) / |p1|
    Vector g = Vector::Zero(p1.size());
    for (std::size_t i = 0; i < t.targets.size(); ++i) {
        g += (2.0 * weights[i]) * (t.p - t.targets[i]);
    }
    return (g - t.p * t.p.dot(g)) / t.p_norm;
}

}  // namespace mnn
