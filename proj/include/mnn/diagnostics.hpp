#pragma once

#include "mnn/support_set.hpp"

#include <span>
#include <string>
#include <vector>

namespace mnn {

struct PurityRecord {
    std::size_t step = 0;
    std::size_t k = 0;
    double purity = 0.0;
    std::string strategy;
    std::vector<double> per_position;
};

/// Fraction of members whose hidden label equals `anchor_label`.
double purity(const NeighborSet& neighbors, int anchor_label);

/// Shannon entropy in nats of the weights renormalized to sum to one.
double weight_entropy(std::span<const double> neighbor_weights);

/// Fraction of positions whose member identity differs between the two orders.
double inconsistency(const NeighborSet& cos_order, const NeighborSet& cas_order);

/// Re-sorts `neighbors` by descending weight (stable, so equal weights keep
/// the cosine order). `neighbor_weights` has one entry per member.
NeighborSet reorder_by_weights(const NeighborSet& neighbors, std::span<const double> neighbor_weights);

struct LabeledNeighbors {
    const NeighborSet* neighbors = nullptr;
    int anchor_label = 0;
};

/// Per-position match rate across a stream of retrieval results.
std::vector<double> positional_purity(std::span<const LabeledNeighbors> records);

}  // namespace mnn
