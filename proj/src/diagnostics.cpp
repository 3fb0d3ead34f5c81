#include "mnn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mnn {

double purity(const NeighborSet& neighbors, int anchor_label) {
    if (neighbors.empty()) throw Error("purity: empty neighbor set");
    std::size_t hits = 0;
    for (const auto& m : neighbors.members) {
        if (!m.hidden_label) throw Error("purity: neighbor without hidden label");
        if (*m.hidden_label == anchor_label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(neighbors.size());
}

double weight_entropy(std::span<const double> w) {
    if (w.empty()) throw Error("weight_entropy: need at least one weight");
    double sum = 0.0;
    for (double x : w) {
        if (x < 0.0 || !std::isfinite(x)) throw Error("weight_entropy: negative or non-finite weight");
        sum += x;
    }
    if (!(sum > 0.0)) throw Error("weight_entropy: all weights are zero");
    double h = 0.0;
    for (double x : w) {
        if (x == 0.0) continue;
        const double q = x / sum;
        h -= q * std::log(q);
    }
    return std::max(h, 0.0);
}

double inconsistency(const NeighborSet& a, const NeighborSet& b) {
    if (a.size() != b.size()) throw Error("inconsistency: orderings have different sizes");
    if (a.empty()) throw Error("inconsistency: empty neighbor sets");
    std::vector<std::uint64_t> ia, ib;
    for (const auto& m : a.members) ia.push_back(m.age);
    for (const auto& m : b.members) ib.push_back(m.age);
    std::size_t differ = 0;
    for (std::size_t k = 0; k < ia.size(); ++k) differ += ia[k] != ib[k] ? 1 : 0;
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    if (ia != ib) throw Error("inconsistency: orderings contain different members");
    return static_cast<double>(differ) / static_cast<double>(a.size());
}

NeighborSet reorder_by_weights(const NeighborSet& neighbors, std::span<const double> w) {
    if (w.size() != neighbors.size()) throw Error("reorder_by_weights: one weight per member required");
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return w[x] > w[y]; });
    NeighborSet out;
    out.anchor = neighbors.anchor;
    out.order_key = NeighborOrder::cas_desc;
    out.padded = neighbors.padded;
    for (auto i : idx) out.members.push_back(neighbors.members[i]);
    return out;
}

std::vector<double> positional_purity(std::span<const LabeledNeighbors> records) {
    if (records.empty()) throw Error("positional_purity: empty stream");
    const std::size_t k = records.front().neighbors->size();
    if (k == 0) throw Error("positional_purity: K must be positive");
    std::vector<double> hits(k, 0.0);
    for (const auto& r : records) {
        if (r.neighbors->size() != k) throw Error("positional_purity: inconsistent K across records");
        for (std::size_t j = 0; j < k; ++j) {
            const auto& l = r.neighbors->members[j].hidden_label;
            if (!l) throw Error("positional_purity: neighbor without hidden label");
            if (*l == r.anchor_label) hits[j] += 1.0;
        }
    }
    for (auto& h : hits) h /= static_cast<double>(records.size());
    return hits;
}

}  // namespace mnn
