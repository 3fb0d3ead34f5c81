#pragma once

#include "mnn/vecmath.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace mnn {

enum class NeighborOrder { cosine_desc, random, oracle, cas_desc };

const char* to_string(NeighborOrder order);

struct NeighborMember {
    Vector embedding;
    double similarity = 0.0;       // cosine to the anchor
    std::size_t support_index = 0;  // FIFO position at query time, 0 = oldest
    std::uint64_t age = 0;          // global insertion counter, unique per entry
    std::optional<int> hidden_label;
};

/// Ordered retrieval result for one anchor.
struct NeighborSet {
    Vector anchor;
    std::vector<NeighborMember> members;
    NeighborOrder order_key = NeighborOrder::cosine_desc;
    /// Number of members that the oracle strategy had to pad with
    /// top-cosine entries because too few same-label entries existed.
    std::size_t padded = 0;

    std::size_t size() const noexcept { return members.size(); }
    bool empty() const noexcept { return members.empty(); }
};

/// Fixed-capacity FIFO of unit-norm teacher embeddings backed by a ring buffer.
///
/// Logical position 0 is the oldest entry. Labels are carried only for
/// diagnostics and the oracle strategy; cosine and random retrieval never
/// read them.
class SupportSet {
public:
    SupportSet(std::size_t capacity, std::size_t dim);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return count_; }
    bool full() const noexcept { return count_ == capacity_; }
    std::uint64_t next_age() const noexcept { return next_age_; }

    /// Enqueues `batch` rows (each normalized on insertion) and evicts the
    /// oldest entries beyond capacity. `labels` is empty or has one entry per row.
    void refresh(const Matrix& batch, std::span<const int> labels = {});
    void refresh(const EmbeddingBatch& batch, std::span<const int> labels = {});

    Eigen::Map<const Vector> embedding(std::size_t position) const;
    std::optional<int> label(std::size_t position) const;
    std::uint64_t age(std::size_t position) const;

    /// Cosine similarities of `z` to every entry, in logical order.
    Vector similarities(const Vector& z) const;

    /// K entries of largest cosine to `z`, descending; ties go to the older entry.
    NeighborSet topk_neighbors(const EmbeddingVector& z, std::size_t k) const;
    NeighborSet topk_neighbors(const Vector& z, std::size_t k) const;

    /// `topk_neighbors` for every row of `queries`, sharing one similarity product.
    std::vector<NeighborSet> topk_neighbors_batch(const Matrix& queries, std::size_t k) const;

    /// K distinct entries drawn uniformly without replacement.
    NeighborSet random_neighbors(std::size_t k, std::uint64_t seed, const Vector* anchor = nullptr) const;

    /// K entries sharing `anchor_label`, drawn uniformly. When fewer than K
    /// exist, takes all of them and pads with the best-cosine remaining
    /// entries; the pad count is reported in `NeighborSet::padded`.
    NeighborSet oracle_neighbors(const Vector& anchor, int anchor_label, std::size_t k,
                                 std::uint64_t seed) const;

    /// Drops all hidden labels.
    void strip_labels();

    nlohmann::json to_json() const;
    static SupportSet from_json(const nlohmann::json& j);

    bool operator==(const SupportSet& other) const;

private:
    std::size_t physical(std::size_t position) const noexcept {
        return (head_ + position) % capacity_;
    }
    NeighborMember member(std::size_t position, const Vector* anchor) const;
    /// `sims_physical` is indexed by physical slot.
    NeighborSet select_topk(const Vector& z, const double* sims_physical, std::size_t k) const;

    std::size_t capacity_;
    std::size_t dim_;
    Matrix storage_;
    std::vector<std::optional<int>> labels_;
    std::vector<std::uint64_t> ages_;
    std::size_t head_ = 0;  // physical slot of the oldest entry
    std::size_t count_ = 0;
    std::uint64_t next_age_ = 0;
};

}  // namespace mnn
