#include "mnn/support_set.hpp"

#include "mnn/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace mnn {

const char* to_string(NeighborOrder order) {
    switch (order) {
        case NeighborOrder::cosine_desc: return "cosine_desc";
        case NeighborOrder::random: return "random";
        case NeighborOrder::oracle: return "oracle";
        case NeighborOrder::cas_desc: return "cas_desc";
    }
    return "?";
}

SupportSet::SupportSet(std::size_t capacity, std::size_t dim)
    : capacity_(capacity),
      dim_(dim),
      storage_(static_cast<Eigen::Index>(capacity), static_cast<Eigen::Index>(dim)),
      labels_(capacity),
      ages_(capacity, 0) {
    if (capacity == 0) throw Error("SupportSet: capacity must be positive");
    if (dim == 0) throw Error("SupportSet: dim must be positive");
    storage_.setZero();
}

void SupportSet::refresh(const Matrix& batch, std::span<const int> labels) {
    if (static_cast<std::size_t>(batch.cols()) != dim_) {
        throw Error("SupportSet::refresh: batch dim " + std::to_string(batch.cols()) +
                    " != set dim " + std::to_string(dim_));
    }
    const auto n = static_cast<std::size_t>(batch.rows());
    if (n > capacity_) throw Error("SupportSet::refresh: batch larger than capacity");
    if (!labels.empty() && labels.size() != n) {
        throw Error("SupportSet::refresh: label count does not match batch size");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double norm = batch.row(row).norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw Error("SupportSet::refresh: row " + std::to_string(i) + " is zero or non-finite");
        }
        std::size_t slot;
        if (count_ < capacity_) {
            slot = physical(count_);
            ++count_;
        } else {
            // dequeue oldest, reuse its slot as the newest
            slot = head_;
            head_ = (head_ + 1) % capacity_;
        }
        storage_.row(static_cast<Eigen::Index>(slot)) = batch.row(row) / norm;
        labels_[slot] = labels.empty() ? std::nullopt : std::optional<int>(labels[i]);
        ages_[slot] = next_age_++;
    }
}

void SupportSet::refresh(const EmbeddingBatch& batch, std::span<const int> labels) {
    if (batch.size() == 0) return;
    refresh(batch.to_matrix(), labels);
}

Eigen::Map<const Vector> SupportSet::embedding(std::size_t position) const {
    if (position >= count_) throw Error("SupportSet: position out of range");
    const double* ptr = storage_.data() + physical(position) * dim_;
    return Eigen::Map<const Vector>(ptr, static_cast<Eigen::Index>(dim_));
}

std::optional<int> SupportSet::label(std::size_t position) const {
    if (position >= count_) throw Error("SupportSet: position out of range");
    return labels_[physical(position)];
}

std::uint64_t SupportSet::age(std::size_t position) const {
    if (position >= count_) throw Error("SupportSet: position out of range");
    return ages_[physical(position)];
}

Vector SupportSet::similarities(const Vector& z) const {
    if (static_cast<std::size_t>(z.size()) != dim_) {
        throw Error("SupportSet: query dim mismatch");
    }
    const double zn = z.norm();
    if (!(zn > 0.0)) throw Error("SupportSet: zero query vector");
    Vector raw = storage_ * (z / zn);
    Vector out(static_cast<Eigen::Index>(count_));
    for (std::size_t p = 0; p < count_; ++p) {
        out[static_cast<Eigen::Index>(p)] =
            std::clamp(raw[static_cast<Eigen::Index>(physical(p))], -1.0, 1.0);
    }
    return out;
}

NeighborMember SupportSet::member(std::size_t position, const Vector* anchor) const {
    NeighborMember m;
    m.embedding = embedding(position);
    m.support_index = position;
    m.age = age(position);
    m.hidden_label = label(position);
    if (anchor != nullptr) m.similarity = cosine(*anchor, m.embedding);
    return m;
}

NeighborSet SupportSet::topk_neighbors(const EmbeddingVector& z, std::size_t k) const {
    return topk_neighbors(z.values(), k);
}

NeighborSet SupportSet::select_topk(const Vector& z, const double* sims_physical, std::size_t k) const {
    NeighborSet out;
    out.anchor = z;
    out.order_key = NeighborOrder::cosine_desc;
    if (k == 0) return out;
    auto sim = [&](std::size_t position) { return std::clamp(sims_physical[physical(position)], -1.0, 1.0); };
    std::vector<std::size_t> idx(count_);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Positions are in age order, so the index tiebreak is the age tiebreak.
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = sim(a);
                          const double sb = sim(b);
                          if (sa != sb) return sa > sb;
                          return a < b;
                      });
    out.members.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        NeighborMember m = member(idx[i], nullptr);
        m.similarity = sim(idx[i]);
        out.members.push_back(std::move(m));
    }
    return out;
}

NeighborSet SupportSet::topk_neighbors(const Vector& z, std::size_t k) const {
    if (k > count_) {
        throw Error("topk_neighbors: K=" + std::to_string(k) + " exceeds support count " +
                    std::to_string(count_));
    }
    if (static_cast<std::size_t>(z.size()) != dim_) throw Error("topk_neighbors: query dim mismatch");
    if (k == 0) return select_topk(z, nullptr, 0);
    const double zn = z.norm();
    if (!(zn > 0.0)) throw Error("topk_neighbors: zero query vector");
    const Vector raw = storage_ * (z / zn);
    return select_topk(z, raw.data(), k);
}

std::vector<NeighborSet> SupportSet::topk_neighbors_batch(const Matrix& queries, std::size_t k) const {
    if (k > count_) {
        throw Error("topk_neighbors: K=" + std::to_string(k) + " exceeds support count " +
                    std::to_string(count_));
    }
    if (static_cast<std::size_t>(queries.cols()) != dim_) throw Error("topk_neighbors: query dim mismatch");
    Matrix q = queries;
    l2_normalize_rows(q);
    const Matrix sims = q * storage_.transpose();
    std::vector<NeighborSet> out;
    out.reserve(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
        out.push_back(select_topk(queries.row(r).transpose(), sims.data() + r * sims.cols(), k));
    }
    return out;
}

NeighborSet SupportSet::random_neighbors(std::size_t k, std::uint64_t seed, const Vector* anchor) const {
    if (k > count_) {
        throw Error("random_neighbors: K=" + std::to_string(k) + " exceeds support count " +
                    std::to_string(count_));
    }
    NeighborSet out;
    out.order_key = NeighborOrder::random;
    if (anchor != nullptr) out.anchor = *anchor;
    Rng rng(seed);
    std::vector<std::size_t> idx(count_);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, count_ - i));
        std::swap(idx[i], idx[j]);
        out.members.push_back(member(idx[i], anchor));
    }
    return out;
}

NeighborSet SupportSet::oracle_neighbors(const Vector& anchor, int anchor_label, std::size_t k,
                                         std::uint64_t seed) const {
    if (k > count_) {
        throw Error("oracle_neighbors: K=" + std::to_string(k) + " exceeds support count " +
                    std::to_string(count_));
    }
    NeighborSet out;
    out.anchor = anchor;
    out.order_key = NeighborOrder::oracle;
    if (k == 0) return out;

    std::vector<std::size_t> same;
    for (std::size_t p = 0; p < count_; ++p) {
        const auto l = labels_[physical(p)];
        if (l && *l == anchor_label) same.push_back(p);
    }
    if (same.size() >= k) {
        Rng rng(seed);
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_index(rng, same.size() - i));
            std::swap(same[i], same[j]);
            out.members.push_back(member(same[i], &anchor));
        }
        return out;
    }

    for (auto p : same) out.members.push_back(member(p, &anchor));
    out.padded = k - same.size();
    const Vector sims = similarities(anchor);
    std::vector<std::size_t> rest;
    for (std::size_t p = 0; p < count_; ++p) {
        if (!std::binary_search(same.begin(), same.end(), p)) rest.push_back(p);
    }
    std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(out.padded), rest.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double sa = sims[static_cast<Eigen::Index>(a)];
                          const double sb = sims[static_cast<Eigen::Index>(b)];
                          if (sa != sb) return sa > sb;
                          return a < b;
                      });
    for (std::size_t i = 0; i < out.padded; ++i) out.members.push_back(member(rest[i], &anchor));
    return out;
}

void SupportSet::strip_labels() {
    std::fill(labels_.begin(), labels_.end(), std::nullopt);
}

nlohmann::json SupportSet::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t p = 0; p < count_; ++p) {
        const auto e = embedding(p);
        nlohmann::json row;
        row["embedding"] = std::vector<double>(e.data(), e.data() + e.size());
        row["age"] = age(p);
        const auto l = label(p);
        row["label"] = l ? nlohmann::json(*l) : nlohmann::json(nullptr);
        entries.push_back(std::move(row));
    }
    return {{"dim", dim_}, {"capacity", capacity_}, {"next_age", next_age_}, {"entries", entries}};
}

SupportSet SupportSet::from_json(const nlohmann::json& j) {
    SupportSet s(j.at("capacity").get<std::size_t>(), j.at("dim").get<std::size_t>());
    const auto& entries = j.at("entries");
    if (entries.size() > s.capacity_) throw Error("SupportSet::from_json: too many entries");
    for (std::size_t p = 0; p < entries.size(); ++p) {
        const auto& row = entries[p];
        const auto values = row.at("embedding").get<std::vector<double>>();
        if (values.size() != s.dim_) throw Error("SupportSet::from_json: entry dim mismatch");
        for (std::size_t c = 0; c < s.dim_; ++c) {
            s.storage_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) = values[c];
        }
        s.ages_[p] = row.at("age").get<std::uint64_t>();
        const auto& l = row.at("label");
        s.labels_[p] = l.is_null() ? std::nullopt : std::optional<int>(l.get<int>());
    }
    s.count_ = entries.size();
    s.head_ = 0;
    s.next_age_ = j.at("next_age").get<std::uint64_t>();
    return s;
}

bool SupportSet::operator==(const SupportSet& other) const {
    if (capacity_ != other.capacity_ || dim_ != other.dim_ || count_ != other.count_ ||
        next_age_ != other.next_age_) {
        return false;
    }
    for (std::size_t p = 0; p < count_; ++p) {
        if (age(p) != other.age(p) || label(p) != other.label(p) ||
            embedding(p) != other.embedding(p)) {
            return false;
        }
    }
    return true;
}

}  // namespace mnn
