#include "mnn/vecmath.hpp"

#include <algorithm>
#include <cmath>

namespace mnn {

EmbeddingVector::EmbeddingVector(Vector values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
    if (normalized_ && !is_unit(values_)) {
        throw Error("EmbeddingVector flagged normalized but has norm " + std::to_string(values_.norm()));
    }
}

EmbeddingVector::EmbeddingVector(std::initializer_list<double> values)
    : values_(static_cast<Eigen::Index>(values.size())) {
    std::copy(values.begin(), values.end(), values_.data());
}

EmbeddingBatch::EmbeddingBatch(std::vector<EmbeddingVector> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_) {
        if (r.dim() != rows_.front().dim()) {
            throw Error("EmbeddingBatch rows have differing dimensions");
        }
    }
}

Matrix EmbeddingBatch::to_matrix() const {
    Matrix m(static_cast<Eigen::Index>(rows_.size()), dim());
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = rows_[i].values().transpose();
    }
    return m;
}

Vector l2_normalize(const Vector& v) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw Error("l2_normalize: zero or non-finite vector");
    }
    return v / n;
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
    Vector u = l2_normalize(v.values());
    return EmbeddingVector(std::move(u), true);
}

void l2_normalize_rows(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double n = m.row(i).norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw Error("l2_normalize_rows: row " + std::to_string(i) + " is zero or non-finite");
        }
        m.row(i) /= n;
    }
}

double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw Error("cosine: zero vector");
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine(a.values(), b.values());
}

double sq_dist_unit(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (!is_unit(a.values()) || !is_unit(b.values())) {
        throw Error("sq_dist_unit: inputs must be unit-norm");
    }
    if (a.dim() != b.dim()) {
        throw Error("sq_dist_unit: dimension mismatch");
    }
    const double c = std::clamp(a.values().dot(b.values()), -1.0, 1.0);
    return 2.0 - 2.0 * c;
}

}  // namespace mnn
