#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tolerance used when checking that a vector claims unit norm.
inline constexpr double kUnitNormTolerance = 1e-9;

/// A feature vector in projection space. `normalized()` is a checked claim:
/// the constructor verifies it against the actual norm.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(Vector values, bool normalized = false);
    EmbeddingVector(std::initializer_list<double> values);

    const Vector& values() const noexcept { return values_; }
    bool normalized() const noexcept { return normalized_; }
    Eigen::Index dim() const noexcept { return values_.size(); }
    double operator[](Eigen::Index i) const { return values_[i]; }

private:
    Vector values_;
    bool normalized_ = false;
};

/// Rows share one dimension.
class EmbeddingBatch {
public:
    EmbeddingBatch() = default;
    explicit EmbeddingBatch(std::vector<EmbeddingVector> rows);

    const std::vector<EmbeddingVector>& rows() const noexcept { return rows_; }
    std::size_t size() const noexcept { return rows_.size(); }
    Eigen::Index dim() const noexcept { return rows_.empty() ? 0 : rows_.front().dim(); }
    const EmbeddingVector& operator[](std::size_t i) const { return rows_[i]; }

    /// Stacks rows into an N x C matrix.
    Matrix to_matrix() const;

private:
    std::vector<EmbeddingVector> rows_;
};

/// Throws if `v` is the zero vector or contains non-finite values.
EmbeddingVector l2_normalize(const EmbeddingVector& v);
Vector l2_normalize(const Vector& v);

/// Normalizes every row of `m` in place; throws naming the first zero row.
void l2_normalize_rows(Matrix& m);

/// Clamped to [-1, 1].
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine(const Vector& a, const Vector& b);

/// 2 - 2 cos(a, b); both inputs must be unit-norm.
double sq_dist_unit(const EmbeddingVector& a, const EmbeddingVector& b);

inline bool is_unit(const Vector& v, double tol = kUnitNormTolerance) {
    return std::abs(v.norm() - 1.0) <= tol;
}

}  // namespace mnn
