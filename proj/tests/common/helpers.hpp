#pragma once

#include "mnn/random.hpp"
#include "mnn/support_set.hpp"
#include "mnn/vecmath.hpp"

#include <vector>

namespace mnn::testing {

inline Vector random_vector(Rng& rng, std::size_t dim) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gaussian(rng);
    return v;
}

inline Vector random_unit(Rng& rng, std::size_t dim) {
    Vector v = random_vector(rng, dim);
    return v / v.norm();
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng);
    return m;
}

/// Builds a neighbor set straight from vectors, without a support set.
inline NeighborSet make_neighbors(const Vector& anchor, const std::vector<Vector>& members) {
    NeighborSet nb;
    nb.anchor = anchor;
    for (std::size_t i = 0; i < members.size(); ++i) {
        NeighborMember m;
        m.embedding = members[i];
        m.support_index = i;
        m.age = i;
        m.similarity = cosine(anchor, members[i]);
        nb.members.push_back(m);
    }
    return nb;
}

}  // namespace mnn::testing
