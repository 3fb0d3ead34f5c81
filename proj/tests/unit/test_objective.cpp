#include "../common/helpers.hpp"

#include "mnn/objective.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mnn;
using mnn::testing::make_neighbors;
using mnn::testing::random_unit;
using mnn::testing::random_vector;

namespace {

// Independent evaluator: explicit normalize-subtract-square-sum loops.
double naive_loss(const Vector& p1, const Vector& z2, const std::vector<Vector>& mixed,
                  const std::vector<double>& w, bool normalize_mixed = true) {
    auto unit = [](const Vector& v) {
        double n = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) n += v[i] * v[i];
        n = std::sqrt(n);
        Vector out(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[i] / n;
        return out;
    };
    auto sq = [](const Vector& a, const Vector& b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return s;
    };
    const Vector p = unit(p1);
    double total = w[0] * sq(p, unit(z2));
    for (std::size_t i = 0; i < mixed.size(); ++i) {
        total += w[i + 1] * sq(p, normalize_mixed ? unit(mixed[i]) : mixed[i]);
    }
    return total;
}

std::vector<Vector> unit_set(Rng& rng, std::size_t k, std::size_t c) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(random_unit(rng, c));
    return out;
}

}  // namespace

TEST(Weights, WseValues) {
    const auto w = weights_wse(5);
    ASSERT_EQ(w.size(), 6u);
    EXPECT_EQ(w[0], 1.0);
    for (std::size_t i = 1; i < 6; ++i) EXPECT_DOUBLE_EQ(w[i], 0.2);
    EXPECT_EQ(weights_wse(0), std::vector<double>{1.0});
    EXPECT_EQ(weights_wse(1), (std::vector<double>{1.0, 1.0}));
}

TEST(Weights, MseValues) {
    const auto w = weights_mse(5);
    ASSERT_EQ(w.size(), 6u);
    for (double v : w) EXPECT_DOUBLE_EQ(v, 1.0 / 6.0);
    EXPECT_EQ(weights_mse(0), std::vector<double>{1.0});
    for (std::size_t k = 0; k <= 64; ++k) {
        const auto m = weights_mse(k);
        EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Weights, CasEqualLogitsGiveUniform) {
    const Vector q = Vector::Unit(4, 1);
    const auto nb = make_neighbors(q, {q, q, q});
    const auto w = weights_cas(nb, q);
    EXPECT_EQ(w[0], 1.0);
    for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(w[i], 1.0 / 3.0, 1e-15);
}

TEST(Weights, CasScalarSoftmaxOracle) {
    const Vector q = Vector::Unit(2, 0);
    const auto nb = make_neighbors(q, {q, Vector(-q)});
    const auto w = weights_cas(nb, q);
    const double e1 = std::exp(1.0), em1 = std::exp(-1.0);
    EXPECT_NEAR(w[1], e1 / (e1 + em1), 1e-15);
    EXPECT_NEAR(w[2], em1 / (e1 + em1), 1e-15);
    EXPECT_NEAR(w[1], 0.8808, 1e-4);
    EXPECT_NEAR(w[2], 0.1192, 1e-4);
}

TEST(Weights, CasGammaScalesAndSums) {
    Rng rng(1);
    const Vector q = random_unit(rng, 8);
    const auto nb = make_neighbors(q, unit_set(rng, 5, 8));
    const auto w1 = weights_cas(nb, q);
    const std::vector<double> two(5, 2.0);
    const auto w2 = weights_cas(nb, q, two);
    double s = 0.0;
    for (std::size_t i = 1; i < 6; ++i) {
        EXPECT_NEAR(w2[i], 0.5 * w1[i], 1e-15);
        s += w1[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
    const std::vector<double> mixed_gamma{1, 2, 4, 0.5, 1};
    const auto w3 = weights_cas(nb, q, mixed_gamma);
    double s3 = 0.0, expect = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        s3 += w3[i + 1];
        expect += w1[i + 1] / mixed_gamma[i];
    }
    EXPECT_NEAR(s3, expect, 1e-15);
}

TEST(Weights, CasNeedsNeighbors) {
    EXPECT_THROW(weights_cas(NeighborSet{}, Vector(Vector::Unit(2, 0))), Error);
    EXPECT_EQ(make_weights({WeightTag::cas, {}}, NeighborSet{}, Vector()), std::vector<double>{1.0});
}

TEST(Mixing, Endpoints) {
    Rng rng(2);
    const Vector z2 = random_unit(rng, 6);
    const auto nb = make_neighbors(z2, unit_set(rng, 4, 6));
    const auto at0 = mix_neighbors(z2, nb, {MixMode::fixed, 0.0, MixGranularity::per_batch}, 1);
    const auto at1 = mix_neighbors(z2, nb, {MixMode::fixed, 1.0, MixGranularity::per_batch}, 1);
    const auto off = mix_neighbors(z2, nb, {MixMode::off, 0.5, MixGranularity::per_batch}, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(at0.mixed[i], z2);
        EXPECT_EQ(at1.mixed[i], nb.members[i].embedding);
        EXPECT_EQ(off.mixed[i], nb.members[i].embedding);
    }
}

TEST(Mixing, HalfwayConvexCombination) {
    const Vector z2 = Vector::Unit(2, 0);
    const auto nb = make_neighbors(z2, {Vector(Vector::Unit(2, 1))});
    const auto r = mix_neighbors(z2, nb, {MixMode::fixed, 0.5, MixGranularity::per_batch}, 1);
    EXPECT_DOUBLE_EQ(r.mixed[0][0], 0.5);
    EXPECT_DOUBLE_EQ(r.mixed[0][1], 0.5);
    EXPECT_DOUBLE_EQ(r.lambdas[0], 0.5);
}

TEST(Mixing, UniformGranularity) {
    Rng rng(3);
    const Vector z2 = random_unit(rng, 3);
    const auto nb = make_neighbors(z2, unit_set(rng, 5, 3));
    const auto batch = mix_neighbors(z2, nb, {MixMode::uniform, 0.5, MixGranularity::per_batch}, 9);
    for (double l : batch.lambdas) EXPECT_EQ(l, batch.lambdas[0]);
    const auto each = mix_neighbors(z2, nb, {MixMode::uniform, 0.5, MixGranularity::per_neighbor}, 9);
    EXPECT_NE(each.lambdas[0], each.lambdas[1]);
    for (double l : each.lambdas) {
        EXPECT_GE(l, 0.0);
        EXPECT_LT(l, 1.0);
    }
    EXPECT_EQ(mix_neighbors(z2, nb, {MixMode::uniform, 0.5, MixGranularity::per_neighbor}, 9).lambdas,
              each.lambdas);
}

TEST(Mixing, FixedLambdaMustBeInUnitInterval) {
    EXPECT_THROW((MixPolicy{MixMode::fixed, 1.5, MixGranularity::per_batch}.validate()), Error);
}

TEST(Loss, ZeroWhenPredictionMatches) {
    const Vector z = Vector::Unit(3, 2);
    EXPECT_EQ(mnn_loss(z, z, {}, std::vector<double>{1.0}).total, 0.0);
}

TEST(Loss, DegeneratesToTwoMinusTwoCos) {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        const Vector p = random_unit(rng, 16), z = random_unit(rng, 16);
        EXPECT_NEAR(mnn_loss(p, z, {}, std::vector<double>{1.0}).total, 2.0 - 2.0 * cosine(p, z), 1e-12);
    }
}

TEST(Loss, MatchesNaiveSummation) {
    Rng rng(5);
    const Vector p1 = random_vector(rng, 8), z2 = random_unit(rng, 8);
    const auto nb = make_neighbors(z2, unit_set(rng, 5, 8));
    const auto mixed = mix_neighbors(z2, nb, {MixMode::fixed, 0.37, MixGranularity::per_batch}, 1).mixed;
    const auto w = weights_wse(5);
    const auto loss = mnn_loss(p1, z2, mixed, w);
    EXPECT_NEAR(loss.total, naive_loss(p1, z2, mixed, w), 1e-12);
    // breakdown is consistent
    double recomposed = w[0] * loss.positive_term;
    for (std::size_t i = 0; i < 5; ++i) recomposed += w[i + 1] * loss.neighbor_terms[i];
    EXPECT_NEAR(loss.total, recomposed, 1e-12);
    EXPECT_EQ(loss.weights_used, w);
}

TEST(Loss, MseWithoutMixingIsMeanSquaredDistance) {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        const Vector p1 = random_vector(rng, 8), z2 = random_unit(rng, 8);
        const auto members = unit_set(rng, 5, 8);
        const auto nb = make_neighbors(z2, members);
        const auto mixed = mix_neighbors(z2, nb, {MixMode::off, 0.5, MixGranularity::per_batch}, 1).mixed;
        double mean = (p1.normalized() - z2).squaredNorm();
        for (const auto& m : members) mean += (p1.normalized() - m).squaredNorm();
        mean /= 6.0;
        EXPECT_NEAR(mnn_loss(p1, z2, mixed, weights_mse(5)).total, mean, 1e-12);
    }
}

TEST(Loss, PermutationEquivariant) {
    Rng rng(7);
    const Vector p1 = random_vector(rng, 8), z2 = random_unit(rng, 8);
    std::vector<Vector> mixed = unit_set(rng, 5, 8);
    std::vector<double> w{1.0, 0.1, 0.3, 0.2, 0.25, 0.15};
    const double base = mnn_loss(p1, z2, mixed, w).total;
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    std::vector<Vector> pm;
    std::vector<double> pw{w[0]};
    for (auto i : perm) {
        pm.push_back(mixed[i]);
        pw.push_back(w[i + 1]);
    }
    EXPECT_NEAR(mnn_loss(p1, z2, pm, pw).total, base, 1e-15);
}

TEST(Loss, FiniteAndNonNegative) {
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        const Vector p1 = random_vector(rng, 4), z2 = random_unit(rng, 4);
        const auto mixed = unit_set(rng, 3, 4);
        const auto l = mnn_loss(p1, z2, mixed, weights_wse(3)).total;
        EXPECT_TRUE(std::isfinite(l));
        EXPECT_GE(l, 0.0);
    }
}

TEST(Loss, ZeroMixedVectorNamesIndex) {
    const Vector z2 = Vector::Unit(2, 0);
    const auto nb = make_neighbors(z2, {Vector(Vector::Unit(2, 1)), Vector(-z2)});
    const auto mixed = mix_neighbors(z2, nb, {MixMode::fixed, 0.5, MixGranularity::per_batch}, 1).mixed;
    try {
        mnn_loss(z2, z2, mixed, weights_wse(2));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("neighbor 1"), std::string::npos) << e.what();
    }
}

TEST(Loss, WeightCountMustMatch) {
    EXPECT_THROW(mnn_loss(Vector(Vector::Unit(2, 0)), Vector(Vector::Unit(2, 0)), {}, std::vector<double>{1, 1}),
                 Error);
}

TEST(Simplified, Endpoints) {
    Rng rng(9);
    const Vector p = random_unit(rng, 8), z2 = random_unit(rng, 8);
    const auto zs = unit_set(rng, 4, 8);
    EXPECT_NEAR(simplified_loss(p, z2, zs, 0.0), 2.0 * (p - z2).squaredNorm(), 1e-15);
    double unmixed = (p - z2).squaredNorm();
    for (const auto& z : zs) unmixed += (p - z).squaredNorm() / 4.0;
    EXPECT_NEAR(simplified_loss(p, z2, zs, 1.0), unmixed, 1e-15);
    EXPECT_THROW(simplified_loss(p, z2, {}, 0.5), Error);
}

TEST(Simplified, EqualsRawLossMinusCrossTerms) {
    Rng rng(10);
    for (int t = 0; t < 100; ++t) {
        const Vector p = random_unit(rng, 8), z2 = random_unit(rng, 8);
        const auto zs = unit_set(rng, 5, 8);
        const double lambda = uniform01(rng);
        const auto nb = make_neighbors(z2, zs);
        const auto mixed = mix_neighbors(z2, nb, {MixMode::fixed, lambda, MixGranularity::per_batch}, 1).mixed;
        const double full = mnn_loss(p, z2, mixed, weights_wse(5), MixedNormalization::raw).total;
        double cross = 0.0;
        for (const auto& z : zs) cross += 2.0 * lambda * (1.0 - lambda) * (p - z).dot(p - z2) / 5.0;
        EXPECT_NEAR(full - simplified_loss(p, z2, zs, lambda) - cross, 0.0, 1e-9);
        EXPECT_NEAR(full, naive_loss(p, z2, mixed, weights_wse(5), false), 1e-12);
    }
}

TEST(Simplified, ExactTermExpansion) {
    Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
        const Vector p = random_unit(rng, 8), z2 = random_unit(rng, 8), zi = random_unit(rng, 8);
        const double l = uniform01(rng);
        const Vector mixed = l * zi + (1.0 - l) * z2;
        const auto parts = mixture_term_parts(p, z2, zi, l);
        EXPECT_NEAR((p - mixed).squaredNorm() - parts.expanded(l), 0.0, 1e-12);
    }
}

TEST(Gradient, ZeroAtPositiveMinimum) {
    const Vector z = Vector::Unit(4, 1);
    EXPECT_LE(loss_gradient_p1(z, z, {}, std::vector<double>{1.0}).norm(), 1e-15);
}

TEST(Gradient, MatchesCentralDifferences) {
    Rng rng(12);
    for (int t = 0; t < 20; ++t) {
        const Vector p1 = random_vector(rng, 8), z2 = random_unit(rng, 8);
        const auto nb = make_neighbors(z2, unit_set(rng, 5, 8));
        const auto mixed = mix_neighbors(z2, nb, {MixMode::fixed, 0.6, MixGranularity::per_batch}, 1).mixed;
        const auto w = weights_wse(5);
        const Vector g = loss_gradient_p1(p1, z2, mixed, w);
        const double h = 1e-6;
        for (Eigen::Index c = 0; c < 8; ++c) {
            Vector a = p1, b = p1;
            a[c] += h;
            b[c] -= h;
            const double fd = (mnn_loss(a, z2, mixed, w).total - mnn_loss(b, z2, mixed, w).total) / (2 * h);
            EXPECT_LE(std::abs(fd - g[c]), 1e-5 * std::max(1.0, std::abs(g[c])));
        }
    }
}

TEST(Gradient, ScaleInvariance) {
    Rng rng(13);
    const Vector p1 = random_vector(rng, 8), z2 = random_unit(rng, 8);
    const auto mixed = unit_set(rng, 3, 8);
    const auto w = weights_wse(3);
    EXPECT_NEAR(mnn_loss(p1, z2, mixed, w).total, mnn_loss(Vector(2.0 * p1), z2, mixed, w).total, 1e-12);
    EXPECT_NEAR(loss_gradient_p1(p1, z2, mixed, w).dot(p1), 0.0, 1e-9);
}
