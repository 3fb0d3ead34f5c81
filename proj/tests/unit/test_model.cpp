#include "../common/helpers.hpp"

#include "../common/pipeline.hpp"
#include "mnn/model.hpp"

#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace mnn;
using mnn::testing::random_matrix;

namespace {

MlpNetwork single_layer(std::size_t in, std::size_t out, Activation act = Activation::none) {
    const LayerSpec spec[] = {{in, out, act, false}};
    return MlpNetwork::create(spec, 1);
}

}  // namespace

TEST(Mlp, IdentityLayerPassesInputThrough) {
    auto net = single_layer(4, 4);
    auto& p = net.mutable_params()[0];
    p.weight = Matrix::Identity(4, 4);
    p.bias.setZero();
    const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    EXPECT_EQ(forward(net, x), x);
}

TEST(Mlp, ZeroWeightsReluGiveZero) {
    auto net = single_layer(3, 5, Activation::relu);
    auto& p = net.mutable_params()[0];
    p.weight.setZero();
    p.bias.setZero();
    EXPECT_EQ(forward(net, Vector(Vector::Ones(3))), Vector(Vector::Zero(5)));
}

TEST(Mlp, TwoLayersMatchNaiveMatmul) {
    const LayerSpec spec[] = {{5, 7, Activation::relu, false}, {7, 3, Activation::none, false}};
    const auto net = MlpNetwork::create(spec, 3);
    Rng rng(4);
    const Matrix x = random_matrix(rng, 6, 5);
    const Matrix out = forward(net, x).output;
    for (Eigen::Index r = 0; r < 6; ++r) {
        std::vector<double> h(7);
        for (int o = 0; o < 7; ++o) {
            double s = net.params()[0].bias[o];
            for (int i = 0; i < 5; ++i) s += net.params()[0].weight(o, i) * x(r, i);
            h[o] = s > 0 ? s : 0.0;
        }
        for (int o = 0; o < 3; ++o) {
            double s = net.params()[1].bias[o];
            for (int i = 0; i < 7; ++i) s += net.params()[1].weight(o, i) * h[i];
            EXPECT_NEAR(out(r, o), s, 1e-12);
        }
    }
}

TEST(Mlp, DimensionChecks) {
    const LayerSpec bad[] = {{4, 5, Activation::relu, false}, {6, 2, Activation::none, false}};
    EXPECT_THROW(MlpNetwork::create(bad, 1), Error);
    const auto net = single_layer(3, 2);
    EXPECT_THROW(forward(net, Vector(Vector::Ones(4))), Error);
    EXPECT_EQ(net.parameter_count(), 8u);
}

TEST(Mlp, InitWithinFanInBound) {
    const auto net = single_layer(16, 8);
    EXPECT_LE(net.params()[0].weight.cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(net.params()[0].bias.cwiseAbs().maxCoeff(), 0.25);
}

TEST(Mlp, NormalizedLayerStandardizesEachFeature) {
    const LayerSpec spec[] = {{4, 6, Activation::relu, true}};
    const auto net = MlpNetwork::create(spec, 5);
    Rng rng(6);
    const Matrix out = forward(net, random_matrix(rng, 32, 4)).output;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
        EXPECT_NEAR(out.col(c).mean(), 0.0, 1e-12);
        const double var = out.col(c).squaredNorm() / 32.0;
        if (var > 0.0) EXPECT_NEAR(var, 1.0, 1e-3);
    }
    EXPECT_THROW(forward(net, Vector(Vector::Ones(4))), Error);
}

TEST(Backward, ZeroGradOutGivesZeroGradients) {
    const auto student = mnn::testing::make_toy_problem(1).student;
    Rng rng(2);
    const Matrix x = random_matrix(rng, 4, 6);
    const auto f = forward(student.projector, forward(student.backbone, x).output);
    const auto b = backward(student.projector, f.tape, Matrix::Zero(4, 8));
    for (const auto& g : b.grads) {
        EXPECT_EQ(g.weight.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(g.bias.cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_EQ(b.grad_input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, LinearLayerWeightGradIsOuterProduct) {
    const auto net = single_layer(3, 2);
    Vector x(3);
    x << 1.0, -2.0, 0.5;
    Tape tape;
    forward(net, x, &tape);
    Matrix g(1, 2);
    g << 0.3, -1.1;
    const auto b = backward(net, tape, g);
    const Matrix expect = g.transpose() * x.transpose();
    EXPECT_LE((b.grads[0].weight - expect).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((b.grads[0].bias - g.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, StaleTapeIsRejected) {
    auto net = single_layer(3, 2);
    Tape tape;
    forward(net, Vector(Vector::Ones(3)), &tape);
    net.mutable_params()[0].bias[0] += 1.0;
    EXPECT_THROW(backward(net, tape, Matrix::Ones(1, 2)), Error);
    const auto other = single_layer(3, 2);
    EXPECT_THROW(backward(other, tape, Matrix::Ones(1, 2)), Error);
}

TEST(Backward, FullStudentStackMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1, 2}) {
        const auto t = mnn::testing::make_toy_problem(seed);
        const auto r = mnn::testing::check_student_gradients(t);
        EXPECT_EQ(r.checked, t.student.backbone.parameter_count() + t.student.projector.parameter_count() +
                                 t.student.predictor.parameter_count());
        EXPECT_LE(r.worst_rel, 1e-4) << "seed " << seed;
    }
}

TEST(Backward, NoNeighborsPathMatchesFiniteDifferences) {
    const auto t = mnn::testing::make_toy_problem(3, 0);
    EXPECT_LE(mnn::testing::check_student_gradients(t).worst_rel, 1e-4);
}

TEST(Sgd, ZeroLearningRateLeavesParams) {
    std::vector<double> p{1.0, -2.0}, v{0.0, 0.0};
    const std::vector<double> g{0.5, 0.5};
    sgd_step(p, g, v, 0.0, {0.9, 5e-4});
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Sgd, PlainGradientDescent) {
    std::vector<double> p{1.0, -2.0}, v{0.0, 0.0};
    const std::vector<double> g{0.5, -0.25};
    sgd_step(p, g, v, 0.1, {0.0, 0.0});
    EXPECT_DOUBLE_EQ(p[0], 0.95);
    EXPECT_DOUBLE_EQ(p[1], -1.975);
}

TEST(Sgd, TwoStepsOnScalarQuadratic) {
    // f(x) = a x^2 / 2, gradient a x
    const double a = 3.0, lr = 0.05, mu = 0.9, wd = 0.01, x0 = 2.0;
    std::vector<double> x{x0}, v{0.0};
    for (int s = 0; s < 2; ++s) {
        const std::vector<double> g{a * x[0]};
        sgd_step(x, g, v, lr, {mu, wd});
    }
    const double v1 = (a + wd) * x0;
    const double x1 = x0 - lr * v1;
    const double v2 = mu * v1 + (a + wd) * x1;
    const double x2 = x1 - lr * v2;
    EXPECT_NEAR(x[0], x2, 1e-15);
    EXPECT_NEAR(v[0], v2, 1e-15);
}

TEST(Ema, EndpointsAndGeometricDecay) {
    ArchitectureSpec arch;
    arch.input_dim = 5;
    auto pair = EncoderPair::create(arch, 1, 1.0);
    auto other = EncoderPair::create(arch, 2, 1.0);
    pair.student = other.student;
    const auto frozen = pair.teacher.backbone.params()[0].weight;
    ema_update(pair);
    EXPECT_EQ(pair.teacher.backbone.params()[0].weight, frozen);

    pair.momentum = 0.0;
    ema_update(pair);
    EXPECT_EQ(pair.teacher.backbone.params()[1].weight, pair.student.backbone.params()[1].weight);
    EXPECT_EQ(pair.teacher.projector.params()[0].bias, pair.student.projector.params()[0].bias);

    auto decay = EncoderPair::create(arch, 3, 0.99);
    decay.student = EncoderPair::create(arch, 4, 0.99).student;
    const auto student_before = decay.student.backbone.params()[0].weight;
    const double gap0 = decay.teacher.backbone.params()[0].weight(0, 0) - student_before(0, 0);
    for (int i = 0; i < 100; ++i) ema_update(decay);
    const double gap = decay.teacher.backbone.params()[0].weight(0, 0) - student_before(0, 0);
    EXPECT_NEAR(gap / gap0, std::pow(0.99, 100), 1e-9);
    EXPECT_EQ(decay.student.backbone.params()[0].weight, student_before);
    EXPECT_TRUE(decay.teacher.backbone.same_shape(decay.student.backbone));
}

TEST(Schedule, WarmupAndCosine) {
    const LrSchedule s{0.03, 5, 50, 39};
    const std::size_t warm = 5 * 39, total = 50 * 39;
    EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.03 / warm);
    EXPECT_DOUBLE_EQ(lr_at(s, warm - 1), 0.03);
    EXPECT_DOUBLE_EQ(lr_at(s, warm), 0.03);
    const double steps = static_cast<double>(total - warm);
    EXPECT_NEAR(lr_at(s, total - 1), 0.03 * 0.5 * (1.0 + std::cos(M_PI * (steps - 1) / steps)), 1e-18);
    EXPECT_LE(lr_at(s, total - 1), 1e-3 * 0.03);
    EXPECT_THROW(lr_at(s, total), Error);
    for (std::size_t i = warm + 1; i < total; ++i) EXPECT_LE(lr_at(s, i), lr_at(s, i - 1));
}

TEST(Schedule, BaseLrScalesWithBatch) {
    EXPECT_DOUBLE_EQ(scaled_base_lr(0.06, 256), 0.06);
    EXPECT_DOUBLE_EQ(scaled_base_lr(0.06, 128), 0.03);
}

TEST(Schedule, Validation) {
    EXPECT_THROW((LrSchedule{0.0, 1, 10, 1}.validate()), Error);
    EXPECT_THROW((LrSchedule{0.1, 10, 10, 1}.validate()), Error);
}

TEST(Augment, IdentityPolicy) {
    AugmentPolicy p{AugStrength::weak, 0.0, 0.0, 1.0, 1.0};
    const Vector x = Vector::LinSpaced(7, -3.0, 3.0);
    EXPECT_EQ(augment(x, p, 123), x);
}

TEST(Augment, PolicyInvariants) {
    AugmentPolicy drop_all = AugmentPolicy::strong();
    drop_all.dropout_prob = 1.0;
    EXPECT_THROW(drop_all.validate(), Error);
    AugmentPolicy weak_dropout = AugmentPolicy::weak();
    weak_dropout.dropout_prob = 0.1;
    EXPECT_THROW(weak_dropout.validate(), Error);
    EXPECT_LE(AugmentPolicy::weak().noise_sigma, AugmentPolicy::strong().noise_sigma);
}

TEST(Augment, DeterministicUnderSeed) {
    Rng rng(1);
    const Vector x = mnn::testing::random_vector(rng, 64);
    const auto p = AugmentPolicy::strong();
    EXPECT_EQ(augment(x, p, 77), augment(x, p, 77));
    EXPECT_NE(augment(x, p, 77), augment(x, p, 78));
}

TEST(Augment, TeacherViewsConvergeAsNoiseShrinks) {
    ArchitectureSpec arch;
    arch.input_dim = 32;
    const auto pair = EncoderPair::create(arch, 5, 0.99);
    Rng rng(6);
    const Matrix x = random_matrix(rng, 64, 32);
    double previous = -2.0;
    for (double sigma : {0.1, 0.05, 0.01}) {
        AugmentPolicy p = AugmentPolicy::weak();
        p.noise_sigma = sigma;
        p.scale_low = p.scale_high = 1.0;
        Matrix a(64, 32), b(64, 32);
        for (Eigen::Index r = 0; r < 64; ++r) {
            const Vector xr = x.row(r).transpose();
            a.row(r) = augment(xr, p, derive_seed(1, {std::uint64_t(r)})).transpose();
            b.row(r) = augment(xr, p, derive_seed(2, {std::uint64_t(r)})).transpose();
        }
        // one batch so the normalization statistics are shared
        Matrix both(128, 32);
        both << a, b;
        const Matrix z = teacher_forward(pair.teacher, both);
        double mean_cos = 0.0;
        for (Eigen::Index r = 0; r < 64; ++r) {
            mean_cos += cosine(Vector(z.row(r).transpose()), Vector(z.row(r + 64).transpose())) / 64.0;
        }
        EXPECT_GT(mean_cos, previous) << "sigma " << sigma;
        previous = mean_cos;
    }
    EXPECT_GT(previous, 0.99);
}

TEST(Serialization, NetworkAndOptimizerRoundTrip) {
    const auto t = mnn::testing::make_toy_problem(4);
    const auto back = MlpNetwork::from_json(nlohmann::json::parse(t.student.projector.to_json().dump()));
    ASSERT_TRUE(back.same_shape(t.student.projector));
    for (std::size_t l = 0; l < back.depth(); ++l) {
        EXPECT_EQ(back.params()[l].weight, t.student.projector.params()[l].weight);
        EXPECT_EQ(back.params()[l].bias, t.student.projector.params()[l].bias);
    }
}
