#pragma once

// Shared by the unit and acceptance tests: the student-side loss of one
// direction as a plain function of the student parameters, for finite
// difference checks against `student_backward`.

#include "mnn/model.hpp"
#include "mnn/objective.hpp"
#include "mnn/random.hpp"
#include "mnn/support_set.hpp"

#include <functional>
#include <vector>

namespace mnn::testing {

struct ToyProblem {
    StudentEncoder student;
    Matrix x;                  // N x input
    Matrix z;                  // teacher targets, unit rows
    SupportSet support{1, 1};
    std::size_t k = 3;
    double lambda = 0.4;
    WeightTag scheme = WeightTag::wse;
};

/// C = 8 embeddings, small hidden widths, K neighbors from a random support set.
inline ToyProblem make_toy_problem(std::uint64_t seed, std::size_t k = 3, WeightTag scheme = WeightTag::wse) {
    ArchitectureSpec arch;
    arch.input_dim = 6;
    arch.backbone_hidden = 10;
    arch.backbone_out = 7;
    arch.projector_hidden = 9;
    arch.embedding_dim = 8;
    arch.predictor_hidden = 9;
    ToyProblem t;
    t.student = EncoderPair::create(arch, seed, 0.99).student;
    t.k = k;
    t.scheme = scheme;
    Rng rng(derive_seed(seed, {42}));
    const std::size_t n = 5;
    t.x.resize(static_cast<Eigen::Index>(n), 6);
    for (Eigen::Index i = 0; i < t.x.size(); ++i) t.x.data()[i] = gaussian(rng);
    t.z.resize(static_cast<Eigen::Index>(n), 8);
    for (Eigen::Index i = 0; i < t.z.size(); ++i) t.z.data()[i] = gaussian(rng);
    l2_normalize_rows(t.z);
    t.support = SupportSet(20, 8);
    Matrix s(20, 8);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = gaussian(rng);
    t.support.refresh(s);
    t.lambda = 0.2 + 0.6 * uniform01(rng);
    return t;
}

struct ToyLoss {
    double loss = 0.0;
    Matrix grad_prediction;
};

/// Mean over rows of the mixed, weighted loss, with dL/dp per row.
inline ToyLoss toy_loss(const ToyProblem& t, const StudentPass& pass) {
    const auto n = pass.prediction.rows();
    ToyLoss r;
    r.grad_prediction = Matrix::Zero(n, pass.prediction.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector z = t.z.row(i).transpose();
        const Vector p = pass.prediction.row(i).transpose();
        const auto nb = t.support.topk_neighbors(z, t.k);
        const std::vector<double> lambdas(nb.size(), t.lambda);
        const auto mixed = mix_with_lambdas(z, nb, lambdas);
        const auto w = make_weights({t.scheme, {}}, nb, pass.projection.row(i).transpose());
        r.loss += mnn_loss(p, z, mixed, w).total / static_cast<double>(n);
        r.grad_prediction.row(i) = loss_gradient_p1(p, z, mixed, w).transpose() / static_cast<double>(n);
    }
    return r;
}

inline double toy_value(const ToyProblem& t, const StudentEncoder& s) {
    return toy_loss(t, student_forward(s, t.x)).loss;
}

struct GradCheck {
    std::size_t checked = 0;
    double worst_rel = 0.0;
};

/// Compares every student parameter gradient with central differences.
inline GradCheck check_student_gradients(const ToyProblem& t, double h = 1e-6) {
    const StudentPass pass = student_forward(t.student, t.x);
    const ToyLoss base = toy_loss(t, pass);
    const StudentGrads g = student_backward(t.student, pass, base.grad_prediction);

    GradCheck out;
    StudentEncoder probe = t.student;
    auto sweep = [&](MlpNetwork StudentEncoder::*net, const std::vector<LayerParams> StudentGrads::*grads) {
        const std::size_t depth = (probe.*net).depth();
        for (std::size_t l = 0; l < depth; ++l) {
            for (int which = 0; which < 2; ++which) {
                const auto size = which == 0 ? (probe.*net).params()[l].weight.size()
                                             : (probe.*net).params()[l].bias.size();
                for (Eigen::Index i = 0; i < size; ++i) {
                    auto ref = [&]() -> double& {
                        auto& p = (probe.*net).mutable_params()[l];
                        return which == 0 ? p.weight.data()[i] : p.bias.data()[i];
                    };
                    const double orig = ref();
                    ref() = orig + h;
                    const double up = toy_value(t, probe);
                    ref() = orig - h;
                    const double down = toy_value(t, probe);
                    ref() = orig;
                    const double fd = (up - down) / (2.0 * h);
                    const auto& gl = (g.*grads)[l];
                    const double an = which == 0 ? gl.weight.data()[i] : gl.bias.data()[i];
                    const double scale = std::max({std::abs(fd), std::abs(an), 1e-5});
                    out.worst_rel = std::max(out.worst_rel, std::abs(fd - an) / scale);
                    ++out.checked;
                }
            }
        }
    };
    sweep(&StudentEncoder::backbone, &StudentGrads::backbone);
    sweep(&StudentEncoder::projector, &StudentGrads::projector);
    sweep(&StudentEncoder::predictor, &StudentGrads::predictor);
    return out;
}

}  // namespace mnn::testing
