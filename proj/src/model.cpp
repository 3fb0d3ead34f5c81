#include "mnn/model.hpp"

#include "mnn/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

namespace mnn {

// ---------------------------------------------------------------------------
// MlpNetwork

MlpNetwork MlpNetwork::create(std::span<const LayerSpec> specs, std::uint64_t seed) {
    if (specs.empty()) throw Error("MlpNetwork: need at least one layer");
    MlpNetwork net;
    Rng rng(seed);
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const auto& s = specs[l];
        if (s.in == 0 || s.out == 0) throw Error("MlpNetwork: zero-width layer");
        if (l > 0 && specs[l - 1].out != s.in) {
            throw Error("MlpNetwork: layer " + std::to_string(l) + " input " + std::to_string(s.in) +
                        " does not chain from previous output " + std::to_string(specs[l - 1].out));
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
        LayerParams p;
        p.weight.resize(static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
        p.bias.resize(static_cast<Eigen::Index>(s.out));
        for (Eigen::Index i = 0; i < p.weight.size(); ++i) {
            p.weight.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
        }
        for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = bound * (2.0 * uniform01(rng) - 1.0);
        net.specs_.push_back(s);
        net.params_.push_back(std::move(p));
    }
    return net;
}

std::size_t MlpNetwork::input_dim() const { return specs_.empty() ? 0 : specs_.front().in; }
std::size_t MlpNetwork::output_dim() const { return specs_.empty() ? 0 : specs_.back().out; }

std::size_t MlpNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.weight.size() + p.bias.size());
    return n;
}

bool MlpNetwork::same_shape(const MlpNetwork& other) const {
    if (specs_.size() != other.specs_.size()) return false;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        const auto& a = specs_[l];
        const auto& b = other.specs_[l];
        if (a.in != b.in || a.out != b.out || a.activation != b.activation ||
            a.normalize_after != b.normalize_after) {
            return false;
        }
    }
    return true;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw Error("matrix json: size mismatch");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

}  // namespace

nlohmann::json params_to_json(const std::vector<LayerParams>& p) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& l : p) {
        out.push_back({{"weight", matrix_to_json(l.weight)},
                       {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
    }
    return out;
}

std::vector<LayerParams> params_from_json(const nlohmann::json& j) {
    std::vector<LayerParams> out;
    for (const auto& l : j) {
        LayerParams p;
        p.weight = matrix_from_json(l.at("weight"));
        const auto b = l.at("bias").get<std::vector<double>>();
        p.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
        out.push_back(std::move(p));
    }
    return out;
}

nlohmann::json MlpNetwork::to_json() const {
    nlohmann::json specs = nlohmann::json::array();
    for (const auto& s : specs_) {
        specs.push_back({{"in", s.in},
                         {"out", s.out},
                         {"activation", s.activation == Activation::relu ? "relu" : "none"},
                         {"normalize_after", s.normalize_after}});
    }
    return {{"layers", specs}, {"params", params_to_json(params_)}};
}

MlpNetwork MlpNetwork::from_json(const nlohmann::json& j) {
    MlpNetwork net;
    for (const auto& s : j.at("layers")) {
        LayerSpec spec;
        spec.in = s.at("in").get<std::size_t>();
        spec.out = s.at("out").get<std::size_t>();
        spec.activation = s.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::none;
        spec.normalize_after = s.at("normalize_after").get<bool>();
        net.specs_.push_back(spec);
    }
    net.params_ = params_from_json(j.at("params"));
    if (net.params_.size() != net.specs_.size()) throw Error("MlpNetwork json: layer count mismatch");
    for (std::size_t l = 0; l < net.specs_.size(); ++l) {
        const auto& p = net.params_[l];
        if (static_cast<std::size_t>(p.weight.rows()) != net.specs_[l].out ||
            static_cast<std::size_t>(p.weight.cols()) != net.specs_[l].in ||
            static_cast<std::size_t>(p.bias.size()) != net.specs_[l].out) {
            throw Error("MlpNetwork json: parameter shape mismatch in layer " + std::to_string(l));
        }
    }
    return net;
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardResult forward(const MlpNetwork& net, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != net.input_dim()) {
        throw Error("forward: input dim " + std::to_string(x.cols()) + " != network input " +
                    std::to_string(net.input_dim()));
    }
    ForwardResult r;
    r.tape.network = &net;
    r.tape.version = net.version();
    r.tape.layers.reserve(net.depth());
    Matrix h = x;
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& spec = net.specs()[l];
        const auto& p = net.params()[l];
        LayerTape lt;
        lt.input = h;
        Matrix a = h * p.weight.transpose();
        a.rowwise() += p.bias.transpose();
        if (spec.activation == Activation::relu) a = a.cwiseMax(0.0);
        lt.activated = a;
        if (spec.normalize_after) {
            if (a.rows() < 2) throw Error("forward: batch normalization needs at least two rows");
            const auto n = static_cast<double>(a.rows());
            lt.inv_std.resize(a.cols());
            for (Eigen::Index c = 0; c < a.cols(); ++c) {
                const double mean = a.col(c).sum() / n;
                a.col(c).array() -= mean;
                const double var = a.col(c).squaredNorm() / n;
                lt.inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
                a.col(c) *= lt.inv_std[c];
            }
        }
        lt.output = a;
        h = std::move(a);
        r.tape.layers.push_back(std::move(lt));
    }
    r.output = std::move(h);
    return r;
}

Vector forward(const MlpNetwork& net, const Vector& x, Tape* tape) {
    Matrix row = x.transpose();
    auto r = forward(net, row);
    if (tape != nullptr) *tape = std::move(r.tape);
    return r.output.row(0).transpose();
}

BackwardResult backward(const MlpNetwork& net, const Tape& tape, const Matrix& grad_output) {
    if (tape.network != &net || tape.version != net.version()) {
        throw Error("backward: tape is stale (recorded against other parameters)");
    }
    if (tape.layers.size() != net.depth()) throw Error("backward: tape depth mismatch");
    const auto& last = tape.layers.back().output;
    if (grad_output.rows() != last.rows() || grad_output.cols() != last.cols()) {
        throw Error("backward: grad_output shape mismatch");
    }
    BackwardResult r;
    r.grads.resize(net.depth());
    Matrix g = grad_output;
    for (std::size_t li = net.depth(); li-- > 0;) {
        const auto& spec = net.specs()[li];
        const auto& p = net.params()[li];
        const auto& lt = tape.layers[li];
        if (spec.normalize_after) {
            const auto n = static_cast<double>(g.rows());
            for (Eigen::Index c = 0; c < g.cols(); ++c) {
                const double mean_g = g.col(c).sum() / n;
                const double mean_gy = g.col(c).dot(lt.output.col(c)) / n;
                g.col(c) = lt.inv_std[c] *
                           (g.col(c).array() - mean_g - lt.output.col(c).array() * mean_gy).matrix();
            }
        }
        if (spec.activation == Activation::relu) {
            g = (lt.activated.array() > 0.0).select(g, 0.0);
        }
        r.grads[li].weight = g.transpose() * lt.input;
        r.grads[li].bias = g.colwise().sum().transpose();
        g = g * p.weight;
    }
    r.grad_input = std::move(g);
    return r;
}

std::vector<LayerParams> zeros_like(const MlpNetwork& net) {
    std::vector<LayerParams> out;
    for (const auto& p : net.params()) {
        out.push_back({Matrix::Zero(p.weight.rows(), p.weight.cols()), Vector::Zero(p.bias.size())});
    }
    return out;
}

// ---------------------------------------------------------------------------
// optimizer / schedule

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, const SgdConfig& cfg) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw Error("sgd_step: shape mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] + grads[i] + cfg.weight_decay * params[i];
        params[i] -= lr * velocity[i];
    }
}

namespace {

template <typename M>
std::span<double> span_of(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename M>
std::span<const double> cspan_of(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

void sgd_step(MlpNetwork& net, const std::vector<LayerParams>& grads, std::vector<LayerParams>& velocity,
              double lr, const SgdConfig& cfg) {
    if (grads.size() != net.depth() || velocity.size() != net.depth()) {
        throw Error("sgd_step: layer count mismatch");
    }
    auto& params = net.mutable_params();
    for (std::size_t l = 0; l < params.size(); ++l) {
        sgd_step(span_of(params[l].weight), cspan_of(grads[l].weight), span_of(velocity[l].weight), lr, cfg);
        sgd_step(span_of(params[l].bias), cspan_of(grads[l].bias), span_of(velocity[l].bias), lr, cfg);
    }
}

void LrSchedule::validate() const {
    if (!(base_lr > 0.0)) throw Error("LrSchedule: base_lr must be positive");
    if (total_epochs == 0 || steps_per_epoch == 0) throw Error("LrSchedule: empty schedule");
    if (warmup_epochs >= total_epochs) throw Error("LrSchedule: warmup_epochs must be < total_epochs");
}

double lr_at(const LrSchedule& s, std::size_t global_step) {
    s.validate();
    const std::size_t total = s.total_steps();
    if (global_step >= total) {
        throw Error("lr_at: step " + std::to_string(global_step) + " outside schedule of " +
                    std::to_string(total) + " steps");
    }
    const std::size_t warmup = s.warmup_epochs * s.steps_per_epoch;
    if (global_step < warmup) {
        return s.base_lr * static_cast<double>(global_step + 1) / static_cast<double>(warmup);
    }
    const double t = static_cast<double>(global_step - warmup) / static_cast<double>(total - warmup);
    return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------
// encoders

EncoderPair EncoderPair::create(const ArchitectureSpec& a, std::uint64_t seed, double momentum) {
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error("EncoderPair: momentum must lie in [0, 1]");
    const LayerSpec backbone[] = {{a.input_dim, a.backbone_hidden, Activation::relu, false},
                                  {a.backbone_hidden, a.backbone_out, Activation::relu, false}};
    const LayerSpec projector[] = {{a.backbone_out, a.projector_hidden, Activation::relu, true},
                                   {a.projector_hidden, a.embedding_dim, Activation::none, false}};
    const LayerSpec predictor[] = {{a.embedding_dim, a.predictor_hidden, Activation::relu, true},
                                   {a.predictor_hidden, a.embedding_dim, Activation::none, false}};
    EncoderPair pair;
    pair.student.backbone = MlpNetwork::create(backbone, derive_seed(seed, {tag(Stream::init), 0}));
    pair.student.projector = MlpNetwork::create(projector, derive_seed(seed, {tag(Stream::init), 1}));
    pair.student.predictor = MlpNetwork::create(predictor, derive_seed(seed, {tag(Stream::init), 2}));
    pair.teacher.backbone = pair.student.backbone;
    pair.teacher.projector = pair.student.projector;
    pair.momentum = momentum;
    return pair;
}

void ema_update(MlpNetwork& teacher, const MlpNetwork& student, double m) {
    if (!teacher.same_shape(student)) throw Error("ema_update: teacher/student shape mismatch");
    auto& t = teacher.mutable_params();
    const auto& s = student.params();
    for (std::size_t l = 0; l < t.size(); ++l) {
        t[l].weight = m * t[l].weight + (1.0 - m) * s[l].weight;
        t[l].bias = m * t[l].bias + (1.0 - m) * s[l].bias;
    }
}

void ema_update(EncoderPair& pair) {
    ema_update(pair.teacher.backbone, pair.student.backbone, pair.momentum);
    ema_update(pair.teacher.projector, pair.student.projector, pair.momentum);
}

StudentPass student_forward(const StudentEncoder& s, const Matrix& x) {
    StudentPass pass;
    auto f = forward(s.backbone, x);
    auto g = forward(s.projector, f.output);
    auto h = forward(s.predictor, g.output);
    pass.features = std::move(f.output);
    pass.projection = std::move(g.output);
    pass.prediction = std::move(h.output);
    pass.backbone_tape = std::move(f.tape);
    pass.projector_tape = std::move(g.tape);
    pass.predictor_tape = std::move(h.tape);
    return pass;
}

StudentGrads zeros_like(const StudentEncoder& s) {
    return {zeros_like(s.backbone), zeros_like(s.projector), zeros_like(s.predictor)};
}

void accumulate(StudentGrads& into, const StudentGrads& g, double scale) {
    auto add = [scale](std::vector<LayerParams>& a, const std::vector<LayerParams>& b) {
        for (std::size_t l = 0; l < a.size(); ++l) {
            a[l].weight += scale * b[l].weight;
            a[l].bias += scale * b[l].bias;
        }
    };
    add(into.backbone, g.backbone);
    add(into.projector, g.projector);
    add(into.predictor, g.predictor);
}

StudentGrads student_backward(const StudentEncoder& s, const StudentPass& pass, const Matrix& grad_prediction) {
    auto h = backward(s.predictor, pass.predictor_tape, grad_prediction);
    auto g = backward(s.projector, pass.projector_tape, h.grad_input);
    auto f = backward(s.backbone, pass.backbone_tape, g.grad_input);
    return {std::move(f.grads), std::move(g.grads), std::move(h.grads)};
}

Matrix teacher_forward(const TeacherEncoder& t, const Matrix& x) {
    return forward(t.projector, forward(t.backbone, x).output).output;
}

Matrix backbone_features(const StudentEncoder& s, const Matrix& x) {
    return forward(s.backbone, x).output;
}

SgdOptimizer::SgdOptimizer(const StudentEncoder& s, SgdConfig cfg) : cfg_(cfg), velocity_(zeros_like(s)) {}

void SgdOptimizer::step(StudentEncoder& s, const StudentGrads& g, double lr) {
    sgd_step(s.backbone, g.backbone, velocity_.backbone, lr, cfg_);
    sgd_step(s.projector, g.projector, velocity_.projector, lr, cfg_);
    sgd_step(s.predictor, g.predictor, velocity_.predictor, lr, cfg_);
}

nlohmann::json SgdOptimizer::to_json() const {
    return {{"momentum", cfg_.momentum},
            {"weight_decay", cfg_.weight_decay},
            {"velocity",
             {{"backbone", params_to_json(velocity_.backbone)},
              {"projector", params_to_json(velocity_.projector)},
              {"predictor", params_to_json(velocity_.predictor)}}}};
}

SgdOptimizer SgdOptimizer::from_json(const nlohmann::json& j) {
    SgdOptimizer o;
    o.cfg_.momentum = j.at("momentum").get<double>();
    o.cfg_.weight_decay = j.at("weight_decay").get<double>();
    const auto& v = j.at("velocity");
    o.velocity_.backbone = params_from_json(v.at("backbone"));
    o.velocity_.projector = params_from_json(v.at("projector"));
    o.velocity_.predictor = params_from_json(v.at("predictor"));
    return o;
}

// ---------------------------------------------------------------------------
// augmentation

AugmentPolicy AugmentPolicy::strong() { return {AugStrength::strong, 0.25, 0.2, 0.8, 1.25}; }
AugmentPolicy AugmentPolicy::weak() { return {AugStrength::weak, 0.05, 0.0, 0.95, 1.05}; }

void AugmentPolicy::validate() const {
    if (!(noise_sigma >= 0.0)) throw Error("AugmentPolicy: noise_sigma must be >= 0");
    if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw Error("AugmentPolicy: dropout_prob must lie in [0, 1)");
    if (!(scale_low > 0.0 && scale_low <= scale_high)) throw Error("AugmentPolicy: bad scale range");
    if (strength == AugStrength::weak && dropout_prob != 0.0) {
        throw Error("AugmentPolicy: weak policy must not drop coordinates");
    }
}

const char* to_string(AugStrength s) { return s == AugStrength::strong ? "strong" : "weak"; }

AugStrength parse_aug_strength(const std::string& s) {
    if (s == "strong" || s == "s") return AugStrength::strong;
    if (s == "weak" || s == "w") return AugStrength::weak;
    throw Error("unknown augmentation strength '" + s + "'");
}

Vector augment(const Vector& x, const AugmentPolicy& policy, std::uint64_t seed) {
    policy.validate();
    Rng rng(seed);
    const double scale = policy.scale_low + (policy.scale_high - policy.scale_low) * uniform01(rng);
    Vector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool keep = uniform01(rng) >= policy.dropout_prob;
        const double noise = policy.noise_sigma * gaussian(rng);
        out[i] = scale * ((keep ? x[i] : 0.0) + noise);
    }
    return out;
}

}  // namespace mnn
