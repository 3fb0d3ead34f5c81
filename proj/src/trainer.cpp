#include "mnn/trainer.hpp"

#include "mnn/diagnostics.hpp"
#include "mnn/evaluation.hpp"
#include "mnn/objective.hpp"
#include "mnn/random.hpp"
#include "mnn/util.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace mnn {

namespace {

constexpr std::uint64_t kStrongView = 1;
constexpr std::uint64_t kWeakView = 2;

double nan_or(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.at(key).get<double>();
}

nlohmann::json num(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string environment_stamp() {
    std::string s = "compiler=";
#if defined(__clang__)
    s += "clang " __clang_version__;
#elif defined(__GNUC__)
    s += "gcc " __VERSION__;
#else
    s += "unknown";
#endif
    s += "; eigen=" + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// records

nlohmann::json EvaluationReport::to_json() const {
    return {{"k_eval", k_eval}, {"knn_acc", num(knn_acc)}, {"probe_acc", num(probe_acc)},
            {"probe_train_acc", num(probe_train_acc)}};
}

EvaluationReport EvaluationReport::from_json(const nlohmann::json& j) {
    EvaluationReport r;
    r.k_eval = j.value("k_eval", std::size_t{0});
    r.knn_acc = nan_or(j, "knn_acc");
    r.probe_acc = nan_or(j, "probe_acc");
    r.probe_train_acc = nan_or(j, "probe_train_acc");
    return r;
}

nlohmann::json EpochMetrics::to_json() const {
    nlohmann::json pp = nlohmann::json::array();
    for (double v : diag.positional_purity) pp.push_back(num(v));
    nlohmann::json ppc = nlohmann::json::array();
    for (double v : diag.positional_purity_cas) ppc.push_back(num(v));
    return {{"epoch", epoch},
            {"global_step", global_step},
            {"loss_mean", num(loss_mean)},
            {"lr", num(lr)},
            {"k", diag.k},
            {"purity", num(diag.purity)},
            {"entropy_mean", num(diag.entropy_mean)},
            {"inconsistency_mean", num(diag.inconsistency_mean)},
            {"positional_purity", pp},
            {"positional_purity_cas", ppc},
            {"knn_acc", num(knn_acc)},
            {"probe_acc", num(probe_acc)}};
}

EpochMetrics EpochMetrics::from_json(const nlohmann::json& j) {
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.global_step = j.value("global_step", std::size_t{0});
    m.loss_mean = nan_or(j, "loss_mean");
    m.lr = nan_or(j, "lr");
    m.diag.k = j.value("k", std::size_t{0});
    m.diag.purity = nan_or(j, "purity");
    m.diag.entropy_mean = nan_or(j, "entropy_mean");
    m.diag.inconsistency_mean = nan_or(j, "inconsistency_mean");
    for (const auto& v : j.value("positional_purity", nlohmann::json::array())) {
        m.diag.positional_purity.push_back(v.is_null() ? std::nan("") : v.get<double>());
    }
    for (const auto& v : j.value("positional_purity_cas", nlohmann::json::array())) {
        m.diag.positional_purity_cas.push_back(v.is_null() ? std::nan("") : v.get<double>());
    }
    m.knn_acc = nan_or(j, "knn_acc");
    m.probe_acc = nan_or(j, "probe_acc");
    return m;
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json ep = nlohmann::json::array();
    for (const auto& e : epochs) ep.push_back(e.to_json());
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : evaluations) evals.push_back(e.to_json());
    return {{"schema_version", schema_version},
            {"run_id", run_id},
            {"config", config.to_json()},
            {"epochs", ep},
            {"final_eval", final_eval.to_json()},
            {"baseline_eval", baseline_eval.to_json()},
            {"evaluations", evals},
            {"oracle_padded", oracle_padded},
            {"wall_clock_seconds", wall_clock_seconds},
            {"version", version},
            {"environment", environment}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion) {
        throw Error("manifest schema version " + std::to_string(m.schema_version) + " is not supported");
    }
    m.run_id = j.at("run_id").get<std::string>();
    m.config = RunConfig::from_json(j.at("config"), RunConfig{});
    for (const auto& e : j.at("epochs")) m.epochs.push_back(EpochMetrics::from_json(e));
    m.final_eval = EvaluationReport::from_json(j.at("final_eval"));
    if (j.contains("baseline_eval")) m.baseline_eval = EvaluationReport::from_json(j.at("baseline_eval"));
    for (const auto& e : j.value("evaluations", nlohmann::json::array())) {
        m.evaluations.push_back(EvaluationReport::from_json(e));
    }
    m.oracle_padded = j.value("oracle_padded", std::size_t{0});
    m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    m.version = j.value("version", std::string{});
    m.environment = j.value("environment", std::string{});
    return m;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(RunConfig cfg) : Trainer(cfg, generate_dataset(cfg.dataset)) {}

Trainer::Trainer(RunConfig cfg, Dataset data)
    : cfg_(std::move(cfg)), data_(std::move(data)), support_(cfg_.support_capacity, cfg_.arch.embedding_dim) {
    cfg_.arch.input_dim = cfg_.dataset.ambient_dim;
    cfg_.validate();
    if (data_.train.size() != cfg_.dataset.n_train ||
        static_cast<std::size_t>(data_.train.inputs.cols()) != cfg_.dataset.ambient_dim) {
        throw Error("Trainer: dataset does not match config.dataset");
    }
    pair_ = EncoderPair::create(cfg_.arch, cfg_.seed, cfg_.momentum);
    opt_ = SgdOptimizer(pair_.student, {cfg_.sgd_momentum, cfg_.weight_decay});
}

std::vector<std::size_t> Trainer::batch_indices(std::size_t step) const {
    const std::size_t spe = cfg_.steps_per_epoch();
    const std::size_t epoch = step / spe;
    const std::size_t b = step % spe;
    std::vector<std::size_t> perm(cfg_.dataset.n_train);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(cfg_.seed, {tag(Stream::shuffle), epoch}));
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(uniform_index(rng, i))]);
    }
    return {perm.begin() + static_cast<std::ptrdiff_t>(b * cfg_.batch_size),
            perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg_.batch_size)};
}

Matrix Trainer::augmented(const std::vector<std::size_t>& rows, const AugmentPolicy& policy, std::size_t step,
                          std::uint64_t view) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), data_.train.inputs.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Vector x = data_.train.inputs.row(static_cast<Eigen::Index>(rows[r])).transpose();
        out.row(static_cast<Eigen::Index>(r)) =
            augment(x, policy, derive_seed(cfg_.seed, {tag(Stream::augment), step, r, view})).transpose();
    }
    return out;
}

NeighborSet Trainer::select(const Vector& z, std::optional<int> label, std::size_t k, std::uint64_t seed,
                            const std::vector<NeighborSet>* cosine_cache, std::size_t row) const {
    switch (method_spec(cfg_.method).selection) {
        case Selection::none: return NeighborSet{z, {}, NeighborOrder::cosine_desc, 0};
        case Selection::cosine:
            if (cosine_cache != nullptr) return (*cosine_cache)[row];
            return support_.topk_neighbors(z, k);
        case Selection::random: return support_.random_neighbors(k, seed, &z);
        case Selection::oracle:
            if (!label) throw Error("oracle selection needs labels");
            return support_.oracle_neighbors(z, *label, k, seed);
    }
    throw Error("select: bad selection");
}

Trainer::DirectionResult Trainer::direction_loss(const StudentPass& pass, const Matrix& teacher_z,
                                                 const std::vector<int>& labels,
                                                 std::span<const double> batch_lambda, std::size_t step,
                                                 std::uint64_t direction) const {
    const auto n = static_cast<std::size_t>(teacher_z.rows());
    const std::size_t k = std::min(cfg_.effective_k(), support_.size());
    const auto spec = method_spec(cfg_.method);
    const WeightScheme scheme = cfg_.weight_scheme();
    const MixPolicy mix = cfg_.effective_mix();

    std::vector<NeighborSet> cached;
    if (k > 0 && spec.selection == Selection::cosine) cached = support_.topk_neighbors_batch(teacher_z, k);

    DirectionResult r;
    r.grad_prediction = Matrix::Zero(pass.prediction.rows(), pass.prediction.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const Vector z = teacher_z.row(row).transpose();
        const Vector p = pass.prediction.row(row).transpose();
        NeighborSet nb;
        if (k > 0) {
            nb = select(z, labels[i], k, derive_seed(cfg_.seed, {tag(Stream::select), step, direction, i}),
                        cached.empty() ? nullptr : &cached, i);
            r.padded += nb.padded;
        }
        std::vector<double> weights;
        if (scheme.tag == WeightTag::cas && !nb.empty()) {
            const Vector q = pass.projection.row(row).transpose();
            const std::span<const double> gamma =
                scheme.cas_gamma.size() == k ? std::span<const double>(scheme.cas_gamma) : std::span<const double>{};
            weights = weights_cas(nb, q, gamma);
        } else {
            weights = make_weights(scheme, nb, Vector());
        }

        std::vector<double> lambdas;
        if (mix.mode == MixMode::uniform && mix.granularity == MixGranularity::per_batch) {
            lambdas.assign(nb.size(), batch_lambda.empty() ? 1.0 : batch_lambda[0]);
        } else {
            Rng rng(derive_seed(cfg_.seed, {tag(Stream::lambda), step, direction, i}));
            lambdas = draw_lambdas(mix, nb.size(), rng);
        }
        const auto mixed = mix_with_lambdas(z, nb, lambdas);

        const auto loss = mnn_loss(p, z, mixed, weights);
        r.loss += loss.total;
        r.grad_prediction.row(row) = loss_gradient_p1(p, z, mixed, weights).transpose();
    }
    r.loss /= static_cast<double>(n);
    r.grad_prediction /= static_cast<double>(n);
    return r;
}

StepResult Trainer::step() {
    const LrSchedule sched = cfg_.schedule();
    if (step_ >= sched.total_steps()) throw Error("Trainer::step: schedule already complete");

    if (cfg_.eval.baseline && !have_baseline_ && step_ == 0) {
        baseline_ = evaluate();
        have_baseline_ = true;
    }
    auto require_finite = [this](const Matrix& m, const char* what) {
        if (!m.allFinite()) throw TrainingError(step_, std::string("non-finite ") + what);
    };

    StepResult res;
    res.step = step_;
    res.k_effective = std::min(cfg_.effective_k(), support_.size());
    res.queried_support = res.k_effective > 0;

    const auto rows = batch_indices(step_);
    std::vector<int> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = data_.train.labels[rows[i]];

    const Matrix x_strong = augmented(rows, cfg_.student_aug, step_, kStrongView);
    const Matrix x_weak = augmented(rows, cfg_.teacher_aug, step_, kWeakView);

    std::vector<double> batch_lambda;
    const MixPolicy mix = cfg_.effective_mix();
    if (mix.mode == MixMode::uniform && mix.granularity == MixGranularity::per_batch) {
        Rng rng(derive_seed(cfg_.seed, {tag(Stream::lambda), step_}));
        batch_lambda.push_back(uniform01(rng));
        res.lambda = batch_lambda[0];
    } else if (mix.mode == MixMode::fixed) {
        res.lambda = mix.fixed_lambda;
    }

    Matrix z_weak = teacher_forward(pair_.teacher, x_weak);
    require_finite(z_weak, "teacher embeddings");
    l2_normalize_rows(z_weak);
    const StudentPass pass_fwd = student_forward(pair_.student, x_strong);
    require_finite(pass_fwd.prediction, "student predictions");
    auto fwd = direction_loss(pass_fwd, z_weak, labels, batch_lambda, step_, 0);
    res.loss_forward = fwd.loss;
    std::size_t padded = fwd.padded;

    StudentGrads grads;
    Matrix z_strong;
    StudentPass pass_mir;
    if (cfg_.symmetric_loss) {
        z_strong = teacher_forward(pair_.teacher, x_strong);
        require_finite(z_strong, "teacher embeddings");
        l2_normalize_rows(z_strong);
        pass_mir = student_forward(pair_.student, x_weak);
        require_finite(pass_mir.prediction, "student predictions");
        auto mir = direction_loss(pass_mir, z_strong, labels, batch_lambda, step_, 1);
        res.loss_mirrored = mir.loss;
        res.loss = 0.5 * (fwd.loss + mir.loss);
        padded += mir.padded;
        fwd.grad_prediction *= 0.5;
        mir.grad_prediction *= 0.5;
        grads = student_backward(pair_.student, pass_fwd, fwd.grad_prediction);
        accumulate(grads, student_backward(pair_.student, pass_mir, mir.grad_prediction));
    } else {
        res.loss = fwd.loss;
        grads = student_backward(pair_.student, pass_fwd, fwd.grad_prediction);
    }
    if (!std::isfinite(res.loss)) throw TrainingError(step_, "non-finite loss " + format_double(res.loss));

    res.lr = lr_at(sched, step_);
    if (observer_) {
        const bool sym = cfg_.symmetric_loss;
        observer_(StepTrace{res, pass_fwd.prediction, z_weak, sym ? &pass_mir.prediction : nullptr,
                            sym ? &z_strong : nullptr, labels, support_});
    }
    opt_.step(pair_.student, grads, res.lr);
    ema_update(pair_);
    support_.refresh(z_weak, labels);

    oracle_padded_ += padded;
    ++step_;
    steps_.push_back(res);
    epoch_losses_.push_back(res.loss);
    return res;
}

EpochMetrics Trainer::run_epoch() {
    const std::size_t spe = cfg_.steps_per_epoch();
    if (step_ >= cfg_.schedule().total_steps()) throw Error("Trainer::run_epoch: schedule already complete");
    double last_lr = 0.0;
    do {
        last_lr = step().lr;
    } while (step_ % spe != 0);

    EpochMetrics m;
    m.epoch = step_ / spe;
    m.global_step = step_;
    m.loss_mean = std::accumulate(epoch_losses_.begin(), epoch_losses_.end(), 0.0) /
                  static_cast<double>(epoch_losses_.size());
    m.lr = last_lr;
    m.diag = diagnose();
    epoch_losses_.clear();
    epochs_.push_back(m);
    return m;
}

Diagnostics Trainer::diagnose() const {
    Diagnostics d;
    d.k = cfg_.effective_k();
    if (d.k == 0 || support_.size() < d.k) return d;

    const std::size_t n = std::min(cfg_.eval.probe_anchors, cfg_.dataset.n_train);
    std::vector<std::size_t> anchors(cfg_.dataset.n_train);
    std::iota(anchors.begin(), anchors.end(), std::size_t{0});
    Rng rng(derive_seed(cfg_.seed, {tag(Stream::probe)}));
    for (std::size_t i = 0; i < n; ++i) {
        std::swap(anchors[i], anchors[i + static_cast<std::size_t>(uniform_index(rng, anchors.size() - i))]);
    }
    anchors.resize(n);

    Matrix x_weak(static_cast<Eigen::Index>(n), data_.train.inputs.cols());
    Matrix x_strong(static_cast<Eigen::Index>(n), data_.train.inputs.cols());
    for (std::size_t i = 0; i < n; ++i) {
        const Vector x = data_.train.inputs.row(static_cast<Eigen::Index>(anchors[i])).transpose();
        const auto row = static_cast<Eigen::Index>(i);
        x_weak.row(row) = augment(x, cfg_.teacher_aug,
                                  derive_seed(cfg_.seed, {tag(Stream::probe), step_, i, kWeakView}))
                              .transpose();
        x_strong.row(row) = augment(x, cfg_.student_aug,
                                    derive_seed(cfg_.seed, {tag(Stream::probe), step_, i, kStrongView}))
                                .transpose();
    }
    const Matrix z = teacher_forward(pair_.teacher, x_weak);
    const Matrix q = student_forward(pair_.student, x_strong).projection;
    const auto cos_sets = support_.topk_neighbors_batch(z, d.k);
    const std::span<const double> gamma =
        cfg_.cas_gamma.size() == d.k ? std::span<const double>(cfg_.cas_gamma) : std::span<const double>{};

    std::vector<NeighborSet> cas_sets;
    cas_sets.reserve(n);
    double purity_sum = 0.0, entropy_sum = 0.0, inconsistency_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const int label = data_.train.labels[anchors[i]];
        const Vector zi = z.row(row).transpose();
        const NeighborSet selected =
            select(zi, label, d.k, derive_seed(cfg_.seed, {tag(Stream::probe), step_, i, 3}), &cos_sets, i);
        purity_sum += purity(selected, label);

        const auto w = weights_cas(cos_sets[i], q.row(row).transpose(), gamma);
        const std::span<const double> neighbor_w(w.data() + 1, w.size() - 1);
        entropy_sum += weight_entropy(neighbor_w);
        cas_sets.push_back(reorder_by_weights(cos_sets[i], neighbor_w));
        inconsistency_sum += inconsistency(cos_sets[i], cas_sets.back());
    }
    std::vector<LabeledNeighbors> cos_records, cas_records;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = data_.train.labels[anchors[i]];
        cos_records.push_back({&cos_sets[i], label});
        cas_records.push_back({&cas_sets[i], label});
    }
    const auto denom = static_cast<double>(n);
    d.purity = purity_sum / denom;
    d.entropy_mean = entropy_sum / denom;
    d.inconsistency_mean = inconsistency_sum / denom;
    d.positional_purity = positional_purity(cos_records);
    d.positional_purity_cas = positional_purity(cas_records);
    return d;
}

EvaluationReport Trainer::evaluate() const {
    EvaluationReport r;
    r.k_eval = cfg_.eval.k_eval;
    const FeatureBank train(backbone_features(pair_.student, data_.train.inputs), data_.train.labels);
    const FeatureBank test(backbone_features(pair_.student, data_.test.inputs), data_.test.labels);
    r.knn_acc = knn_accuracy(train, test, cfg_.eval.k_eval);
    const auto probe = linear_probe(train, test, cfg_.eval.probe);
    r.probe_acc = probe.test_accuracy;
    r.probe_train_acc = probe.train_accuracy;
    return r;
}

RunManifest Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t total = cfg_.schedule().total_steps();
    while (step_ < total) {
        const EpochMetrics e = run_epoch();
        if (on_epoch) on_epoch(e);
    }

    RunManifest m;
    m.run_id = cfg_.resolved_run_id();
    m.config = cfg_;
    m.final_eval = evaluate();
    if (!epochs_.empty()) {
        epochs_.back().knn_acc = m.final_eval.knn_acc;
        epochs_.back().probe_acc = m.final_eval.probe_acc;
    }
    m.epochs = epochs_;
    m.baseline_eval = baseline_;
    m.oracle_padded = oracle_padded_;
    m.environment = environment_stamp();
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
}

nlohmann::json Trainer::checkpoint() const {
    nlohmann::json ep = nlohmann::json::array();
    for (const auto& e : epochs_) ep.push_back(e.to_json());
    return {{"schema_version", kCheckpointSchemaVersion},
            {"version", kVersionStamp},
            {"config", cfg_.to_json()},
            {"global_step", step_},
            {"student",
             {{"backbone", pair_.student.backbone.to_json()},
              {"projector", pair_.student.projector.to_json()},
              {"predictor", pair_.student.predictor.to_json()}}},
            {"teacher",
             {{"backbone", pair_.teacher.backbone.to_json()},
              {"projector", pair_.teacher.projector.to_json()},
              {"momentum", pair_.momentum}}},
            {"optimizer", opt_.to_json()},
            {"support_set", support_.to_json()},
            {"rng", {{"seed", cfg_.seed}, {"global_step", step_}}},
            {"epoch_losses", epoch_losses_},
            {"epochs", ep},
            {"oracle_padded", oracle_padded_},
            {"baseline", have_baseline_ ? baseline_.to_json() : nlohmann::json(nullptr)}};
}

Trainer Trainer::from_checkpoint(const nlohmann::json& j) {
    const int schema = j.at("schema_version").get<int>();
    if (schema != kCheckpointSchemaVersion) {
        throw Error("checkpoint schema version " + std::to_string(schema) + " is not supported");
    }
    Trainer t(RunConfig::from_json(j.at("config"), RunConfig{}));
    const auto& s = j.at("student");
    t.pair_.student.backbone = MlpNetwork::from_json(s.at("backbone"));
    t.pair_.student.projector = MlpNetwork::from_json(s.at("projector"));
    t.pair_.student.predictor = MlpNetwork::from_json(s.at("predictor"));
    const auto& te = j.at("teacher");
    t.pair_.teacher.backbone = MlpNetwork::from_json(te.at("backbone"));
    t.pair_.teacher.projector = MlpNetwork::from_json(te.at("projector"));
    t.pair_.momentum = te.at("momentum").get<double>();
    t.opt_ = SgdOptimizer::from_json(j.at("optimizer"));
    t.support_ = SupportSet::from_json(j.at("support_set"));
    t.step_ = j.at("global_step").get<std::size_t>();
    t.epoch_losses_ = j.at("epoch_losses").get<std::vector<double>>();
    for (const auto& e : j.at("epochs")) t.epochs_.push_back(EpochMetrics::from_json(e));
    t.oracle_padded_ = j.at("oracle_padded").get<std::size_t>();
    if (!j.at("baseline").is_null()) {
        t.baseline_ = EvaluationReport::from_json(j.at("baseline"));
        t.have_baseline_ = true;
    }
    return t;
}

RunManifest train(const RunConfig& cfg) {
    Trainer t(cfg);
    return t.run();
}

EvaluationReport evaluate_checkpoint(const nlohmann::json& checkpoint) {
    return Trainer::from_checkpoint(checkpoint).evaluate();
}

}  // namespace mnn
