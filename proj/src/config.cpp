#include "mnn/config.hpp"

#include <nlohmann/json.hpp>

namespace mnn {

MethodSpec method_spec(Method m) {
    switch (m) {
        case Method::mnn: return {WeightTag::wse, true, Selection::cosine};
        case Method::msf: return {WeightTag::mse, false, Selection::cosine};
        case Method::byol: return {WeightTag::wse, false, Selection::none};
        case Method::mnn_cas: return {WeightTag::cas, true, Selection::cosine};
        case Method::mnn_random: return {WeightTag::wse, true, Selection::random};
        case Method::mnn_oracle: return {WeightTag::wse, true, Selection::oracle};
        case Method::mnn_no_mix: return {WeightTag::wse, false, Selection::cosine};
    }
    throw Error("method_spec: bad method");
}

const char* to_string(Method m) {
    switch (m) {
        case Method::mnn: return "mnn";
        case Method::msf: return "msf";
        case Method::byol: return "byol";
        case Method::mnn_cas: return "mnn_cas";
        case Method::mnn_random: return "mnn_random";
        case Method::mnn_oracle: return "mnn_oracle";
        case Method::mnn_no_mix: return "mnn_no_mix";
    }
    return "?";
}

const char* to_string(Selection s) {
    switch (s) {
        case Selection::none: return "none";
        case Selection::cosine: return "cosine";
        case Selection::random: return "random";
        case Selection::oracle: return "oracle";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    for (auto m : kAllMethods) {
        if (s == to_string(m)) return m;
    }
    throw Error("unknown method '" + s + "'");
}

RunConfig RunConfig::reference() {
    RunConfig c;
    c.support_capacity = 1024;
    c.batch_size = 128;
    c.epochs = 50;
    return c;
}

std::size_t RunConfig::effective_k() const {
    return method_spec(method).selection == Selection::none ? 0 : k;
}

LrSchedule RunConfig::schedule() const {
    return {effective_base_lr(), warmup_epochs, epochs, steps_per_epoch()};
}

WeightScheme RunConfig::weight_scheme() const {
    return {method_spec(method).scheme, cas_gamma};
}

MixPolicy RunConfig::effective_mix() const {
    MixPolicy p = mix;
    if (!method_spec(method).mix) p.mode = MixMode::off;
    return p;
}

std::string RunConfig::resolved_run_id() const {
    if (!run_id.empty()) return run_id;
    return std::string(to_string(method)) + "-k" + std::to_string(effective_k()) + "-s" + std::to_string(seed);
}

void RunConfig::validate() const {
    dataset.validate();
    if (batch_size == 0) throw Error("RunConfig: batch_size must be positive");
    if (support_capacity < batch_size) throw Error("RunConfig: support_capacity must be >= batch_size");
    if (effective_k() >= support_capacity) throw Error("RunConfig: K must be < support_capacity");
    if (dataset.n_train < batch_size) throw Error("RunConfig: fewer training samples than one batch");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw Error("RunConfig: momentum must lie in [0, 1]");
    if (!(weight_decay >= 0.0)) throw Error("RunConfig: weight_decay must be >= 0");
    if (method_spec(method).scheme == WeightTag::cas && !cas_gamma.empty() && cas_gamma.size() != k) {
        throw Error("RunConfig: cas_gamma must have K entries");
    }
    if (eval.k_eval == 0 || eval.k_eval > dataset.n_train) throw Error("RunConfig: bad k_eval");
    for (const auto* w : {&student_aug, &teacher_aug}) {
        for (const auto* st : {&student_aug, &teacher_aug}) {
            if (w->strength == AugStrength::weak && st->strength == AugStrength::strong &&
                w->noise_sigma > st->noise_sigma) {
                throw Error("RunConfig: weak augmentation noise exceeds strong augmentation noise");
            }
        }
    }
    mix.validate();
    student_aug.validate();
    teacher_aug.validate();
    schedule().validate();
}

namespace {

nlohmann::json aug_to_json(const AugmentPolicy& a) {
    return {{"strength", to_string(a.strength)},
            {"noise_sigma", a.noise_sigma},
            {"dropout_prob", a.dropout_prob},
            {"scale_low", a.scale_low},
            {"scale_high", a.scale_high}};
}

AugmentPolicy aug_from_json(const nlohmann::json& j, AugmentPolicy a) {
    if (j.contains("strength")) {
        // switching strength resets the remaining fields to that preset
        const auto s = parse_aug_strength(j.at("strength").get<std::string>());
        if (s != a.strength) a = s == AugStrength::strong ? AugmentPolicy::strong() : AugmentPolicy::weak();
    }
    a.noise_sigma = j.value("noise_sigma", a.noise_sigma);
    a.dropout_prob = j.value("dropout_prob", a.dropout_prob);
    a.scale_low = j.value("scale_low", a.scale_low);
    a.scale_high = j.value("scale_high", a.scale_high);
    return a;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    return {{"dataset", dataset.to_json()},
            {"method", to_string(method)},
            {"k", k},
            {"support_capacity", support_capacity},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"warmup_epochs", warmup_epochs},
            {"momentum", momentum},
            {"base_lr", base_lr},
            {"weight_decay", weight_decay},
            {"sgd_momentum", sgd_momentum},
            {"mix",
             {{"mode", to_string(mix.mode)},
              {"fixed_lambda", mix.fixed_lambda},
              {"granularity", to_string(mix.granularity)}}},
            {"cas_gamma", cas_gamma},
            {"student_aug", aug_to_json(student_aug)},
            {"teacher_aug", aug_to_json(teacher_aug)},
            {"symmetric_loss", symmetric_loss},
            {"arch",
             {{"input_dim", arch.input_dim},
              {"backbone_hidden", arch.backbone_hidden},
              {"backbone_out", arch.backbone_out},
              {"projector_hidden", arch.projector_hidden},
              {"embedding_dim", arch.embedding_dim},
              {"predictor_hidden", arch.predictor_hidden}}},
            {"eval",
             {{"k_eval", eval.k_eval},
              {"probe_anchors", eval.probe_anchors},
              {"baseline", eval.baseline},
              {"probe",
               {{"epochs", eval.probe.epochs},
                {"lr", eval.probe.lr},
                {"milestones", eval.probe.milestones},
                {"decay", eval.probe.decay},
                {"momentum", eval.probe.momentum},
                {"weight_decay", eval.probe.weight_decay}}}}},
            {"seed", seed},
            {"run_id", run_id},
            {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) { return from_json(j, reference()); }

RunConfig RunConfig::from_json(const nlohmann::json& j, RunConfig c) {
    if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j.at("dataset"), c.dataset);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    c.k = j.value("k", c.k);
    c.support_capacity = j.value("support_capacity", c.support_capacity);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.momentum = j.value("momentum", c.momentum);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.sgd_momentum = j.value("sgd_momentum", c.sgd_momentum);
    if (j.contains("mix")) {
        const auto& m = j.at("mix");
        if (m.contains("mode")) c.mix.mode = parse_mix_mode(m.at("mode").get<std::string>());
        c.mix.fixed_lambda = m.value("fixed_lambda", c.mix.fixed_lambda);
        if (m.contains("granularity")) c.mix.granularity = parse_mix_granularity(m.at("granularity").get<std::string>());
    }
    c.cas_gamma = j.value("cas_gamma", c.cas_gamma);
    if (j.contains("student_aug")) c.student_aug = aug_from_json(j.at("student_aug"), c.student_aug);
    if (j.contains("teacher_aug")) c.teacher_aug = aug_from_json(j.at("teacher_aug"), c.teacher_aug);
    c.symmetric_loss = j.value("symmetric_loss", c.symmetric_loss);
    if (j.contains("arch")) {
        const auto& a = j.at("arch");
        c.arch.input_dim = a.value("input_dim", c.arch.input_dim);
        c.arch.backbone_hidden = a.value("backbone_hidden", c.arch.backbone_hidden);
        c.arch.backbone_out = a.value("backbone_out", c.arch.backbone_out);
        c.arch.projector_hidden = a.value("projector_hidden", c.arch.projector_hidden);
        c.arch.embedding_dim = a.value("embedding_dim", c.arch.embedding_dim);
        c.arch.predictor_hidden = a.value("predictor_hidden", c.arch.predictor_hidden);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.eval.k_eval = e.value("k_eval", c.eval.k_eval);
        c.eval.probe_anchors = e.value("probe_anchors", c.eval.probe_anchors);
        c.eval.baseline = e.value("baseline", c.eval.baseline);
        if (e.contains("probe")) {
            const auto& p = e.at("probe");
            c.eval.probe.epochs = p.value("epochs", c.eval.probe.epochs);
            c.eval.probe.lr = p.value("lr", c.eval.probe.lr);
            c.eval.probe.milestones = p.value("milestones", c.eval.probe.milestones);
            c.eval.probe.decay = p.value("decay", c.eval.probe.decay);
            c.eval.probe.momentum = p.value("momentum", c.eval.probe.momentum);
            c.eval.probe.weight_decay = p.value("weight_decay", c.eval.probe.weight_decay);
        }
    }
    c.seed = j.value("seed", c.seed);
    c.run_id = j.value("run_id", c.run_id);
    c.output_dir = j.value("output_dir", c.output_dir);
    return c;
}

}  // namespace mnn
