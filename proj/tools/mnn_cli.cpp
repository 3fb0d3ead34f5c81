// mnn: command-line entry point (generate, train, evaluate, sweep, report).

#include "mnn/config.hpp"
#include "mnn/dataset.hpp"
#include "mnn/report.hpp"
#include "mnn/sweep.hpp"
#include "mnn/trainer.hpp"
#include "mnn/util.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mnn;

namespace {

/// Flags that mirror RunConfig fields. Each is applied only when given, on
/// top of the defaults and the optional JSON file.
struct ConfigFlags {
    std::string config_file;
    bool full_scale = false;
    std::optional<std::string> method, mix_mode, mix_granularity, student_aug, teacher_aug, run_id;
    std::optional<std::size_t> k, support_size, batch_size, epochs, warmup_epochs, k_eval, probe_epochs;
    std::optional<std::size_t> n_classes, n_train, n_test, ambient_dim;
    std::optional<double> momentum, base_lr, weight_decay, lambda, cluster_spread, probe_lr;
    std::optional<std::uint64_t> seed, dataset_seed, sample_seed;
    std::optional<bool> symmetric;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_file, "JSON config file (overrides defaults)")->check(CLI::ExistingFile);
        app->add_flag("--full-scale", full_scale,
                      "start from the full-scale pretraining defaults instead of the desk-scale reference");
        app->add_option("--method", method, "mnn, msf, byol, mnn_cas, mnn_random, mnn_oracle or mnn_no_mix");
        app->add_option("--k", k, "neighbors per anchor");
        app->add_option("--support-size", support_size, "support set capacity");
        app->add_option("--batch-size", batch_size);
        app->add_option("--epochs", epochs);
        app->add_option("--warmup-epochs", warmup_epochs);
        app->add_option("--momentum", momentum, "teacher EMA momentum");
        app->add_option("--base-lr", base_lr, "learning rate per 256 samples");
        app->add_option("--weight-decay", weight_decay);
        app->add_option("--mix-mode", mix_mode, "off, uniform or fixed");
        app->add_option("--lambda", lambda, "mixing coefficient for --mix-mode fixed");
        app->add_option("--mix-granularity", mix_granularity, "per_batch or per_neighbor");
        app->add_option("--student-aug", student_aug, "strong or weak");
        app->add_option("--teacher-aug", teacher_aug, "strong or weak");
        app->add_option("--symmetric", symmetric, "symmetric loss (true/false)");
        app->add_option("--k-eval", k_eval, "neighbors for KNN evaluation");
        app->add_option("--probe-epochs", probe_epochs);
        app->add_option("--probe-lr", probe_lr);
        app->add_option("--n-classes", n_classes);
        app->add_option("--n-train", n_train);
        app->add_option("--n-test", n_test);
        app->add_option("--ambient-dim", ambient_dim);
        app->add_option("--cluster-spread", cluster_spread);
        app->add_option("--dataset-seed", dataset_seed, "seed of the class centers and nonlinear map");
        app->add_option("--sample-seed", sample_seed, "seed of the sampled points");
        app->add_option("--seed", seed, "run seed");
        app->add_option("--run-id", run_id);
    }

    RunConfig resolve() const {
        RunConfig c = full_scale ? RunConfig{} : RunConfig::reference();
        if (!config_file.empty()) c = RunConfig::from_json(nlohmann::json::parse(read_text_file(config_file)), c);
        if (method) c.method = parse_method(*method);
        if (k) c.k = *k;
        if (support_size) c.support_capacity = *support_size;
        if (batch_size) c.batch_size = *batch_size;
        if (epochs) c.epochs = *epochs;
        if (warmup_epochs) c.warmup_epochs = *warmup_epochs;
        if (momentum) c.momentum = *momentum;
        if (base_lr) c.base_lr = *base_lr;
        if (weight_decay) c.weight_decay = *weight_decay;
        if (mix_mode) c.mix.mode = parse_mix_mode(*mix_mode);
        if (lambda) c.mix.fixed_lambda = *lambda;
        if (mix_granularity) c.mix.granularity = parse_mix_granularity(*mix_granularity);
        auto aug = [](const std::string& s) {
            return parse_aug_strength(s) == AugStrength::strong ? AugmentPolicy::strong() : AugmentPolicy::weak();
        };
        if (student_aug) c.student_aug = aug(*student_aug);
        if (teacher_aug) c.teacher_aug = aug(*teacher_aug);
        if (symmetric) c.symmetric_loss = *symmetric;
        if (k_eval) c.eval.k_eval = *k_eval;
        if (probe_epochs) c.eval.probe.epochs = *probe_epochs;
        if (probe_lr) c.eval.probe.lr = *probe_lr;
        if (n_classes) c.dataset.n_classes = *n_classes;
        if (n_train) c.dataset.n_train = *n_train;
        if (n_test) c.dataset.n_test = *n_test;
        if (ambient_dim) c.dataset.ambient_dim = *ambient_dim;
        if (cluster_spread) c.dataset.cluster_spread = *cluster_spread;
        if (dataset_seed) c.dataset.nonlinearity_seed = *dataset_seed;
        if (sample_seed) c.dataset.sample_seed = *sample_seed;
        if (seed) c.seed = *seed;
        if (run_id) c.run_id = *run_id;
        return c;
    }
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& f : split(s, ',')) {
        if (f.empty()) continue;
        out.push_back(std::stoull(f));
    }
    if (out.empty()) throw Error("no seeds given");
    return out;
}

void print_eval(const std::string& label, const EvaluationReport& r) {
    std::cout << label << ": knn_acc=" << format_double(r.knn_acc) << " probe_acc=" << format_double(r.probe_acc)
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed nearest-neighbor self-supervised training on synthetic data"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write the synthetic dataset as CSV");
    ConfigFlags gen_flags;
    gen_flags.add_to(gen);
    std::string gen_out = "data";
    gen->add_option("--out", gen_out, "output directory");

    // train
    auto* tr = app.add_subcommand("train", "train one run and write its report and checkpoint");
    ConfigFlags tr_flags;
    tr_flags.add_to(tr);
    std::string tr_out;
    bool quiet = false;
    tr->add_option("--out", tr_out, "output directory (default runs/<run_id>)");
    tr->add_flag("--quiet", quiet, "no per-epoch progress");
    bool print_config = false;
    tr->add_flag("--print-config", print_config, "print the resolved config and exit");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint's frozen backbone");
    std::string ev_ckpt, ev_manifest;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint.json")->required();
    ev->add_option("--manifest", ev_manifest, "manifest.json to append the report to");

    // sweep
    auto* sw = app.add_subcommand("sweep", "train every value of one axis over several seeds");
    ConfigFlags sw_flags;
    sw_flags.add_to(sw);
    std::string sw_axis, sw_values, sw_seeds = "1,2,3", sw_out = "sweep";
    sw->add_option("--axis", sw_axis, "k, support_size, augmentation, strategy, lambda or weight_scheme")
        ->required();
    sw->add_option("--values", sw_values, "comma-separated values")->required();
    sw->add_option("--seeds", sw_seeds, "comma-separated seeds");
    sw->add_option("--out", sw_out, "output directory");

    // report
    auto* rep = app.add_subcommand("report", "rebuild metrics.csv, manifest.json and report.svg from manifests");
    std::vector<std::string> rep_in;
    std::string rep_out = "report";
    rep->add_option("manifests", rep_in, "manifest.json files")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", rep_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const RunConfig c = gen_flags.resolve();
            c.dataset.validate();
            const Dataset d = generate_dataset(c.dataset);
            fs::create_directories(gen_out);
            write_dataset_csv(d.train, (fs::path(gen_out) / "train.csv").string());
            write_dataset_csv(d.test, (fs::path(gen_out) / "test.csv").string());
            write_text_file(fs::path(gen_out) / "dataset.json", c.dataset.to_json().dump(2) + "\n");
            std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test rows to " << gen_out
                      << '\n';
        } else if (*tr) {
            RunConfig c = tr_flags.resolve();
            if (print_config) {
                std::cout << c.to_json().dump(2) << '\n';
                return 0;
            }
            fs::path out = !tr_out.empty() ? fs::path(tr_out)
                           : !c.output_dir.empty() ? fs::path(c.output_dir)
                                                   : fs::path("runs") / c.resolved_run_id();
            c.output_dir = out.string();
            Trainer t(c);
            if (!quiet) std::cout << "run " << c.resolved_run_id() << " -> " << out.string() << '\n';
            const RunManifest m = t.run([&](const EpochMetrics& e) {
                if (quiet) return;
                std::cout << "epoch " << e.epoch << "/" << c.epochs << " loss=" << format_double(e.loss_mean)
                          << " purity=" << format_double(e.diag.purity) << std::endl;
            });
            const RunManifest one[] = {m};
            emit_report(one, out);
            write_text_file(out / "checkpoint.json", t.checkpoint().dump() + "\n");
            write_diagnostics_csv(m, out / kDiagnosticsFile);
            print_eval("baseline", m.baseline_eval);
            print_eval("final", m.final_eval);
        } else if (*ev) {
            const auto ckpt = nlohmann::json::parse(read_text_file(ev_ckpt));
            const EvaluationReport r = evaluate_checkpoint(ckpt);
            std::cout << r.to_json().dump(2) << '\n';
            if (!ev_manifest.empty()) {
                auto runs = read_manifests(ev_manifest);
                if (runs.size() != 1) throw Error("--manifest must hold a single run");
                runs[0].evaluations.push_back(r);
                write_text_file(ev_manifest, runs[0].to_json().dump(2) + "\n");
            }
        } else if (*sw) {
            const RunConfig base = sw_flags.resolve();
            std::vector<std::string> values;
            for (const auto& v : split(sw_values, ',')) {
                if (!v.empty()) values.push_back(v);
            }
            SweepOptions opt;
            opt.seeds = parse_seeds(sw_seeds);
            opt.output_dir = sw_out;
            opt.on_point = [](const SweepPoint& p) {
                std::cout << p.manifest.run_id << " knn_acc=" << format_double(p.manifest.final_eval.knn_acc)
                          << " probe_acc=" << format_double(p.manifest.final_eval.probe_acc) << std::endl;
            };
            const auto r = sweep(parse_sweep_axis(sw_axis), values, base, opt);
            if (r.aborted) {
                std::cerr << "sweep aborted: " << r.error << " (" << r.points.size()
                          << " finished runs kept in " << sw_out << ")\n";
                return 2;
            }
        } else if (*rep) {
            std::vector<RunManifest> all;
            for (const auto& p : rep_in) {
                auto runs = read_manifests(p);
                all.insert(all.end(), runs.begin(), runs.end());
            }
            for (const auto& p : emit_report(all, rep_out)) std::cout << p.string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
