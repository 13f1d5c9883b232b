// Command-line front end: data generation, annotation, adversarial training,
// evaluation, full pipeline runs, grids and trend reproduction.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rct/harness.hpp"
#include "rct/objectives.hpp"

namespace fs = std::filesystem;
using rct::json;

namespace {

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 0;  // 0 = take from config
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "configuration file (JSON)");
    cmd->add_option("--seed", o.seed, "master seed override");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--jobs", o.jobs, "worker pool size");
    cmd->add_option("--set", o.overrides, "config override key.path=value (repeatable)");
}

rct::PipelineConfig resolve_config(const CommonOpts& o, bool require_file) {
    json doc;
    if (!o.config.empty()) {
        std::ifstream is(o.config);
        if (!is) throw rct::ValidationError("cannot open config " + o.config);
        doc = json::parse(is);
    } else if (require_file) {
        throw rct::ValidationError("--config is required");
    } else {
        doc = json(rct::PipelineConfig{});
    }
    for (const std::string& kv : o.overrides) rct::apply_override(doc, kv);
    rct::PipelineConfig cfg = doc.get<rct::PipelineConfig>();
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (o.jobs > 0) cfg.jobs = o.jobs;
    return cfg;
}

rct::MlpSpec model_spec(const rct::PipelineConfig& cfg, int dim, int classes) {
    rct::MlpSpec spec;
    spec.widths.push_back(dim);
    for (int h : cfg.model.hidden) spec.widths.push_back(h);
    spec.widths.push_back(classes);
    return spec;
}

int cmd_gen_data(const CommonOpts& o, const std::string& kind, int n, double noise,
                 double separation, const std::string& out_file) {
    std::uint64_t seed = o.seed.value_or(1);
    rct::Dataset ds;
    if (kind == "two_gaussians")
        ds = rct::two_gaussians(n / 2, separation, noise, seed);
    else if (kind == "two_moons")
        ds = rct::two_moons(n, noise, seed);
    else
        throw rct::ValidationError("gen-data: kind must be two_moons or two_gaussians");
    rct::save_csv(ds, out_file);
    std::printf("wrote %d samples (%d classes) to %s\n", ds.size(), ds.class_count,
                out_file.c_str());
    return 0;
}

int cmd_annotate(const CommonOpts& o, const std::string& labeled_path,
                 const std::string& unlabeled_path, const std::string& method) {
    rct::PipelineConfig cfg = resolve_config(o, false);
    if (!method.empty()) cfg.annotate.method = method;
    rct::Dataset labeled = rct::load_csv(labeled_path);
    rct::Dataset unlabeled = rct::load_csv(unlabeled_path);
    labeled.class_count = unlabeled.class_count = std::max(labeled.class_count, 2);

    rct::MlpSpec spec = model_spec(cfg, labeled.dim(), labeled.class_count);
    const std::uint64_t seed = cfg.seed;
    rct::Annotation ann;
    const rct::AnnotateConfig& a = cfg.annotate;
    if (a.method == "pretrained")
        ann = rct::pretrained_annotator(labeled, unlabeled, spec, a.pretrain,
                                        rct::derive_seed(seed, "annotate"));
    else if (a.method == "self_train")
        ann = rct::self_train(labeled, unlabeled, spec, a.self_train,
                              rct::derive_seed(seed, "annotate"));
    else if (a.method == "vanilla_cotrain")
        ann = rct::vanilla_cotrain(labeled, unlabeled, spec, a.cotrain,
                                   rct::derive_seed(seed, "annotate-1"),
                                   rct::derive_seed(seed, "annotate-2"));
    else if (a.method == "deep_cotrain")
        ann = rct::deep_cotrain(labeled, unlabeled, spec, a.cotrain,
                                rct::derive_seed(seed, "annotate-1"),
                                rct::derive_seed(seed, "annotate-2"));
    else
        throw rct::ValidationError("annotate: method '" + a.method +
                                   "' needs ground truth and only runs inside `run`");

    const fs::path out_dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / "annotation.csv");
    for (int i = 0; i < unlabeled.size(); ++i) {
        os << ann.pseudo_labels[i];
        for (int j = 0; j < unlabeled.dim(); ++j) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", unlabeled.features(i, j));
            os << ',' << buf;
        }
        os << ',' << ann.confidence[i] << '\n';
    }
    std::printf("annotated %d samples with %s (annotator f%d)\n", unlabeled.size(),
                a.method.c_str(), ann.annotator_id + 1);
    return 0;
}

int cmd_adv_train(const CommonOpts& o, const std::string& data_path,
                  const std::string& test_path) {
    rct::PipelineConfig cfg = resolve_config(o, false);
    rct::Dataset train = rct::load_csv(data_path);
    rct::Dataset test;
    if (!test_path.empty()) test = rct::load_csv(test_path);

    rct::MlpSpec spec = model_spec(cfg, train.dim(), train.class_count);
    rct::EvalHooks hooks;
    hooks.test = test.size() > 0 ? &test : nullptr;
    hooks.attacks = cfg.eval_attacks;
    hooks.every = cfg.eval_every;

    rct::TrainResult tr = rct::adversarial_train(train, cfg.trainer, spec,
                                                 rct::derive_seed(cfg.seed, "train-g"), &hooks);
    const fs::path out_dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(out_dir);
    tr.net.save(out_dir / "model.bin");
    std::ofstream os(out_dir / "epochs.csv");
    os << "epoch,std_acc";
    for (const auto& a : cfg.eval_attacks) os << ",robust_acc@" << a.name;
    os << ",train_loss\n";
    for (const auto& r : tr.curves) {
        os << r.epoch << ',' << r.std_acc;
        for (const auto& a : cfg.eval_attacks) {
            auto it = r.robust_acc.find(a.name);
            os << ',' << (it == r.robust_acc.end() ? std::nan("") : it->second);
        }
        os << ',' << r.train_loss << '\n';
    }
    std::printf("trained %s for %d epochs; model at %s\n",
                rct::to_string(cfg.trainer.method).c_str(), cfg.trainer.epochs,
                (out_dir / "model.bin").string().c_str());
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& model_path, const std::string& test_path) {
    rct::PipelineConfig cfg = resolve_config(o, false);
    rct::Network net = rct::Network::load(model_path);
    rct::Dataset test = rct::load_csv(test_path);
    json report;
    report["standard_accuracy"] = rct::eval_standard(net, test);
    for (const auto& a : cfg.eval_attacks)
        report["robust_accuracy"][a.name] =
            rct::eval_robust(net, test, a.spec, rct::derive_seed(cfg.seed, "eval"));
    std::cout << report.dump(2) << "\n";
    return 0;
}

int cmd_run(const CommonOpts& o) {
    rct::PipelineConfig cfg = resolve_config(o, true);
    rct::RunRecord rec = rct::run_pipeline(cfg, cfg.out_dir);
    std::cout << rct::to_json_record(rec).dump(2) << "\n";
    return 0;
}

int cmd_grid(const CommonOpts& o) {
    json doc;
    {
        std::ifstream is(o.config);
        if (!is) throw rct::ValidationError("cannot open config " + o.config);
        doc = json::parse(is);
    }
    for (const std::string& kv : o.overrides) rct::apply_override(doc, kv);

    rct::GridAxes axes;
    if (doc.contains("grid") && doc["grid"].contains("axes")) {
        for (const json& ax : doc["grid"]["axes"])
            axes.emplace_back(ax.at("path").get<std::string>(),
                              std::vector<json>(ax.at("values").begin(), ax.at("values").end()));
    }
    doc.erase("grid");
    rct::PipelineConfig base = doc.get<rct::PipelineConfig>();
    if (o.seed) base.seed = *o.seed;
    if (!o.out.empty()) base.out_dir = o.out;
    if (o.jobs > 0) base.jobs = o.jobs;

    std::vector<rct::RunRecord> records = rct::grid_experiment(base, axes, base.out_dir);
    std::printf("grid complete: %zu runs, results in %s/grid.csv\n", records.size(),
                base.out_dir.c_str());
    return 0;
}

int cmd_reproduce(const CommonOpts& o, const std::string& figure) {
    const std::uint64_t seed = o.seed.value_or(20240801);
    const fs::path out = o.out.empty() ? fs::path("reproduce_" + figure) : fs::path(o.out);
    const int jobs = o.jobs > 0 ? o.jobs : 1;
    rct::TrendVerdict v = rct::reproduce(figure, seed, out, jobs);
    std::cout << (v.satisfied ? "TREND SATISFIED" : "TREND VIOLATED") << "\n" << v.summary;
    return v.satisfied ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"robust co-training laboratory"};
    app.require_subcommand(1);

    CommonOpts gen_o, ann_o, adv_o, eval_o, run_o, grid_o, rep_o;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
    std::string gen_kind = "two_moons", gen_out = "data.csv";
    int gen_n = 400;
    double gen_noise = 0.1, gen_sep = 3.0;
    gen->add_option("--kind", gen_kind, "two_moons | two_gaussians");
    gen->add_option("--n", gen_n, "total sample count");
    gen->add_option("--noise", gen_noise, "noise level");
    gen->add_option("--separation", gen_sep, "cluster separation (two_gaussians)");
    gen->add_option("--out-file", gen_out, "output CSV path");
    add_common(gen, gen_o);

    auto* ann = app.add_subcommand("annotate", "pseudo-label an unlabeled CSV");
    std::string ann_labeled, ann_unlabeled, ann_method;
    ann->add_option("--labeled", ann_labeled, "labeled CSV")->required();
    ann->add_option("--unlabeled", ann_unlabeled, "unlabeled CSV")->required();
    ann->add_option("--method", ann_method, "annotation method");
    add_common(ann, ann_o);

    auto* adv = app.add_subcommand("adv-train", "adversarially train on a labeled CSV");
    std::string adv_data, adv_test;
    adv->add_option("--data", adv_data, "training CSV")->required();
    adv->add_option("--test", adv_test, "test CSV for per-epoch curves");
    add_common(adv, adv_o);

    auto* ev = app.add_subcommand("eval", "evaluate a saved model");
    std::string eval_model, eval_test;
    ev->add_option("--model", eval_model, "model.bin")->required();
    ev->add_option("--test", eval_test, "test CSV")->required();
    add_common(ev, eval_o);

    auto* run = app.add_subcommand("run", "full pipeline from a config file");
    add_common(run, run_o);

    auto* grid = app.add_subcommand("grid", "Cartesian grid of pipeline runs");
    add_common(grid, grid_o);

    auto* rep = app.add_subcommand("reproduce", "run a preset experiment and check its trend");
    std::string rep_figure;
    rep->add_option("figure", rep_figure,
                    "label_quality | total_variance | heatmap | adv_training")
        ->required();
    add_common(rep, rep_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_o, gen_kind, gen_n, gen_noise, gen_sep, gen_out);
        if (ann->parsed()) return cmd_annotate(ann_o, ann_labeled, ann_unlabeled, ann_method);
        if (adv->parsed()) return cmd_adv_train(adv_o, adv_data, adv_test);
        if (ev->parsed()) return cmd_eval(eval_o, eval_model, eval_test);
        if (run->parsed()) return cmd_run(run_o);
        if (grid->parsed()) return cmd_grid(grid_o);
        if (rep->parsed()) return cmd_reproduce(rep_o, rep_figure);
    } catch (const rct::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
