#include <omp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hrge/binary_io.hpp"
#include "hrge/checkpoint.hpp"
#include "hrge/dataset.hpp"
#include "hrge/errors.hpp"
#include "hrge/gradcheck.hpp"
#include "hrge/retrieval.hpp"
#include "hrge/synthetic.hpp"
#include "hrge/trainer.hpp"

namespace fs = std::filesystem;
using namespace hrge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

constexpr const char* kConfigHelp =
    "Flat key=value file, one option per line, keys are long option names without dashes "
    "(e.g. `lr=1e-3`). Lines starting with # are comments. Flags given on the command line win.";

struct Common {
    std::string config;
    std::string run_dir = "run";
    std::uint64_t seed = 0;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, kConfigHelp);
    sub->add_option("--run-dir", c.run_dir, "Directory receiving every output and manifest.txt")->capture_default_str();
    sub->add_option("--seed", c.seed, "Seed for every random choice of the command")->capture_default_str();
    sub->add_option("--threads", c.threads, "OpenMP threads (0 = runtime default)")->capture_default_str();
}

// Applies config keys to options that were not given on the command line.
void apply_config(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path);
    CLI::ConfigBase parser;
    for (const auto& item : parser.from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty()) throw ConfigError("config key '" + item.fullname() + "': sections are not supported");
        if (item.name == "config") continue;
        CLI::Option* op = sub->get_option_no_throw("--" + item.name);
        if (op == nullptr) throw ConfigError("unknown config key '" + item.name + "'");
        if (op->count() > 0) continue;
        op->clear();
        op->add_result(item.inputs);
        op->run_callback();
    }
}

void write_manifest(const fs::path& dir, CLI::App* sub) {
    std::ostringstream out;
    // Valid input for --config.
    out << "# command=" << sub->get_name() << '\n' << sub->config_to_str(true, false);
    io::write_file(dir / "manifest.txt", out.str());
}

fs::path prepare_run_dir(const Common& c) {
    const fs::path dir(c.run_dir);
    if (dir.empty()) throw ConfigError("--run-dir must not be empty");
    fs::create_directories(dir);
    return dir;
}

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    Common common;
    SyntheticSpec spec;
    std::string mode = "prototype";
    std::string out;
    std::size_t stride = 2;
    std::size_t depth = 0;
};

void setup_synth(CLI::App& app, SynthArgs& a) {
    auto* sub = app.add_subcommand("synth", "Generate a synthetic multi-view feature dataset (HRGF)");
    add_common(sub, a.common);
    sub->add_option("--mode", a.mode, "prototype | relational-order")->capture_default_str();
    sub->add_option("--classes", a.spec.num_classes, "Number of coarse classes")->capture_default_str();
    sub->add_option("--per-class", a.spec.per_class, "Shapes per class")->capture_default_str();
    sub->add_option("--views", a.spec.views, "Views per shape (N)")->capture_default_str();
    sub->add_option("--dim", a.spec.dim, "Feature dimension per view (D)")->capture_default_str();
    sub->add_option("--noise", a.spec.noise, "Gaussian noise sigma")->capture_default_str();
    sub->add_option("--fine-per-class", a.spec.fine_per_class, "Sub-categories per class (prototype mode)")
        ->capture_default_str();
    sub->add_option("--fine-spread", a.spec.fine_spread, "Sigma of sub-category offsets")->capture_default_str();
    sub->add_option("--stride", a.stride, "Coarsening stride the data must support")->capture_default_str();
    sub->add_option("--depth", a.depth, "Hierarchy depth the data must support (0 = no check)")->capture_default_str();
    sub->add_option("--out", a.out, "Output path (default <run-dir>/dataset.hrgf)");
}

int run_synth(CLI::App* sub, SynthArgs& a) {
    if (a.depth > 0) {
        ModelGeometry g;
        g.views = a.spec.views;
        g.stride = a.stride;
        g.depth = a.depth;
        g.width = a.spec.dim;
        validate_geometry(g, apply_variant(Variant::full, a.depth));
    }
    a.spec.kind = parse_synthetic_kind(a.mode);
    a.spec.seed = a.common.seed;
    const fs::path dir = prepare_run_dir(a.common);
    const fs::path out = a.out.empty() ? dir / "dataset.hrgf" : fs::path(a.out);
    const FeatureDataset ds = generate_synthetic(a.spec);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_dataset(ds, out);
    write_manifest(dir, sub);
    std::cout << "wrote " << ds.size() << " shapes (" << ds.num_classes << " classes, N=" << ds.views
              << ", D=" << ds.dim << ") to " << out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    Common common;
    std::string data;
    std::string test_data;
    std::string variant = "full";
    std::string labels = "coarse";
    std::size_t stride = 2;
    std::size_t depth = 2;
    std::size_t pair_hidden = 0;
    std::size_t coarsen_offset = 0;
    double train_fraction = 0.7;
    std::optional<std::uint64_t> split_seed;
    TrainConfig cfg;
};

void setup_train(CLI::App& app, TrainArgs& a) {
    auto* sub = app.add_subcommand("train", "Train a model end to end and report test accuracy");
    add_common(sub, a.common);
    sub->add_option("--data", a.data, "Training dataset (HRGF); split unless --test-data is given");
    sub->add_option("--test-data", a.test_data, "Separate test dataset (HRGF)");
    sub->add_option("--variant", a.variant,
                    "baseline | pr | nr | hrge-1l | full | hrge-won | hrge-mp | hrge-ap | hrge-id")
        ->capture_default_str();
    sub->add_option("--labels", a.labels, "Train on coarse or fine labels")
        ->check(CLI::IsMember({"coarse", "fine"}))
        ->capture_default_str();
    sub->add_option("--stride", a.stride, "Coarsening stride s")->capture_default_str();
    sub->add_option("--depth", a.depth, "Number of coarsening steps L")->capture_default_str();
    sub->add_option("--pair-hidden", a.pair_hidden, "Hidden width of the pairwise MLP (0 = feature width)")
        ->capture_default_str();
    sub->add_option("--coarsen-offset", a.coarsen_offset, "Phase of the nodes kept by coarsening")
        ->capture_default_str();
    sub->add_option("--lr", a.cfg.schedule.initial_lr, "Initial learning rate")->capture_default_str();
    sub->add_option("--decay", a.cfg.schedule.decay_factor, "Learning-rate decay factor")->capture_default_str();
    sub->add_option("--period", a.cfg.schedule.decay_period, "Epochs between decays")->capture_default_str();
    sub->add_option("--batch", a.cfg.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_option("--epochs", a.cfg.epochs, "Epochs")->capture_default_str();
    sub->add_option("--wd", a.cfg.optimizer.weight_decay, "Decoupled weight decay")->capture_default_str();
    sub->add_option("--beta1", a.cfg.optimizer.beta1, "Adam beta1")->capture_default_str();
    sub->add_option("--beta2", a.cfg.optimizer.beta2, "Adam beta2")->capture_default_str();
    sub->add_option("--eps", a.cfg.optimizer.eps, "Adam epsilon")->capture_default_str();
    sub->add_option("--train-fraction", a.train_fraction, "Per-class share kept for training")->capture_default_str();
    sub->add_option("--split-seed", a.split_seed, "Seed of the stratified split (default --seed)");
}

FeatureDataset relabel_fine(FeatureDataset ds, const std::string& what) {
    if (ds.num_fine_classes == 0) throw DataError(what + ": no fine labels in dataset");
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        auto& r = ds.records[i];
        if (!r.fine_label) throw DataError(what + ": record " + std::to_string(i) + " ('" + r.id + "') has no fine label");
        r.coarse_label = *r.fine_label;
    }
    ds.num_classes = ds.num_fine_classes;
    return ds;
}

int run_train(CLI::App* sub, TrainArgs& a) {
    require_path(a.data, "--data");
    const VariantSpec variant = apply_variant(a.variant, a.depth);
    FeatureDataset all = load_dataset(a.data);
    if (a.labels == "fine") all = relabel_fine(std::move(all), a.data);

    ModelGeometry g;
    g.views = all.views;
    g.width = all.dim;
    g.stride = a.stride;
    g.depth = a.depth;
    g.pair_hidden = a.pair_hidden;
    g.coarsen_offset = a.coarsen_offset;
    HrgeModel model(g, variant);

    const fs::path dir = prepare_run_dir(a.common);
    FeatureDataset train_set;
    FeatureDataset test_set;
    if (!a.test_data.empty()) {
        train_set = std::move(all);
        test_set = load_dataset(a.test_data);
        if (a.labels == "fine") test_set = relabel_fine(std::move(test_set), a.test_data);
    } else {
        DatasetSplit sp = split(all, a.train_fraction, a.split_seed.value_or(a.common.seed));
        for (const auto& w : sp.warnings) std::cerr << "warning: " << w << '\n';
        train_set = std::move(sp.train);
        test_set = std::move(sp.test);
        save_dataset(train_set, dir / "train_split.hrgf");
        save_dataset(test_set, dir / "test_split.hrgf");
    }

    std::mt19937_64 rng(a.common.seed);
    model.init(rng);
    Classifier clf(model.descriptor_length(), train_set.num_classes);
    clf.init(rng);

    a.cfg.seed = a.common.seed;
    a.cfg.optimizer.lr = a.cfg.schedule.initial_lr;
    std::ostringstream log_text;
    const TrainLog log = train(model, clf, train_set, a.cfg, &log_text);
    io::write_file(dir / "train_log.txt", log_text.str());
    save_checkpoint(model, clf, dir / "model.hrgm");

    const LogRecord& last = log.epochs.back();
    std::cout << "variant=" << variant.name() << " epochs=" << log.epochs.size() << " final_loss=" << fmt(last.loss)
              << " train_acc=" << fmt(last.accuracy) << '\n';
    if (!test_set.empty()) {
        const AccuracyReport acc = evaluate_accuracy(model, clf, test_set);
        io::write_file(dir / "accuracy.txt", format_accuracy_report(acc));
        std::cout << "test per_instance=" << fmt(acc.per_instance) << " per_class=" << fmt(acc.per_class) << " ("
                  << acc.correct << '/' << acc.total << ")\n";
    }
    write_manifest(dir, sub);
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    Common common;
    std::string checkpoint;
    std::string data;
    std::string labels = "coarse";
};

void setup_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Per-instance and per-class accuracy of a checkpoint on a dataset");
    add_common(sub, a.common);
    sub->add_option("--checkpoint", a.checkpoint, "Model checkpoint (HRGM)");
    sub->add_option("--data", a.data, "Test dataset (HRGF)");
    sub->add_option("--labels", a.labels, "Evaluate against coarse or fine labels")
        ->check(CLI::IsMember({"coarse", "fine"}))
        ->capture_default_str();
}

int run_eval(CLI::App* sub, EvalArgs& a) {
    require_path(a.checkpoint, "--checkpoint");
    require_path(a.data, "--data");
    Checkpoint ck = load_checkpoint(a.checkpoint);
    FeatureDataset ds = load_dataset(a.data);
    if (a.labels == "fine") ds = relabel_fine(std::move(ds), a.data);
    if (ds.num_classes != ck.classifier.num_classes()) {
        throw DataError(a.data + ": dataset has " + std::to_string(ds.num_classes) + " " + a.labels +
                        " classes, checkpoint predicts " + std::to_string(ck.classifier.num_classes()));
    }
    const AccuracyReport acc = evaluate_accuracy(ck.model, ck.classifier, ds);
    const fs::path dir = prepare_run_dir(a.common);
    io::write_file(dir / "accuracy.txt", format_accuracy_report(acc));
    write_manifest(dir, sub);
    std::cout << format_accuracy_report(acc);
    return kExitOk;
}

// ---------------------------------------------------------------- retrieve

struct RetrieveArgs {
    Common common;
    std::string checkpoint;
    std::string fine_checkpoint;
    std::string corpus;
    std::string queries;
    std::string validation;
    std::string tau = "inf";
};

void setup_retrieve(CLI::App& app, RetrieveArgs& a) {
    auto* sub = app.add_subcommand("retrieve", "Shape retrieval with threshold drop, optional re-ranking and metrics");
    add_common(sub, a.common);
    sub->add_option("--checkpoint", a.checkpoint, "Coarse-category model (HRGM)");
    sub->add_option("--fine-checkpoint", a.fine_checkpoint, "Sub-category model used for re-ranking");
    sub->add_option("--corpus", a.corpus, "Dataset indexed for retrieval (HRGF)");
    sub->add_option("--queries", a.queries, "Query dataset (default: every corpus shape queries the rest)");
    sub->add_option("--validation", a.validation, "Dataset used to sweep tau when --tau auto (default: corpus)");
    sub->add_option("--tau", a.tau, "Distance threshold: a positive number, inf, or auto")->capture_default_str();
}

std::vector<Query> make_queries(const HrgeModel& model, const FeatureDataset& ds) {
    const Matrix d = extract_descriptors(model, ds);
    std::vector<Query> out;
    out.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = d.row(i);
        out.push_back({ds.records[i].id, Vector(row.begin(), row.end()), ds.records[i].coarse_label});
    }
    return out;
}

double parse_tau(const std::string& text) {
    if (text == "inf" || text == "infinity") return kNoThreshold;
    double v = 0.0;
    std::size_t used = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty()) throw ConfigError("--tau expects a number, inf or auto, got '" + text + "'");
    if (!(v > 0.0)) throw ConfigError("--tau must be positive");
    return v;
}

int run_retrieve(CLI::App* sub, RetrieveArgs& a) {
    require_path(a.checkpoint, "--checkpoint");
    require_path(a.corpus, "--corpus");
    const bool auto_tau = a.tau == "auto";
    const double fixed_tau = auto_tau ? kNoThreshold : parse_tau(a.tau);

    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const FeatureDataset corpus = load_dataset(a.corpus);
    const FeatureDataset queries_ds = a.queries.empty() ? corpus : load_dataset(a.queries);
    const DescriptorIndex index = build_index(ck.model, corpus);
    const std::vector<Query> queries = make_queries(ck.model, queries_ds);

    std::vector<std::size_t> corpus_fine;
    std::vector<std::size_t> query_fine;
    std::optional<Checkpoint> fine;
    if (!a.fine_checkpoint.empty()) {
        fine = load_checkpoint(a.fine_checkpoint);
        corpus_fine = predict_labels(fine->model, fine->classifier, corpus);
        query_fine = predict_labels(fine->model, fine->classifier, queries_ds);
    }

    double tau = fixed_tau;
    if (auto_tau) {
        const auto cands = default_threshold_candidates();
        if (a.validation.empty()) {
            const std::vector<Query> val = make_queries(ck.model, corpus);
            tau = sweep_threshold(index, val, cands, corpus_fine, corpus_fine);
        } else {
            const FeatureDataset val_ds = load_dataset(a.validation);
            std::vector<std::size_t> val_fine;
            if (fine) val_fine = predict_labels(fine->model, fine->classifier, val_ds);
            tau = sweep_threshold(index, make_queries(ck.model, val_ds), cands, corpus_fine, val_fine);
        }
    }

    const RetrievalRun run = run_retrieval(index, queries, tau, corpus_fine, query_fine);
    const fs::path dir = prepare_run_dir(a.common);
    save_index(index, dir / "index.hrgi");
    io::write_file(dir / "metrics.tsv", format_metrics_tsv(run.report));
    io::write_file(dir / "metrics.txt", format_metrics_table(run.report));
    io::write_file(dir / "ranked_lists.tsv", format_ranked_lists(index, run.lists));
    std::string notes;
    for (const auto& n : run.notes) notes += n + '\n';
    io::write_file(dir / "notes.txt", notes);
    write_manifest(dir, sub);

    std::cout << "tau=" << (std::isinf(tau) ? std::string("inf") : fmt(tau)) << " queries=" << queries.size()
              << " evaluated=" << run.report.evaluated << " skipped=" << run.report.skipped
              << (fine ? " rerank=on" : " rerank=off") << '\n'
              << format_metrics_table(run.report);
    return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradArgs {
    Common common;
    std::string variant = "full";
    std::size_t views = 4;
    std::size_t stride = 2;
    std::size_t depth = 1;
    std::size_t width = 4;
    std::size_t classes = 3;
    std::size_t batch = 2;
    double step = 1e-5;
    double tolerance = 1e-4;
    bool corrupt = false;
};

void setup_gradcheck(CLI::App& app, GradArgs& a) {
    auto* sub = app.add_subcommand("gradcheck", "Finite-difference check of every parameter block on a tiny model");
    add_common(sub, a.common);
    sub->add_option("--variant", a.variant, "Variant to check")->capture_default_str();
    sub->add_option("--views", a.views, "Views N")->capture_default_str();
    sub->add_option("--stride", a.stride, "Coarsening stride s")->capture_default_str();
    sub->add_option("--depth", a.depth, "Coarsening steps L")->capture_default_str();
    sub->add_option("--width", a.width, "Feature width")->capture_default_str();
    sub->add_option("--classes", a.classes, "Head outputs")->capture_default_str();
    sub->add_option("--batch", a.batch, "Random shapes in the loss")->capture_default_str();
    sub->add_option("--step", a.step, "Central-difference step h")->capture_default_str();
    sub->add_option("--tolerance", a.tolerance, "Maximum relative error")->capture_default_str();
    sub->add_flag("--corrupt", a.corrupt, "Perturb the analytic gradients (negative control)");
}

int run_gradcheck(CLI::App* sub, GradArgs& a) {
    if (a.batch == 0 || a.classes == 0) throw ConfigError("--batch and --classes must be >= 1");
    ModelGeometry g;
    g.views = a.views;
    g.stride = a.stride;
    g.depth = a.depth;
    g.width = a.width;
    HrgeModel model(g, apply_variant(a.variant, a.depth));
    std::mt19937_64 rng(a.common.seed);
    model.init(rng);
    Classifier clf(model.descriptor_length(), a.classes);
    clf.init(rng);

    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> shapes;
    std::vector<std::size_t> labels;
    for (std::size_t b = 0; b < a.batch; ++b) {
        Matrix m(a.views, a.width);
        for (double& v : m.values()) v = normal(rng);
        shapes.push_back(std::move(m));
        labels.push_back(b % a.classes);
    }
    std::vector<const Matrix*> ptrs;
    for (const auto& s : shapes) ptrs.push_back(&s);

    GradCheckOptions opts;
    opts.step = a.step;
    opts.tolerance = a.tolerance;
    if (a.corrupt) {
        opts.corrupt = [](const ParamList& params) {
            for (const auto& p : params)
                for (double& v : p.grad) v = v * 1.01 + 1e-3;
        };
    }
    const GradCheckReport report = gradient_check(model, clf, ptrs, labels, opts);
    const fs::path dir = prepare_run_dir(a.common);
    const std::string text = format_gradcheck_report(report);
    io::write_file(dir / "gradcheck.txt", text);
    write_manifest(dir, sub);
    std::cout << text;
    return report.passed ? kExitOk : kExitNumeric;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical relational graph embedding over multi-view shape features"};
    app.require_subcommand(1);
    app.footer(std::string("Config files (--config): ") + kConfigHelp +
               "\nExit codes: 0 success, 2 usage or configuration error, 3 data error, 4 numeric failure.");

    SynthArgs synth;
    TrainArgs train_args;
    EvalArgs eval;
    RetrieveArgs retrieve_args;
    GradArgs grad;
    setup_synth(app, synth);
    setup_train(app, train_args);
    setup_eval(app, eval);
    setup_retrieve(app, retrieve_args);
    setup_gradcheck(app, grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        Common* common = name == "synth"       ? &synth.common
                         : name == "train"     ? &train_args.common
                         : name == "eval"      ? &eval.common
                         : name == "retrieve"  ? &retrieve_args.common
                                               : &grad.common;
        apply_config(sub, common->config);
        if (common->threads > 0) omp_set_num_threads(common->threads);

        if (name == "synth") return run_synth(sub, synth);
        if (name == "train") return run_train(sub, train_args);
        if (name == "eval") return run_eval(sub, eval);
        if (name == "retrieve") return run_retrieve(sub, retrieve_args);
        return run_gradcheck(sub, grad);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    }
}
