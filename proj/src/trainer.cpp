#include "hrge/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hrge/errors.hpp"
#include "hrge/ops.hpp"

namespace hrge {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, std::string_view key) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || end != tmp.c_str() + tmp.size()) throw DataError("bad value for '" + std::string(key) + "': " + tmp);
    return v;
}

std::size_t parse_size(std::string_view s, std::string_view key) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw DataError("bad value for '" + std::string(key) + "': " + std::string(s));
    return v;
}

template <class F>
void for_each_pair(std::string_view text, F&& f) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r')) ++pos;
        if (pos >= text.size()) break;
        std::size_t end = pos;
        while (end < text.size() && text[end] != ' ' && text[end] != '\t' && text[end] != '\n' && text[end] != '\r') ++end;
        const std::string_view tok = text.substr(pos, end - pos);
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) throw DataError("expected key=value, got '" + std::string(tok) + "'");
        f(tok.substr(0, eq), tok.substr(eq + 1));
        pos = end;
    }
}

} // namespace

ParamList Classifier::params() {
    ParamList out;
    head_.collect("head", out);
    return out;
}

Prediction predict(const HrgeModel& model, const Classifier& clf, const Matrix& views) {
    const GlobalDescriptor d = model.forward(views);
    require_dim(d.concatenated.size(), clf.input_dim(), "classifier input");
    const Matrix row(1, d.concatenated.size(), d.concatenated);
    const Matrix logits = clf.head().forward(row);
    Prediction p;
    p.logits.assign(logits.values().begin(), logits.values().end());
    p.label = argmax(p.logits);
    return p;
}

std::vector<std::size_t> predict_labels_serial(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds) {
    std::vector<std::size_t> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = predict(model, clf, ds.records[i].views).label;
    return out;
}

std::vector<std::size_t> predict_labels(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds) {
    std::vector<std::size_t> out(ds.size());
    const auto n = static_cast<std::ptrdiff_t>(ds.size());
    std::string error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = predict(model, clf, ds.records[static_cast<std::size_t>(i)].views).label;
        } catch (const std::exception& e) {
#pragma omp critical
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ShapeError(error);
    return out;
}

BatchResult forward_backward(HrgeModel& model, Classifier& clf, std::span<const Matrix* const> views,
                             std::span<const std::size_t> labels, bool backward) {
    require_dim(labels.size(), views.size(), "batch labels");
    if (views.empty()) throw EmptyInputError("forward_backward: empty batch");
    const std::size_t len = model.descriptor_length();
    require_dim(clf.input_dim(), len, "classifier input");

    std::vector<ForwardTrace> traces(views.size());
    Matrix desc(views.size(), len);
    for (std::size_t b = 0; b < views.size(); ++b) {
        const GlobalDescriptor d = model.forward(*views[b], traces[b]);
        std::copy(d.concatenated.begin(), d.concatenated.end(), desc.row(b).begin());
    }
    const Matrix logits = clf.head().forward(desc);
    const SoftmaxCrossEntropy ce = softmax_cross_entropy(logits, labels);

    BatchResult out;
    out.loss = ce.loss;
    for (std::size_t b = 0; b < views.size(); ++b)
        if (argmax(logits.row(b)) == labels[b]) ++out.correct;
    if (!backward) return out;

    const Matrix g_desc = clf.head().backward(desc, ce.grad);
    for (std::size_t b = 0; b < views.size(); ++b) model.backward(traces[b], g_desc.row(b));
    return out;
}

std::string format_log_record(const LogRecord& r) {
    return "kind=" + r.kind + " epoch=" + std::to_string(r.epoch) + " step=" + std::to_string(r.step) +
           " loss=" + fmt_double(r.loss) + " lr=" + fmt_double(r.lr) + " acc=" + fmt_double(r.accuracy);
}

LogRecord parse_log_record(std::string_view line) {
    LogRecord r;
    int seen = 0;
    for_each_pair(line, [&](std::string_view k, std::string_view v) {
        if (k == "kind") { r.kind = std::string(v); seen |= 1; }
        else if (k == "epoch") { r.epoch = parse_size(v, k); seen |= 2; }
        else if (k == "step") { r.step = parse_size(v, k); seen |= 4; }
        else if (k == "loss") { r.loss = parse_double(v, k); seen |= 8; }
        else if (k == "lr") { r.lr = parse_double(v, k); seen |= 16; }
        else if (k == "acc") { r.accuracy = parse_double(v, k); seen |= 32; }
        else throw DataError("unknown log key '" + std::string(k) + "'");
    });
    if (seen != 63) throw DataError("incomplete log record: " + std::string(line));
    return r;
}

TrainLog train(HrgeModel& model, Classifier& clf, const FeatureDataset& ds, const TrainConfig& cfg, std::ostream* sink) {
    if (ds.empty()) throw EmptyInputError("train: dataset is empty");
    if (cfg.batch_size == 0 || cfg.epochs == 0) throw ConfigError("train: batch size and epochs must be >= 1");
    if (clf.num_classes() < ds.num_classes) {
        throw ConfigError("train: classifier has " + std::to_string(clf.num_classes()) + " outputs, dataset has " +
                          std::to_string(ds.num_classes) + " classes");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.records[i].coarse_label >= clf.num_classes()) {
            throw LabelError("train: record " + std::to_string(i) + " label out of range");
        }
    }

    ParamList params = model.params();
    const ParamList head = clf.params();
    params.insert(params.end(), head.begin(), head.end());
    AdamState adam(params, cfg.optimizer);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);

    TrainLog log;
    std::size_t step = 0;
    auto emit = [&](const LogRecord& r) {
        if (sink) *sink << format_log_record(r) << '\n';
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.schedule.at(epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Matrix*> views;
            std::vector<std::size_t> labels;
            for (std::size_t k = start; k < end; ++k) {
                views.push_back(&ds.records[order[k]].views);
                labels.push_back(ds.records[order[k]].coarse_label);
            }
            zero_grads(params);
            const BatchResult res = forward_backward(model, clf, views, labels, true);
            if (!std::isfinite(res.loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch) + ": loss=" + fmt_double(res.loss));
            }
            adam.step(params, lr);
            const double n = static_cast<double>(end - start);
            loss_sum += res.loss * n;
            correct += res.correct;
            LogRecord rec{"step", epoch, step++, res.loss, lr, static_cast<double>(res.correct) / n};
            emit(rec);
            log.steps.push_back(std::move(rec));
        }
        const double total = static_cast<double>(order.size());
        LogRecord rec{"epoch", epoch, step, loss_sum / total, lr, static_cast<double>(correct) / total};
        emit(rec);
        log.epochs.push_back(std::move(rec));
    }
    return log;
}

AccuracyReport accuracy_from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                         std::size_t num_classes) {
    require_dim(predicted.size(), truth.size(), "accuracy predictions");
    if (truth.empty()) throw EmptyInputError("evaluate_accuracy: dataset is empty");
    std::vector<std::size_t> per_total(num_classes, 0);
    std::vector<std::size_t> per_correct(num_classes, 0);
    AccuracyReport r;
    r.total = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= num_classes) throw LabelError("label " + std::to_string(truth[i]) + " at index " + std::to_string(i));
        ++per_total[truth[i]];
        if (truth[i] == predicted[i]) {
            ++per_correct[truth[i]];
            ++r.correct;
        }
    }
    r.per_instance = static_cast<double>(r.correct) / static_cast<double>(r.total);
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (per_total[c] == 0) continue;
        sum += static_cast<double>(per_correct[c]) / static_cast<double>(per_total[c]);
        ++classes;
    }
    r.per_class = sum / static_cast<double>(classes);
    return r;
}

AccuracyReport evaluate_accuracy(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds) {
    if (ds.empty()) throw EmptyInputError("evaluate_accuracy: dataset is empty");
    const auto predicted = predict_labels(model, clf, ds);
    std::vector<std::size_t> truth(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) truth[i] = ds.records[i].coarse_label;
    return accuracy_from_predictions(truth, predicted, std::max(ds.num_classes, clf.num_classes()));
}

std::string format_accuracy_report(const AccuracyReport& r) {
    std::ostringstream out;
    out << "per_instance_acc=" << fmt_double(r.per_instance) << '\n'
        << "per_class_acc=" << fmt_double(r.per_class) << '\n'
        << "correct=" << r.correct << '\n'
        << "total=" << r.total << '\n';
    return out.str();
}

AccuracyReport parse_accuracy_report(std::string_view text) {
    AccuracyReport r;
    int seen = 0;
    for_each_pair(text, [&](std::string_view k, std::string_view v) {
        if (k == "per_instance_acc") { r.per_instance = parse_double(v, k); seen |= 1; }
        else if (k == "per_class_acc") { r.per_class = parse_double(v, k); seen |= 2; }
        else if (k == "correct") { r.correct = parse_size(v, k); seen |= 4; }
        else if (k == "total") { r.total = parse_size(v, k); seen |= 8; }
        else throw DataError("unknown report key '" + std::string(k) + "'");
    });
    if (seen != 15) throw DataError("incomplete accuracy report");
    return r;
}

} // namespace hrge
