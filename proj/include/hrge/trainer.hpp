#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrge/dataset.hpp"
#include "hrge/layers.hpp"
#include "hrge/model.hpp"
#include "hrge/optim.hpp"

namespace hrge {

// Fully connected label predictor on top of the global descriptor.
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t descriptor_length, std::size_t num_classes) : head_(descriptor_length, num_classes) {}

    void init(std::mt19937_64& rng) { head_.init(rng); }
    std::size_t input_dim() const { return head_.in_dim(); }
    std::size_t num_classes() const { return head_.out_dim(); }

    LinearLayer& head() noexcept { return head_; }
    const LinearLayer& head() const noexcept { return head_; }
    ParamList params();

private:
    LinearLayer head_;
};

struct Prediction {
    Vector logits;
    std::size_t label = 0;
};

Prediction predict(const HrgeModel& model, const Classifier& clf, const Matrix& views);

// Predicted label of every record. The parallel version fans out over shapes
// against the read-only model.
std::vector<std::size_t> predict_labels_serial(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds);
std::vector<std::size_t> predict_labels(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds);

struct BatchResult {
    double loss = 0.0;
    std::size_t correct = 0;
};

// Mean cross-entropy over the batch. With backward set, gradients of that loss
// are accumulated into the model and classifier buffers (not zeroed here).
BatchResult forward_backward(HrgeModel& model, Classifier& clf, std::span<const Matrix* const> views,
                             std::span<const std::size_t> labels, bool backward);

// Defaults: Adam with weight decay 1e-3, batch 72, 60 epochs, lr 1e-5 halved every 20 epochs.
// The optimizer lr field is ignored; schedule.initial_lr drives training.
struct TrainConfig {
    std::size_t batch_size = 72;
    std::size_t epochs = 60;
    AdamConfig optimizer{};
    LrSchedule schedule{};
    std::uint64_t seed = 0;
};

// One line of the training log: `kind=step epoch=0 step=3 loss=... lr=... acc=...`.
struct LogRecord {
    std::string kind;  // "step" or "epoch"
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

std::string format_log_record(const LogRecord& r);
LogRecord parse_log_record(std::string_view line);

struct TrainLog {
    std::vector<LogRecord> steps;
    std::vector<LogRecord> epochs;
};

// Mini-batch training with a per-epoch shuffle driven by cfg.seed. The last
// partial batch is kept. Each record is also written to sink when given.
TrainLog train(HrgeModel& model, Classifier& clf, const FeatureDataset& ds, const TrainConfig& cfg,
               std::ostream* sink = nullptr);

struct AccuracyReport {
    double per_instance = 0.0;
    double per_class = 0.0;  // unweighted mean over classes that have samples
    std::size_t correct = 0;
    std::size_t total = 0;
};

AccuracyReport accuracy_from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                         std::size_t num_classes);
AccuracyReport evaluate_accuracy(const HrgeModel& model, const Classifier& clf, const FeatureDataset& ds);

std::string format_accuracy_report(const AccuracyReport& r);
AccuracyReport parse_accuracy_report(std::string_view text);

} // namespace hrge
