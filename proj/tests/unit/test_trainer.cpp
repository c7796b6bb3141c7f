#include <sstream>

#include "doctest.h"
#include "hrge/errors.hpp"
#include "hrge/synthetic.hpp"
#include "hrge/trainer.hpp"
#include "oracles.hpp"

using namespace hrge;

namespace {

struct Setup {
    HrgeModel model;
    Classifier clf;
};

Setup make(std::size_t views, std::size_t width, std::size_t classes, Variant v, std::uint64_t seed) {
    ModelGeometry g;
    g.views = views;
    g.width = width;
    g.depth = 1;
    Setup s{HrgeModel(g, apply_variant(v, 1)), {}};
    std::mt19937_64 rng(seed);
    s.model.init(rng);
    s.clf = Classifier(s.model.descriptor_length(), classes);
    s.clf.init(rng);
    return s;
}

FeatureDataset tiny_data(std::size_t per_class, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.per_class = per_class;
    spec.views = 4;
    spec.dim = 4;
    spec.noise = 0.1;
    spec.seed = seed;
    return generate_synthetic(spec);
}

} // namespace

TEST_CASE("predict is the argmax of the head applied to the descriptor") {
    Setup s = make(4, 3, 3, Variant::full, 1);
    const Matrix x = oracle::random_matrix(4, 3, 2);
    const Prediction p = predict(s.model, s.clf, x);
    const auto ref = oracle::apply_linear(s.clf.head(), s.model.forward(x).concatenated);
    for (std::size_t k = 0; k < 3; ++k) CHECK(p.logits[k] == doctest::Approx(ref[k]).epsilon(1e-14));
    CHECK(p.label == argmax(p.logits));

    const FeatureDataset ds = tiny_data(5, 3);
    Setup t = make(4, 4, 3, Variant::full, 3);
    CHECK(predict_labels(t.model, t.clf, ds) == predict_labels_serial(t.model, t.clf, ds));
}

TEST_CASE("zero learning rate leaves the model and the loss unchanged") {
    Setup s = make(4, 4, 3, Variant::full, 5);
    const FeatureDataset ds = tiny_data(4, 5);
    const Vector before = s.model.forward(ds.records[0].views).concatenated;
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.schedule.initial_lr = 0.0;
    cfg.optimizer.weight_decay = 1e-3;
    const TrainLog log = train(s.model, s.clf, ds, cfg);
    CHECK(log.epochs.size() == 3);
    CHECK(log.steps.size() == 9);
    CHECK(log.epochs[0].loss == log.epochs[1].loss);
    CHECK(log.epochs[1].loss == log.epochs[2].loss);
    CHECK(s.model.forward(ds.records[0].views).concatenated == before);
}

TEST_CASE("a single shape is memorised") {
    Setup s = make(4, 32, 2, Variant::full, 9);
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.per_class = 1;
    spec.views = 4;
    spec.dim = 32;
    spec.seed = 9;
    FeatureDataset ds = generate_synthetic(spec);
    ds.records.resize(1);
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.epochs = 200;
    cfg.schedule.initial_lr = 1e-2;
    cfg.schedule.decay_period = 1000;
    cfg.optimizer.weight_decay = 0.0;
    const TrainLog log = train(s.model, s.clf, ds, cfg);
    CHECK(log.steps.size() == 200);
    const Matrix* only[] = {&ds.records[0].views};
    const std::size_t label[] = {ds.records[0].coarse_label};
    const double final_loss = forward_backward(s.model, s.clf, only, label, false).loss;
    CHECK(final_loss < 1e-3);
    CHECK(final_loss < log.epochs.front().loss);
    CHECK(predict(s.model, s.clf, ds.records[0].views).label == ds.records[0].coarse_label);
}

TEST_CASE("training config defaults") {
    const TrainConfig cfg;
    CHECK(cfg.batch_size == 72);
    CHECK(cfg.epochs == 60);
    CHECK(cfg.schedule.initial_lr == 1e-5);
    CHECK(cfg.schedule.decay_factor == 0.5);
    CHECK(cfg.schedule.decay_period == 20);
    CHECK(cfg.optimizer.weight_decay == 1e-3);
    CHECK(cfg.optimizer.beta1 == 0.9);
    CHECK(cfg.optimizer.beta2 == 0.999);
    CHECK(cfg.optimizer.eps == 1e-8);
}

TEST_CASE("learning rate follows the staircase during training") {
    Setup s = make(4, 4, 3, Variant::full, 1);
    const FeatureDataset ds = tiny_data(2, 1);
    TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.epochs = 5;
    cfg.schedule = {1e-3, 0.5, 2};
    const TrainLog log = train(s.model, s.clf, ds, cfg);
    const double expect[] = {1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4};
    for (std::size_t e = 0; e < 5; ++e) CHECK(log.epochs[e].lr == expect[e]);
}

TEST_CASE("accuracy reports") {
    SUBCASE("class imbalance separates the two accuracies") {
        std::vector<std::size_t> truth(10, 0);
        truth[9] = 1;
        const std::vector<std::size_t> pred(10, 0);
        const AccuracyReport r = accuracy_from_predictions(truth, pred, 2);
        CHECK(r.per_instance == doctest::Approx(0.9));
        CHECK(r.per_class == doctest::Approx(0.5));
        CHECK(r.correct == 9);
        CHECK(r.total == 10);
    }
    SUBCASE("classes without samples are skipped") {
        const std::vector<std::size_t> truth{0, 0, 2};
        const std::vector<std::size_t> pred{0, 1, 2};
        const AccuracyReport r = accuracy_from_predictions(truth, pred, 3);
        CHECK(r.per_class == doctest::Approx(0.75));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(accuracy_from_predictions({}, {}, 2), EmptyInputError);
        const std::vector<std::size_t> bad{5};
        CHECK_THROWS_AS(accuracy_from_predictions(bad, bad, 2), LabelError);
    }
    SUBCASE("text round trip") {
        const AccuracyReport r{0.8125, 0.65, 13, 16};
        const AccuracyReport back = parse_accuracy_report(format_accuracy_report(r));
        CHECK(back.per_instance == r.per_instance);
        CHECK(back.per_class == r.per_class);
        CHECK(back.correct == 13);
        CHECK(back.total == 16);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    const FeatureDataset ds = tiny_data(4, 2);
    TrainConfig cfg;
    cfg.batch_size = 5;
    cfg.epochs = 3;
    cfg.schedule.initial_lr = 1e-2;
    cfg.seed = 7;
    std::ostringstream la;
    std::ostringstream lb;
    Setup a = make(4, 4, 3, Variant::full, 2);
    Setup b = make(4, 4, 3, Variant::full, 2);
    (void)train(a.model, a.clf, ds, cfg, &la);
    (void)train(b.model, b.clf, ds, cfg, &lb);
    CHECK(la.str() == lb.str());
    CHECK(a.model.forward(ds.records[0].views).concatenated == b.model.forward(ds.records[0].views).concatenated);
}

TEST_CASE("property: a small learning rate lowers the epoch loss on separable data") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        const FeatureDataset ds = tiny_data(4, 100 + seed);
        Setup s = make(4, 4, 3, Variant::full, seed);
        TrainConfig cfg;
        cfg.batch_size = ds.size();
        cfg.epochs = 30;
        cfg.schedule.initial_lr = 1e-3;
        cfg.optimizer.weight_decay = 0.0;
        const TrainLog log = train(s.model, s.clf, ds, cfg);
        CHECK(log.epochs.back().loss < log.epochs.front().loss);
    }
}

TEST_CASE("log records round trip") {
    const LogRecord r{"step", 3, 17, 0.123456789012345, 2.5e-4, 0.75};
    const std::string line = format_log_record(r);
    CHECK(line.starts_with("kind=step epoch=3 step=17 loss="));
    CHECK(parse_log_record(line) == r);
    CHECK_THROWS_AS(parse_log_record("kind=step epoch=1"), DataError);

    Setup s = make(4, 4, 3, Variant::full, 1);
    const FeatureDataset ds = tiny_data(2, 1);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    std::ostringstream out;
    const TrainLog log = train(s.model, s.clf, ds, cfg, &out);
    std::istringstream in(out.str());
    std::string line2;
    std::size_t n = 0;
    while (std::getline(in, line2)) {
        const LogRecord p = parse_log_record(line2);
        if (p.kind == "epoch") CHECK(p == log.epochs[p.epoch]);
        ++n;
    }
    CHECK(n == log.steps.size() + log.epochs.size());
}

TEST_CASE("training input errors") {
    Setup s = make(4, 4, 3, Variant::full, 1);
    FeatureDataset empty;
    CHECK_THROWS_AS(train(s.model, s.clf, empty, TrainConfig{}), EmptyInputError);
    FeatureDataset ds = tiny_data(2, 1);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(s.model, s.clf, ds, cfg), ConfigError);
    cfg.batch_size = 2;
    for (double& v : ds.records[1].views.values()) v = 1e308;
    cfg.epochs = 1;
    std::string what;
    try {
        (void)train(s.model, s.clf, ds, cfg);
    } catch (const NumericError& e) {
        what = e.what();
    }
    CHECK(what.find("epoch 0") != std::string::npos);
    CHECK(what.find("batch") != std::string::npos);
}
