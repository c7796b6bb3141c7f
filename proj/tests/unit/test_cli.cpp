#define DOCTEST_CONFIG_IMPLEMENT
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hrge/binary_io.hpp"
#include "hrge/dataset.hpp"
#include "hrge/metrics.hpp"
#include "hrge/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hrge;

namespace {

std::string g_hrge;
fs::path g_work;

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const fs::path log = g_work / "last_output.txt";
    const std::string cmd = "cd '" + g_work.string() + "' && '" + g_hrge + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(log);
    return r;
}

std::string slurp(const std::string& rel) { return io::read_file(g_work / rel); }

// Shared relational-order dataset, generated once.
const std::string& relational_data() {
    static const std::string path = [] {
        const Result r = run("synth --mode relational-order --classes 4 --per-class 20 --views 12 --dim 8 --seed 7 "
                             "--run-dir synth_rel");
        REQUIRE(r.code == 0);
        return std::string("synth_rel/dataset.hrgf");
    }();
    return path;
}

} // namespace

TEST_CASE("synth is deterministic and validates geometry") {
    const std::string args = "synth --mode relational-order --classes 4 --per-class 50 --views 12 --dim 32 --seed 7";
    REQUIRE(run(args + " --run-dir synth_a").code == 0);
    REQUIRE(run(args + " --run-dir synth_b").code == 0);
    CHECK(slurp("synth_a/dataset.hrgf") == slurp("synth_b/dataset.hrgf"));
    CHECK(slurp("synth_a/manifest.txt").find("mode=\"relational-order\"") != std::string::npos);
    const FeatureDataset ds = load_dataset(g_work / "synth_a/dataset.hrgf");
    CHECK(ds.size() == 200);
    CHECK(ds.views == 12);
    CHECK(ds.dim == 32);

    const Result bad = run("synth --views 10 --stride 2 --depth 2 --run-dir synth_bad");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("10") != std::string::npos);
    CHECK(run("synth --mode sideways --run-dir synth_bad").code == 2);
    CHECK(run("synth --classes").code == 2);
}

TEST_CASE("train is reproducible and writes its run directory") {
    const std::string args = "train --data " + relational_data() + " --lr 1e-2 --batch 16 --epochs 3 --seed 5";
    REQUIRE(run(args + " --run-dir train_a").code == 0);
    REQUIRE(run(args + " --run-dir train_b").code == 0);
    CHECK(slurp("train_a/model.hrgm") == slurp("train_b/model.hrgm"));
    CHECK(slurp("train_a/train_log.txt") == slurp("train_b/train_log.txt"));
    for (const char* f : {"manifest.txt", "model.hrgm.manifest.txt", "accuracy.txt", "train_split.hrgf", "test_split.hrgf"})
        CHECK(fs::exists(g_work / "train_a" / f));
    const std::string manifest = slurp("train_a/manifest.txt");
    CHECK(manifest.find("lr=1e-2") != std::string::npos);
    CHECK(manifest.find("batch=16") != std::string::npos);
    CHECK(manifest.find("wd=0.001") != std::string::npos);
    (void)parse_accuracy_report(slurp("train_a/accuracy.txt"));
}

TEST_CASE("train defaults: batch 72, lr 1e-5 halved every 20 epochs") {
    const Result r = run("train --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("--batch") != std::string::npos);
    REQUIRE(run("train --data " + relational_data() + " --epochs 1 --run-dir train_defaults").code == 0);
    const std::string manifest = slurp("train_defaults/manifest.txt");
    CHECK(manifest.find("batch=72") != std::string::npos);
    CHECK(manifest.find("lr=1e-05") != std::string::npos);
    CHECK(manifest.find("period=20") != std::string::npos);
    CHECK(manifest.find("decay=0.5") != std::string::npos);
}

TEST_CASE("zero learning rate gives a flat loss log") {
    REQUIRE(run("train --data " + relational_data() + " --lr 0 --batch 16 --epochs 3 --run-dir train_flat").code == 0);
    std::istringstream in(slurp("train_flat/train_log.txt"));
    std::string line;
    std::vector<double> losses;
    while (std::getline(in, line)) {
        const LogRecord r = parse_log_record(line);
        if (r.kind == "epoch") losses.push_back(r.loss);
    }
    REQUIRE(losses.size() == 3);
    CHECK(losses[0] == losses[1]);
    CHECK(losses[1] == losses[2]);
}

TEST_CASE("config file precedence") {
    std::ofstream(g_work / "train.cfg") << "# flat config\nlr=0\nepochs=2\nbatch=40\n";
    REQUIRE(run("train --config train.cfg --data " + relational_data() + " --batch 16 --run-dir train_cfg").code == 0);
    const std::string manifest = slurp("train_cfg/manifest.txt");
    CHECK(manifest.find("batch=16") != std::string::npos);
    CHECK(manifest.find("epochs=2") != std::string::npos);
    CHECK(manifest.find("lr=0") != std::string::npos);

    // the manifest is itself a valid config
    REQUIRE(run("train --config train_cfg/manifest.txt --run-dir train_cfg2").code == 0);
    CHECK(slurp("train_cfg/model.hrgm") == slurp("train_cfg2/model.hrgm"));

    std::ofstream(g_work / "bad.cfg") << "learning_rate=1\n";
    const Result bad = run("train --config bad.cfg --data " + relational_data() + " --run-dir train_badcfg");
    CHECK(bad.code == 2);
    CHECK(bad.out.find("learning_rate") != std::string::npos);
    CHECK(run("train --config nowhere.cfg --data " + relational_data()).code == 2);
}

TEST_CASE("train usage and data errors") {
    CHECK(run("train --run-dir train_err").code == 2);
    CHECK(run("train --data " + relational_data() + " --variant attention --run-dir train_err").code == 2);
    CHECK(run("train --data " + relational_data() + " --depth 3 --run-dir train_err").code == 2);
    CHECK(run("train --data missing.hrgf --run-dir train_err").code == 3);
    std::ofstream(g_work / "junk.hrgf") << "not a dataset";
    const Result junk = run("train --data junk.hrgf --run-dir train_err");
    CHECK(junk.code == 3);
    CHECK(junk.out.find("byte offset") != std::string::npos);
}

TEST_CASE("eval on a memorised single shape") {
    FeatureDataset ds;
    ds.num_classes = 2;
    ds.views = 4;
    ds.dim = 32;
    ds.records.push_back({"only", oracle::random_matrix(4, 32, 3), 1, std::nullopt});
    save_dataset(ds, g_work / "single.hrgf");
    REQUIRE(run("train --data single.hrgf --test-data single.hrgf --depth 1 --lr 1e-2 --batch 1 --epochs 200 "
                "--period 1000 --wd 0 --run-dir mem")
                .code == 0);
    const Result r = run("eval --checkpoint mem/model.hrgm --data single.hrgf --run-dir mem_eval");
    REQUIRE(r.code == 0);
    const AccuracyReport acc = parse_accuracy_report(slurp("mem_eval/accuracy.txt"));
    CHECK(acc.per_instance == 1.0);
    CHECK(acc.per_class == 1.0);
    CHECK(parse_accuracy_report(r.out).total == 1);

    CHECK(run("eval --checkpoint mem/model.hrgm --data '' --run-dir mem_eval").code == 2);
    CHECK(run("eval --checkpoint mem/model.hrgm --run-dir mem_eval").code == 2);
    CHECK(run("eval --checkpoint mem/model.hrgm --data " + relational_data() + " --run-dir mem_eval").code == 3);
}

TEST_CASE("retrieve reports") {
    REQUIRE(run("train --data " + relational_data() + " --lr 1e-2 --batch 16 --epochs 10 --seed 1 --run-dir ret_model")
                .code == 0);
    const std::string base =
        "retrieve --checkpoint ret_model/model.hrgm --corpus ret_model/train_split.hrgf --queries ret_model/test_split.hrgf";
    REQUIRE(run(base + " --run-dir ret_inf").code == 0);
    REQUIRE(run(base + " --tau inf --run-dir ret_inf2").code == 0);
    CHECK(slurp("ret_inf/metrics.tsv") == slurp("ret_inf2/metrics.tsv"));
    CHECK(slurp("ret_inf/ranked_lists.tsv") == slurp("ret_inf2/ranked_lists.tsv"));

    const std::string table = slurp("ret_inf/metrics.txt");
    CHECK(table.find("micro") != std::string::npos);
    CHECK(table.find("macro") != std::string::npos);
    const MetricsReport rep = parse_metrics_tsv(slurp("ret_inf/metrics.tsv"));
    CHECK(rep.evaluated == 24);

    // recompute the micro block from the ranked lists with the brute-force evaluator
    const FeatureDataset corpus = load_dataset(g_work / "ret_model/train_split.hrgf");
    const FeatureDataset queries = load_dataset(g_work / "ret_model/test_split.hrgf");
    std::map<std::string, std::size_t> label;
    for (const auto& r : corpus.records) label[r.id] = r.coarse_label;
    std::map<std::string, std::size_t> qlabel;
    for (const auto& r : queries.records) qlabel[r.id] = r.coarse_label;
    std::map<std::string, std::vector<int>> flags;
    std::istringstream in(slurp("ret_inf/ranked_lists.tsv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::istringstream f(line);
        std::string q, rank, id, dist, rel;
        f >> q >> rank >> id >> dist >> rel;
        flags[q].push_back(label.at(id) == qlabel.at(q) ? 1 : 0);
    }
    double map = 0.0;
    double nd = 0.0;
    for (const auto& [q, fl] : flags) {
        std::size_t total = 0;
        for (const auto& r : corpus.records) total += r.coarse_label == qlabel.at(q);
        const auto b = oracle::brute_metrics(fl, total);
        map += b.ap;
        nd += b.ndcg;
    }
    CHECK(flags.size() == 24);
    CHECK(std::abs(map / 24 - rep.micro.map) <= 1e-9);
    CHECK(std::abs(nd / 24 - rep.micro.ndcg) <= 1e-9);

    const Result autotau = run(base + " --tau auto --run-dir ret_auto");
    CHECK(autotau.code == 0);
    CHECK(autotau.out.find("tau=") != std::string::npos);
    CHECK(fs::exists(g_work / "ret_auto/index.hrgi"));
    CHECK(run(base + " --tau -1 --run-dir ret_bad").code == 2);
    CHECK(run(base + " --tau soon --run-dir ret_bad").code == 2);
    CHECK(run("retrieve --checkpoint ret_model/model.hrgm --run-dir ret_bad").code == 2);
}

TEST_CASE("gradcheck command") {
    const Result ok = run("gradcheck --run-dir gc_ok");
    CHECK(ok.code == 0);
    CHECK(ok.out.find("result=PASS") != std::string::npos);
    for (const char* block : {"level0.pairwise", "level0.fusion", "level0.neighboring", "head.weight", "head.bias"})
        CHECK(ok.out.find(block) != std::string::npos);
    CHECK(slurp("gc_ok/gradcheck.txt") == ok.out);

    const Result bad = run("gradcheck --corrupt --run-dir gc_bad");
    CHECK(bad.code == 4);
    CHECK(bad.out.find("result=FAIL") != std::string::npos);

    CHECK(run("gradcheck --views 6 --depth 2 --run-dir gc_geo").code == 2);
}

int main(int argc, char** argv) {
    std::vector<char*> rest;
    for (int i = 0; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--hrge=", 0) == 0) g_hrge = a.substr(7);
        else if (a.rfind("--workdir=", 0) == 0) g_work = a.substr(10);
        else rest.push_back(argv[i]);
    }
    if (g_hrge.empty() || g_work.empty()) {
        std::fprintf(stderr, "usage: test_cli --hrge=<path to hrge> --workdir=<scratch dir> [doctest options]\n");
        return 2;
    }
    g_hrge = fs::absolute(g_hrge).string();
    g_work = fs::absolute(g_work);
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    doctest::Context ctx(static_cast<int>(rest.size()), rest.data());
    return ctx.run();
}
