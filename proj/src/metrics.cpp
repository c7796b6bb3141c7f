#include "hrge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "hrge/errors.hpp"

namespace hrge {

std::optional<double> average_precision(std::span<const std::uint8_t> flags, std::size_t relevant_total) {
    if (relevant_total == 0) return std::nullopt;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < flags.size(); ++k) {
        if (!flags[k]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return sum / static_cast<double>(relevant_total);
}

PrecisionRecall precision_recall_f1_at_n(std::span<const std::uint8_t> flags, std::size_t n, std::size_t relevant_total) {
    if (n == 0) throw ConfigError("precision_recall_f1_at_n: cutoff must be >= 1");
    PrecisionRecall r;
    const std::size_t inspected = std::min(n, flags.size());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < inspected; ++k) hits += flags[k] ? 1 : 0;
    if (inspected > 0) r.precision = static_cast<double>(hits) / static_cast<double>(inspected);
    if (relevant_total > 0) r.recall = static_cast<double>(hits) / static_cast<double>(relevant_total);
    if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

std::optional<double> ndcg(std::span<const std::uint8_t> flags, std::size_t relevant_total) {
    if (relevant_total == 0) return std::nullopt;
    double dcg = 0.0;
    for (std::size_t k = 0; k < flags.size(); ++k)
        if (flags[k]) dcg += 1.0 / std::log2(static_cast<double>(k) + 2.0);
    double ideal = 0.0;
    for (std::size_t k = 0; k < relevant_total; ++k) ideal += 1.0 / std::log2(static_cast<double>(k) + 2.0);
    return dcg / ideal;
}

std::optional<QueryMetrics> evaluate_query(std::span<const std::uint8_t> flags, std::size_t relevant_total) {
    if (relevant_total == 0) return std::nullopt;
    const PrecisionRecall pr = precision_recall_f1_at_n(flags, relevant_total, relevant_total);
    return QueryMetrics{pr.precision, pr.recall, pr.f1, *average_precision(flags, relevant_total),
                        *ndcg(flags, relevant_total)};
}

namespace {

void accumulate(QueryMetrics& acc, const QueryMetrics& q) {
    acc.precision += q.precision;
    acc.recall += q.recall;
    acc.f1 += q.f1;
    acc.map += q.map;
    acc.ndcg += q.ndcg;
}

QueryMetrics scaled(QueryMetrics q, double n) {
    q.precision /= n;
    q.recall /= n;
    q.f1 /= n;
    q.map /= n;
    q.ndcg /= n;
    return q;
}

} // namespace

MetricsReport aggregate(std::span<const QueryMetrics> per_query, std::span<const std::size_t> query_classes,
                        std::size_t skipped) {
    if (per_query.size() != query_classes.size()) throw ShapeError("aggregate: metrics and classes differ in length");
    MetricsReport r;
    r.evaluated = per_query.size();
    r.skipped = skipped;
    if (per_query.empty()) return r;
    std::map<std::size_t, std::pair<QueryMetrics, std::size_t>> by_class;
    for (std::size_t i = 0; i < per_query.size(); ++i) {
        accumulate(r.micro, per_query[i]);
        auto& slot = by_class[query_classes[i]];
        accumulate(slot.first, per_query[i]);
        ++slot.second;
    }
    r.micro = scaled(r.micro, static_cast<double>(per_query.size()));
    for (const auto& [cls, slot] : by_class) accumulate(r.macro, scaled(slot.first, static_cast<double>(slot.second)));
    r.classes = by_class.size();
    r.macro = scaled(r.macro, static_cast<double>(by_class.size()));
    return r;
}

std::string format_metrics_table(const MetricsReport& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s\n", "scope", "P@N", "R@N", "F1@N", "mAP", "NDCG");
    out << line;
    auto row = [&](const char* name, const QueryMetrics& q) {
        std::snprintf(line, sizeof line, "%-8s %8.2f %8.2f %8.2f %8.2f %8.2f\n", name, 100 * q.precision,
                      100 * q.recall, 100 * q.f1, 100 * q.map, 100 * q.ndcg);
        out << line;
    };
    row("micro", r.micro);
    row("macro", r.macro);
    out << "queries=" << r.evaluated << " skipped=" << r.skipped << " classes=" << r.classes << '\n';
    return out.str();
}

std::string format_metrics_tsv(const MetricsReport& r) {
    std::ostringstream out;
    out << "scope\tP@N\tR@N\tF1@N\tmAP\tNDCG\tqueries\tskipped\n";
    auto row = [&](const char* name, const QueryMetrics& q) {
        char line[256];
        std::snprintf(line, sizeof line, "%s\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%zu\t%zu\n", name, q.precision,
                      q.recall, q.f1, q.map, q.ndcg, r.evaluated, r.skipped);
        out << line;
    };
    row("micro", r.micro);
    row("macro", r.macro);
    return out.str();
}

MetricsReport parse_metrics_tsv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("scope\t", 0) != 0) throw DataError("metrics tsv: missing header");
    MetricsReport r;
    int seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string scope;
        QueryMetrics q;
        std::size_t evaluated = 0;
        std::size_t skipped = 0;
        if (!(ls >> scope >> q.precision >> q.recall >> q.f1 >> q.map >> q.ndcg >> evaluated >> skipped)) {
            throw DataError("metrics tsv: malformed line '" + line + "'");
        }
        r.evaluated = evaluated;
        r.skipped = skipped;
        if (scope == "micro") { r.micro = q; seen |= 1; }
        else if (scope == "macro") { r.macro = q; seen |= 2; }
        else throw DataError("metrics tsv: unknown scope '" + scope + "'");
    }
    if (seen != 3) throw DataError("metrics tsv: need micro and macro rows");
    return r;
}

} // namespace hrge
