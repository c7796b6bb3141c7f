#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hrge {

// Relevance of each retrieved item, in rank order (1 = same class as query).
using RelevanceFlags = std::vector<std::uint8_t>;

// Sum over relevant ranks k of precision@k, divided by relevant_total (relevant
// items never retrieved count as zero). nullopt when relevant_total is 0.
std::optional<double> average_precision(std::span<const std::uint8_t> flags, std::size_t relevant_total);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Cutoff at n. Precision divides by the number of items actually inspected,
// min(n, list length), so a thresholded short list is not penalised for
// items it chose not to return.
PrecisionRecall precision_recall_f1_at_n(std::span<const std::uint8_t> flags, std::size_t n, std::size_t relevant_total);

// Binary-gain DCG with 1/log2(1 + rank) discount over the full list, divided
// by the DCG of relevant_total hits at the top. nullopt when relevant_total is 0.
std::optional<double> ndcg(std::span<const std::uint8_t> flags, std::size_t relevant_total);

struct QueryMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double map = 0.0;
    double ndcg = 0.0;
};

// All metrics for one ranked list with N = relevant_total. nullopt when the
// query has no relevant items in the corpus.
std::optional<QueryMetrics> evaluate_query(std::span<const std::uint8_t> flags, std::size_t relevant_total);

struct MetricsReport {
    QueryMetrics micro;
    QueryMetrics macro;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // queries without relevant items
    std::size_t classes = 0;  // classes contributing to macro
};

// micro = mean over queries; macro = mean over classes of the per-class means.
MetricsReport aggregate(std::span<const QueryMetrics> per_query, std::span<const std::size_t> query_classes,
                        std::size_t skipped = 0);

std::string format_metrics_table(const MetricsReport& r);
// Header line plus one line per scope: scope P@N R@N F1@N mAP NDCG, tab-separated.
std::string format_metrics_tsv(const MetricsReport& r);
MetricsReport parse_metrics_tsv(const std::string& text);

} // namespace hrge
