#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrge/dataset.hpp"
#include "hrge/matrix.hpp"
#include "hrge/metrics.hpp"
#include "hrge/model.hpp"

namespace hrge {

inline constexpr std::string_view kIndexMagic = "HRGI";
inline constexpr double kNoThreshold = std::numeric_limits<double>::infinity();

// l2_normalize of the concatenated global descriptor.
Vector extract_descriptor(const HrgeModel& model, const Matrix& views);

// One descriptor per record, row i for record i.
Matrix extract_descriptors_serial(const HrgeModel& model, const FeatureDataset& ds);
Matrix extract_descriptors(const HrgeModel& model, const FeatureDataset& ds);

struct DescriptorIndex {
    std::vector<std::string> ids;
    std::vector<std::size_t> coarse;
    std::vector<std::optional<std::size_t>> fine;
    Matrix descriptors;  // unit-norm rows
    std::size_t num_classes = 0;
    std::size_t num_fine_classes = 0;

    std::size_t size() const noexcept { return ids.size(); }
};

DescriptorIndex build_index(const HrgeModel& model, const FeatureDataset& ds);

// Stored as an HRGF-layout container with magic HRGI, N = 1 and D = descriptor length.
void save_index(const DescriptorIndex& index, const std::filesystem::path& path);
DescriptorIndex load_index(const std::filesystem::path& path);

struct Query {
    std::string id;
    Vector descriptor;
    std::size_t coarse_label = 0;
};

struct RankedItem {
    std::size_t index = 0;  // row in the DescriptorIndex
    double distance = 0.0;
    bool relevant = false;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedItem> items;
    std::size_t relevant_total = 0;  // corpus items sharing the query's class, query excluded

    RelevanceFlags flags() const;
};

// Predicted fine labels used for re-ranking: one per index row plus the query's.
struct FineLabels {
    std::span<const std::size_t> corpus;
    std::size_t query = 0;
};

// Ascending L2 distance (ties by index order), query id excluded, entries
// farther than tau dropped; with fine labels the survivors sharing the query's
// fine label are moved to the front, order kept inside both groups.
RankedList retrieve(const DescriptorIndex& index, const Query& query, double tau = kNoThreshold,
                    std::optional<FineLabels> fine = std::nullopt);
// Same, from a precomputed row of distances to every index entry.
RankedList rank_from_distances(const DescriptorIndex& index, const Query& query, std::span<const double> distances,
                               double tau, std::optional<FineLabels> fine);

struct RetrievalRun {
    std::vector<RankedList> lists;
    std::vector<QueryMetrics> per_query;
    std::vector<std::size_t> query_classes;
    std::vector<std::string> notes;
    MetricsReport report;
};

// Ranks every query against the index and aggregates the metric suite.
// query_fine, when given, holds one predicted fine label per query and
// corpus_fine one per index row.
RetrievalRun run_retrieval(const DescriptorIndex& index, std::span<const Query> queries, double tau,
                           std::span<const std::size_t> corpus_fine = {}, std::span<const std::size_t> query_fine = {});

// Candidate threshold maximising micro F1@N; first (smallest) wins ties.
double sweep_threshold(const DescriptorIndex& index, std::span<const Query> queries, std::span<const double> candidates,
                       std::span<const std::size_t> corpus_fine = {}, std::span<const std::size_t> query_fine = {});
std::vector<double> default_threshold_candidates();

std::string format_ranked_lists(const DescriptorIndex& index, std::span<const RankedList> lists);

} // namespace hrge
