#include "hrge/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hrge/binary_io.hpp"
#include "hrge/errors.hpp"
#include "hrge/kernels.hpp"
#include "hrge/ops.hpp"

namespace hrge {

Vector extract_descriptor(const HrgeModel& model, const Matrix& views) {
    const GlobalDescriptor d = model.forward(views);
    return l2_normalize(d.concatenated).values;
}

Matrix extract_descriptors_serial(const HrgeModel& model, const FeatureDataset& ds) {
    Matrix out(ds.size(), model.descriptor_length());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Vector d = extract_descriptor(model, ds.records[i].views);
        std::copy(d.begin(), d.end(), out.row(i).begin());
    }
    return out;
}

Matrix extract_descriptors(const HrgeModel& model, const FeatureDataset& ds) {
    Matrix out(ds.size(), model.descriptor_length());
    const auto n = static_cast<std::ptrdiff_t>(ds.size());
    std::string error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto ui = static_cast<std::size_t>(i);
            const Vector d = extract_descriptor(model, ds.records[ui].views);
            std::copy(d.begin(), d.end(), out.row(ui).begin());
        } catch (const std::exception& e) {
#pragma omp critical
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ShapeError(error);
    return out;
}

DescriptorIndex build_index(const HrgeModel& model, const FeatureDataset& ds) {
    if (ds.empty()) throw EmptyInputError("build_index: dataset is empty");
    DescriptorIndex idx;
    idx.descriptors = extract_descriptors(model, ds);
    idx.num_classes = ds.num_classes;
    idx.num_fine_classes = ds.num_fine_classes;
    for (const auto& r : ds.records) {
        idx.ids.push_back(r.id);
        idx.coarse.push_back(r.coarse_label);
        idx.fine.push_back(r.fine_label);
    }
    return idx;
}

void save_index(const DescriptorIndex& index, const std::filesystem::path& path) {
    FeatureDataset ds;
    ds.num_classes = index.num_classes;
    ds.num_fine_classes = index.num_fine_classes;
    ds.views = 1;
    ds.dim = index.descriptors.cols();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto row = index.descriptors.row(i);
        ds.records.push_back({index.ids[i], Matrix(1, row.size(), Vector(row.begin(), row.end())), index.coarse[i],
                              index.fine[i]});
    }
    io::write_file(path, encode_dataset(ds, kIndexMagic));
}

DescriptorIndex load_index(const std::filesystem::path& path) {
    FeatureDataset ds;
    try {
        ds = decode_dataset(io::read_file(path), kIndexMagic);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (ds.views != 1) throw DataError(path.string() + ": index records must hold one descriptor row");
    DescriptorIndex idx;
    idx.num_classes = ds.num_classes;
    idx.num_fine_classes = ds.num_fine_classes;
    idx.descriptors = Matrix(ds.size(), ds.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& r = ds.records[i];
        std::copy(r.views.values().begin(), r.views.values().end(), idx.descriptors.row(i).begin());
        idx.ids.push_back(std::move(r.id));
        idx.coarse.push_back(r.coarse_label);
        idx.fine.push_back(r.fine_label);
    }
    return idx;
}

RelevanceFlags RankedList::flags() const {
    RelevanceFlags f(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) f[k] = items[k].relevant ? 1 : 0;
    return f;
}

RankedList rank_from_distances(const DescriptorIndex& index, const Query& query, std::span<const double> distances,
                               double tau, std::optional<FineLabels> fine) {
    if (index.size() == 0) throw EmptyInputError("retrieve: index is empty");
    if (!(tau > 0.0)) throw ConfigError("retrieve: threshold must be positive");
    require_dim(distances.size(), index.size(), "retrieve distances");
    if (fine) require_dim(fine->corpus.size(), index.size(), "retrieve fine labels");

    RankedList list;
    list.query_id = query.id;
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index.ids[i] == query.id) continue;
        const bool relevant = index.coarse[i] == query.coarse_label;
        if (relevant) ++list.relevant_total;
        if (distances[i] > tau) continue;
        list.items.push_back({i, distances[i], relevant});
    }
    std::stable_sort(list.items.begin(), list.items.end(),
                     [](const RankedItem& a, const RankedItem& b) { return a.distance < b.distance; });
    if (fine) {
        std::stable_partition(list.items.begin(), list.items.end(),
                              [&](const RankedItem& it) { return fine->corpus[it.index] == fine->query; });
    }
    return list;
}

RankedList retrieve(const DescriptorIndex& index, const Query& query, double tau, std::optional<FineLabels> fine) {
    if (index.size() == 0) throw EmptyInputError("retrieve: index is empty");
    require_dim(query.descriptor.size(), index.descriptors.cols(), "query descriptor");
    const Matrix q(1, query.descriptor.size(), query.descriptor);
    const Matrix d = kernels::distances(q, index.descriptors);
    return rank_from_distances(index, query, d.row(0), tau, fine);
}

RetrievalRun run_retrieval(const DescriptorIndex& index, std::span<const Query> queries, double tau,
                           std::span<const std::size_t> corpus_fine, std::span<const std::size_t> query_fine) {
    if (index.size() == 0) throw EmptyInputError("retrieve: index is empty");
    const bool rerank = !query_fine.empty();
    if (rerank) {
        require_dim(query_fine.size(), queries.size(), "query fine labels");
        require_dim(corpus_fine.size(), index.size(), "corpus fine labels");
    }
    Matrix qmat(queries.size(), index.descriptors.cols());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        require_dim(queries[i].descriptor.size(), index.descriptors.cols(), "query descriptor");
        std::copy(queries[i].descriptor.begin(), queries[i].descriptor.end(), qmat.row(i).begin());
    }
    const Matrix dist = kernels::distances(qmat, index.descriptors);

    RetrievalRun run;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::optional<FineLabels> fine;
        if (rerank) fine = FineLabels{corpus_fine, query_fine[i]};
        RankedList list = rank_from_distances(index, queries[i], dist.row(i), tau, fine);
        const auto m = evaluate_query(list.flags(), list.relevant_total);
        if (m) {
            run.per_query.push_back(*m);
            run.query_classes.push_back(queries[i].coarse_label);
        } else {
            ++skipped;
            run.notes.push_back("query " + queries[i].id + " skipped: no relevant items in corpus");
        }
        run.lists.push_back(std::move(list));
    }
    run.report = aggregate(run.per_query, run.query_classes, skipped);
    return run;
}

double sweep_threshold(const DescriptorIndex& index, std::span<const Query> queries, std::span<const double> candidates,
                       std::span<const std::size_t> corpus_fine, std::span<const std::size_t> query_fine) {
    if (candidates.empty()) throw ConfigError("sweep_threshold: no candidates");
    double best_tau = candidates.front();
    double best_f1 = -1.0;
    for (double tau : candidates) {
        const RetrievalRun run = run_retrieval(index, queries, tau, corpus_fine, query_fine);
        if (run.report.micro.f1 > best_f1) {
            best_f1 = run.report.micro.f1;
            best_tau = tau;
        }
    }
    return best_tau;
}

std::vector<double> default_threshold_candidates() {
    // Unit-norm descriptors are at most 2 apart.
    std::vector<double> c;
    for (int k = 1; k <= 40; ++k) c.push_back(0.05 * k);
    c.push_back(kNoThreshold);
    return c;
}

std::string format_ranked_lists(const DescriptorIndex& index, std::span<const RankedList> lists) {
    std::ostringstream out;
    out << "query\trank\tid\tdistance\trelevant\n";
    for (const auto& l : lists) {
        for (std::size_t k = 0; k < l.items.size(); ++k) {
            char dist[32];
            std::snprintf(dist, sizeof dist, "%.17g", l.items[k].distance);
            out << l.query_id << '\t' << k + 1 << '\t' << index.ids[l.items[k].index] << '\t' << dist << '\t'
                << (l.items[k].relevant ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

} // namespace hrge
