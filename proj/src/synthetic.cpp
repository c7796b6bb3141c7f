#include "hrge/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

#include "hrge/errors.hpp"

namespace hrge {

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = sigma * dist(rng);
    return m;
}

void add_noise(Matrix& m, double sigma, std::mt19937_64& rng) {
    if (sigma == 0.0) return;
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : m.values()) v += dist(rng);
}

std::string shape_id(std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shape_%05zu", n);
    return buf;
}

bool is_rotation_of(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const std::size_t n = a.size();
    for (std::size_t s = 0; s < n; ++s) {
        bool same = true;
        for (std::size_t i = 0; i < n && same; ++i) same = a[i] == b[(i + s) % n];
        if (same) return true;
    }
    return false;
}

// Distinct ring orders, no two related by a cyclic rotation.
std::vector<std::vector<std::size_t>> class_orders(std::size_t classes, std::size_t views, std::mt19937_64& rng) {
    std::vector<std::vector<std::size_t>> orders;
    std::vector<std::size_t> perm(views);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t attempts = 0;
    while (orders.size() < classes) {
        if (++attempts > 10000 * classes) throw ConfigError("synthetic: cannot find enough distinct view orders");
        std::shuffle(perm.begin(), perm.end(), rng);
        const bool clash = std::any_of(orders.begin(), orders.end(), [&](const auto& o) { return is_rotation_of(o, perm); });
        if (!clash) orders.push_back(perm);
    }
    return orders;
}

} // namespace

SyntheticKind parse_synthetic_kind(std::string_view name) {
    if (name == "prototype") return SyntheticKind::prototype;
    if (name == "relational-order" || name == "relational_order") return SyntheticKind::relational_order;
    throw ConfigError("unknown synthetic mode '" + std::string(name) + "' (expected prototype or relational-order)");
}

FeatureDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes == 0 || spec.per_class == 0) throw ConfigError("synthetic: classes and per-class count must be positive");
    if (spec.views == 0 || spec.dim == 0) throw ConfigError("synthetic: views and dim must be positive");
    if (!(spec.noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
    if (spec.kind == SyntheticKind::relational_order) {
        if (spec.fine_per_class != 0) throw ConfigError("synthetic: fine labels are only supported in prototype mode");
        if (spec.views < 3) throw ConfigError("synthetic: relational-order mode needs >= 3 views");
    }

    std::mt19937_64 rng(spec.seed);
    FeatureDataset ds;
    ds.num_classes = spec.num_classes;
    ds.num_fine_classes = spec.num_classes * spec.fine_per_class;
    ds.views = spec.views;
    ds.dim = spec.dim;
    ds.records.reserve(spec.num_classes * spec.per_class);

    std::size_t next_id = 0;
    if (spec.kind == SyntheticKind::prototype) {
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            const Matrix proto = gaussian_matrix(spec.views, spec.dim, 1.0, rng);
            std::vector<Matrix> subs;
            for (std::size_t k = 0; k < spec.fine_per_class; ++k) {
                Matrix s = proto;
                add_noise(s, spec.fine_spread, rng);
                subs.push_back(std::move(s));
            }
            for (std::size_t i = 0; i < spec.per_class; ++i) {
                ShapeRecord r;
                r.id = shape_id(next_id++);
                r.coarse_label = c;
                if (spec.fine_per_class > 0) {
                    const std::size_t k = i % spec.fine_per_class;
                    r.fine_label = c * spec.fine_per_class + k;
                    r.views = subs[k];
                } else {
                    r.views = proto;
                }
                add_noise(r.views, spec.noise, rng);
                ds.records.push_back(std::move(r));
            }
        }
    } else {
        const Matrix shared = gaussian_matrix(spec.views, spec.dim, 1.0, rng);
        const auto orders = class_orders(spec.num_classes, spec.views, rng);
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            const Matrix ordered = shared.select_rows(orders[c]);
            for (std::size_t i = 0; i < spec.per_class; ++i) {
                ShapeRecord r;
                r.id = shape_id(next_id++);
                r.coarse_label = c;
                r.views = ordered;
                add_noise(r.views, spec.noise, rng);
                ds.records.push_back(std::move(r));
            }
        }
    }
    return ds;
}

} // namespace hrge
