#include "hrge/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "hrge/errors.hpp"
#include "hrge/kernels.hpp"

namespace hrge {

namespace {

struct VariantName {
    Variant variant;
    std::string_view name;
};

constexpr std::array<VariantName, 9> kVariantNames{{
    {Variant::baseline, "baseline"},
    {Variant::pr, "pr"},
    {Variant::nr, "nr"},
    {Variant::hrge_1l, "hrge-1l"},
    {Variant::full, "full"},
    {Variant::won, "hrge-won"},
    {Variant::mp, "hrge-mp"},
    {Variant::ap, "hrge-ap"},
    {Variant::id, "hrge-id"},
}};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void append_row(Matrix& dst, std::size_t r, std::size_t offset, std::span<const double> src) {
    std::copy(src.begin(), src.end(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
}

void add_into(std::span<double> dst, std::span<const double> src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

} // namespace

std::string VariantSpec::name() const {
    for (const auto& v : kVariantNames)
        if (v.variant == variant) return std::string(v.name);
    return "unknown";
}

VariantSpec apply_variant(Variant v, std::size_t depth) {
    VariantSpec s;
    s.variant = v;
    s.depth = depth;
    switch (v) {
    case Variant::baseline:
        s.hierarchical = false;
        s.pairwise = false;
        s.neighboring = false;
        s.depth = 0;
        break;
    case Variant::pr:
        s.hierarchical = false;
        s.neighboring = false;
        s.depth = 0;
        break;
    case Variant::nr:
        s.hierarchical = false;
        s.pairwise = false;
        s.depth = 0;
        break;
    case Variant::hrge_1l:
        s.depth = 1;
        break;
    case Variant::full:
        break;
    case Variant::won:
        s.normalize = false;
        break;
    case Variant::mp:
        s.neighbor = NeighborKind::max;
        break;
    case Variant::ap:
        s.neighbor = NeighborKind::avg;
        break;
    case Variant::id:
        s.neighbor = NeighborKind::identity;
        break;
    default:
        throw ConfigError("unknown variant tag " + std::to_string(static_cast<std::uint32_t>(v)));
    }
    return s;
}

VariantSpec apply_variant(std::string_view name, std::size_t depth) {
    std::string key = lower(name);
    if (key == "hrge" || key == "hrge-net" || key == "hrge-full") key = "full";
    if (key == "1l") key = "hrge-1l";
    if (key == "won" || key == "mp" || key == "ap" || key == "id") key = "hrge-" + key;
    for (const auto& v : kVariantNames)
        if (v.name == key) return apply_variant(v.variant, depth);
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (expected baseline, pr, nr, hrge-1l, full, hrge-won, hrge-mp, hrge-ap, hrge-id)");
}

std::vector<Variant> all_variants() {
    std::vector<Variant> out;
    for (const auto& v : kVariantNames) out.push_back(v.variant);
    return out;
}

LevelParams LevelParams::make(std::size_t width, std::size_t hidden, bool with_pairwise, bool with_neighboring) {
    LevelParams p;
    if (with_pairwise) {
        const std::array<std::size_t, 4> dims{2 * width, hidden, hidden, width};
        p.pairwise.emplace(dims);
        p.fusion.emplace(2 * width, width);
    }
    if (with_neighboring) p.neighboring.emplace(3 * width, width);
    return p;
}

void LevelParams::init(std::mt19937_64& rng) {
    if (pairwise) pairwise->init(rng);
    if (fusion) fusion->init(rng);
    if (neighboring) neighboring->init(rng);
}

void LevelParams::zero_grad() {
    if (pairwise) pairwise->zero_grad();
    if (fusion) fusion->zero_grad();
    if (neighboring) neighboring->zero_grad();
}

void LevelParams::collect(const std::string& prefix, ParamList& out) {
    if (pairwise) pairwise->collect(prefix + ".pairwise", out);
    if (fusion) fusion->collect(prefix + ".fusion", out);
    if (neighboring) neighboring->collect(prefix + ".neighboring", out);
}

ViewGraph pairwise_relation(const ViewGraph& g, const LevelParams& p, PairwiseTrace* trace) {
    if (!p.pairwise || !p.fusion) throw ConfigError("pairwise_relation: level has no pairwise parameters");
    const std::size_t n = g.nodes();
    const std::size_t w = g.features.cols();
    if (n == 0) throw EmptyInputError("pairwise_relation: graph has no nodes");
    require_dim(w * 2, p.pairwise->in_dim(), "pairwise_relation input width x2");

    Matrix pairs = kernels::expand_pairs(g.features);
    Matrix rel = p.pairwise->forward(pairs, trace ? &trace->mlp : nullptr);
    require_dim(rel.cols(), w, "pairwise_relation relation width");

    // Each column of R_i is summed in ascending order so the result depends
    // only on the multiset of relations, not on how the views are indexed.
    Matrix fusion_in(n, 2 * w);
    std::vector<double> terms(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
        append_row(fusion_in, i, 0, g.features.row(i));
        auto acc = fusion_in.row(i).subspan(w, w);
        for (std::size_t k = 0; k < w; ++k) {
            std::size_t t = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) terms[t++] = rel(kernels::pair_index(i, j, n), k);
            std::sort(terms.begin(), terms.end());
            double sum = 0.0;
            for (double v : terms) sum += v;
            acc[k] = sum;
        }
    }
    Matrix pre = p.fusion->forward(fusion_in);
    ViewGraph out{g.level, relu(pre)};
    if (trace) {
        trace->input = g.features;
        trace->pairs = std::move(pairs);
        trace->fusion_in = std::move(fusion_in);
        trace->fusion_pre = std::move(pre);
    }
    return out;
}

Matrix pairwise_relation_backward(LevelParams& p, PairwiseTrace& trace, const Matrix& grad_out) {
    const std::size_t n = trace.input.rows();
    const std::size_t w = trace.input.cols();
    Matrix g_pre = relu_backward(trace.fusion_pre, grad_out);
    Matrix g_fin = p.fusion->backward(trace.fusion_in, g_pre);

    Matrix grad_x(n, w);
    Matrix g_rel(trace.pairs.rows(), w);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = g_fin.row(i);
        add_into(grad_x.row(i), row.first(w));
        const auto g_r = row.subspan(w, w);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            std::copy(g_r.begin(), g_r.end(), g_rel.row(kernels::pair_index(i, j, n)).begin());
        }
    }
    Matrix g_pairs = p.pairwise->backward(trace.mlp, g_rel);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto row = g_pairs.row(kernels::pair_index(i, j, n));
            add_into(grad_x.row(i), row.first(w));
            add_into(grad_x.row(j), row.subspan(w, w));
        }
    }
    return grad_x;
}

ViewGraph neighboring_relation(const ViewGraph& g, const LevelParams& p, NeighborKind kind, NeighborTrace* trace) {
    const std::size_t n = g.nodes();
    const std::size_t w = g.features.cols();
    if (n < 3) throw ConfigError("neighboring_relation: ring of " + std::to_string(n) + " nodes is too small (need >= 3)");
    const Matrix& x = g.features;
    auto prev = [n](std::size_t i) { return i == 0 ? n - 1 : i - 1; };
    auto next = [n](std::size_t i) { return i + 1 == n ? 0 : i + 1; };

    ViewGraph out{g.level, Matrix(n, w)};
    if (trace) trace->kind = kind;
    switch (kind) {
    case NeighborKind::learned: {
        if (!p.neighboring) throw ConfigError("neighboring_relation: level has no neighboring parameters");
        require_dim(3 * w, p.neighboring->in_dim(), "neighboring_relation triplet width");
        Matrix trip(n, 3 * w);
        for (std::size_t i = 0; i < n; ++i) {
            append_row(trip, i, 0, x.row(prev(i)));
            append_row(trip, i, w, x.row(i));
            append_row(trip, i, 2 * w, x.row(next(i)));
        }
        Matrix pre = p.neighboring->forward(trip);
        out.features = relu(pre);
        if (trace) {
            trace->triplets = std::move(trip);
            trace->pre = std::move(pre);
        }
        break;
    }
    case NeighborKind::max: {
        std::vector<std::uint8_t> pick(n * w, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = x.row(prev(i));
            const auto b = x.row(i);
            const auto c = x.row(next(i));
            for (std::size_t k = 0; k < w; ++k) {
                double best = a[k];
                std::uint8_t who = 0;
                if (b[k] > best) { best = b[k]; who = 1; }
                if (c[k] > best) { best = c[k]; who = 2; }
                out.features(i, k) = best;
                pick[i * w + k] = who;
            }
        }
        if (trace) trace->pick = std::move(pick);
        break;
    }
    case NeighborKind::avg:
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = x.row(prev(i));
            const auto b = x.row(i);
            const auto c = x.row(next(i));
            for (std::size_t k = 0; k < w; ++k) out.features(i, k) = (a[k] + b[k] + c[k]) / 3.0;
        }
        break;
    case NeighborKind::identity:
        out.features = x;
        break;
    }
    return out;
}

Matrix neighboring_relation_backward(LevelParams& p, NeighborTrace& trace, const Matrix& grad_out) {
    const std::size_t n = grad_out.rows();
    const std::size_t w = grad_out.cols();
    auto prev = [n](std::size_t i) { return i == 0 ? n - 1 : i - 1; };
    auto next = [n](std::size_t i) { return i + 1 == n ? 0 : i + 1; };
    Matrix gx(n, w);
    switch (trace.kind) {
    case NeighborKind::learned: {
        Matrix g_pre = relu_backward(trace.pre, grad_out);
        Matrix g_trip = p.neighboring->backward(trace.triplets, g_pre);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = g_trip.row(i);
            add_into(gx.row(prev(i)), row.first(w));
            add_into(gx.row(i), row.subspan(w, w));
            add_into(gx.row(next(i)), row.subspan(2 * w, w));
        }
        break;
    }
    case NeighborKind::max:
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < w; ++k) {
                const std::uint8_t who = trace.pick[i * w + k];
                const std::size_t src = who == 0 ? prev(i) : (who == 1 ? i : next(i));
                gx(src, k) += grad_out(i, k);
            }
        }
        break;
    case NeighborKind::avg:
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < w; ++k) {
                const double g = grad_out(i, k) / 3.0;
                gx(prev(i), k) += g;
                gx(i, k) += g;
                gx(next(i), k) += g;
            }
        }
        break;
    case NeighborKind::identity:
        gx = grad_out;
        break;
    }
    return gx;
}

std::vector<std::size_t> coarsen_indices(std::size_t n, std::size_t stride, std::size_t offset) {
    if (stride == 0) throw ConfigError("coarsen: stride must be positive");
    if (offset >= stride) throw ConfigError("coarsen: offset must be smaller than the stride");
    if (n % stride != 0) {
        throw ConfigError("coarsen: " + std::to_string(n) + " nodes not divisible by stride " + std::to_string(stride));
    }
    std::vector<std::size_t> idx(n / stride);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = stride * i + (stride - 1) - offset;
    return idx;
}

ViewGraph coarsen(const ViewGraph& g, std::size_t stride, std::size_t offset) {
    const auto idx = coarsen_indices(g.nodes(), stride, offset);
    return ViewGraph{g.level + 1, g.features.select_rows(idx)};
}

Vector level_descriptor(const Matrix& features, bool normalize, PoolTrace* trace) {
    PoolTrace local;
    PoolTrace& t = trace ? *trace : local;
    t.pool = maxpool_rows(features);
    t.rows = features.rows();
    t.normalized = normalize;
    if (!normalize) {
        t.norm = {};
        return t.pool.values;
    }
    t.norm = l2_normalize(t.pool.values);
    return t.norm.values;
}

Matrix level_descriptor_backward(const PoolTrace& trace, std::span<const double> grad) {
    if (!trace.normalized) return maxpool_rows_backward(trace.pool, trace.rows, grad);
    const Vector g_pool = l2_normalize_backward(trace.norm, grad);
    return maxpool_rows_backward(trace.pool, trace.rows, g_pool);
}

void validate_geometry(const ModelGeometry& geo, const VariantSpec& v) {
    if (geo.views == 0) throw ConfigError("geometry: need at least one view");
    if (geo.width == 0) throw ConfigError("geometry: width must be positive");
    if (geo.stride == 0) throw ConfigError("geometry: stride must be positive");
    if (geo.coarsen_offset >= geo.stride) throw ConfigError("geometry: coarsen offset must be smaller than the stride");
    if (!v.hierarchical) {
        if (v.neighboring && geo.views < 3) {
            throw ConfigError("geometry: neighboring module needs >= 3 views, got " + std::to_string(geo.views));
        }
        return;
    }
    if (v.depth == 0) throw ConfigError("geometry: hierarchical variants need depth >= 1");
    std::size_t n = geo.views;
    for (std::size_t l = 0; l < v.depth; ++l) {
        if (n < 3) {
            throw ConfigError("geometry: level " + std::to_string(l) + " has " + std::to_string(n) +
                              " nodes, the neighboring module needs >= 3");
        }
        if (n % geo.stride != 0) {
            throw ConfigError("geometry: " + std::to_string(geo.views) + " views not divisible by stride^depth (" +
                              std::to_string(geo.stride) + "^" + std::to_string(v.depth) + ")");
        }
        n /= geo.stride;
    }
}

HrgeModel::HrgeModel(ModelGeometry geometry, VariantSpec variant) : geo_(geometry), variant_(variant) {
    validate_geometry(geo_, variant_);
    geo_.depth = variant_.depth;
    const bool learned = variant_.neighboring && variant_.neighbor == NeighborKind::learned;
    if (variant_.hierarchical) {
        for (std::size_t l = 0; l < variant_.depth; ++l)
            levels_.push_back(LevelParams::make(geo_.width, geo_.hidden(), true, learned));
    } else if (variant_.pairwise || variant_.neighboring) {
        levels_.push_back(LevelParams::make(geo_.width, geo_.hidden(), variant_.pairwise, learned));
    }
}

void HrgeModel::init(std::mt19937_64& rng) {
    for (auto& l : levels_) l.init(rng);
}

std::size_t HrgeModel::block_count() const noexcept { return variant_.hierarchical ? variant_.depth + 1 : 1; }

std::vector<std::size_t> HrgeModel::level_sizes() const {
    std::vector<std::size_t> sizes{geo_.views};
    if (variant_.hierarchical)
        for (std::size_t l = 0; l < variant_.depth; ++l) sizes.push_back(sizes.back() / geo_.stride);
    return sizes;
}

GlobalDescriptor HrgeModel::forward(const Matrix& views) const { return run(views, nullptr); }

GlobalDescriptor HrgeModel::forward(const Matrix& views, ForwardTrace& trace) const { return run(views, &trace); }

GlobalDescriptor HrgeModel::run(const Matrix& views, ForwardTrace* trace) const {
    if (views.rows() != geo_.views) {
        throw ShapeError("model expects " + std::to_string(geo_.views) + " views, input has " +
                         std::to_string(views.rows()));
    }
    require_dim(views.cols(), geo_.width, "model input width");
    if (trace) {
        trace->levels.clear();
        trace->blocks.clear();
        trace->ready = false;
    }
    GlobalDescriptor out;
    auto emit = [&](const Matrix& feats) {
        PoolTrace pt;
        Vector block = level_descriptor(feats, variant_.normalize, &pt);
        out.degenerate.push_back(variant_.normalize && pt.norm.degenerate);
        out.concatenated.insert(out.concatenated.end(), block.begin(), block.end());
        out.blocks.push_back(std::move(block));
        if (trace) trace->blocks.push_back(std::move(pt));
    };

    ViewGraph g{0, views};
    if (!variant_.hierarchical) {
        LevelTrace lt;
        lt.nodes = g.nodes();
        if (variant_.pairwise) {
            PairwiseTrace pt;
            g = pairwise_relation(g, levels_[0], trace ? &pt : nullptr);
            if (trace) lt.pairwise = std::move(pt);
        }
        if (variant_.neighboring) {
            NeighborTrace nt;
            g = neighboring_relation(g, levels_[0], variant_.neighbor, trace ? &nt : nullptr);
            if (trace) lt.neighbor = std::move(nt);
        }
        if (trace) trace->levels.push_back(std::move(lt));
        emit(g.features);
    } else {
        for (std::size_t l = 0; l < variant_.depth; ++l) {
            LevelTrace lt;
            lt.nodes = g.nodes();
            PairwiseTrace pt;
            ViewGraph tilde = pairwise_relation(g, levels_[l], trace ? &pt : nullptr);
            emit(tilde.features);
            NeighborTrace nt;
            ViewGraph hat = neighboring_relation(tilde, levels_[l], variant_.neighbor, trace ? &nt : nullptr);
            lt.kept = coarsen_indices(hat.nodes(), geo_.stride, geo_.coarsen_offset);
            g = ViewGraph{l + 1, hat.features.select_rows(lt.kept)};
            if (trace) {
                lt.pairwise = std::move(pt);
                lt.neighbor = std::move(nt);
                trace->levels.push_back(std::move(lt));
            }
        }
        emit(g.features);
    }
    if (trace) trace->ready = true;
    return out;
}

Matrix HrgeModel::backward(ForwardTrace& trace, std::span<const double> grad_descriptor) {
    if (!trace.ready) throw StaleCacheError("model backward: trace already consumed or never filled");
    trace.ready = false;
    require_dim(grad_descriptor.size(), descriptor_length(), "descriptor gradient length");
    const std::size_t w = geo_.width;
    auto block_grad = [&](std::size_t b) { return grad_descriptor.subspan(b * w, w); };

    if (!variant_.hierarchical) {
        Matrix g = level_descriptor_backward(trace.blocks[0], block_grad(0));
        LevelTrace& lt = trace.levels[0];
        if (lt.neighbor) g = neighboring_relation_backward(levels_[0], *lt.neighbor, g);
        if (lt.pairwise) g = pairwise_relation_backward(levels_[0], *lt.pairwise, g);
        return g;
    }

    const std::size_t depth = variant_.depth;
    Matrix g = level_descriptor_backward(trace.blocks[depth], block_grad(depth));
    for (std::size_t l = depth; l-- > 0;) {
        LevelTrace& lt = trace.levels[l];
        Matrix g_hat(lt.nodes, w);
        for (std::size_t i = 0; i < lt.kept.size(); ++i) add_into(g_hat.row(lt.kept[i]), g.row(i));
        Matrix g_tilde = neighboring_relation_backward(levels_[l], *lt.neighbor, g_hat);
        const Matrix g_block = level_descriptor_backward(trace.blocks[l], block_grad(l));
        add_into(g_tilde.values(), g_block.values());
        g = pairwise_relation_backward(levels_[l], *lt.pairwise, g_tilde);
    }
    return g;
}

void HrgeModel::zero_grad() {
    for (auto& l : levels_) l.zero_grad();
}

ParamList HrgeModel::params() {
    ParamList out;
    for (std::size_t l = 0; l < levels_.size(); ++l) levels_[l].collect("level" + std::to_string(l), out);
    return out;
}

} // namespace hrge
