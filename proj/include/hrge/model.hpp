#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrge/layers.hpp"
#include "hrge/matrix.hpp"
#include "hrge/ops.hpp"

namespace hrge {

// Architecture variants of the ablation table.
enum class Variant : std::uint32_t {
    baseline = 0,  // max-pool of the raw view features
    pr = 1,        // pairwise module, then pool
    nr = 2,        // neighboring module, then pool
    hrge_1l = 3,   // hierarchy with a single embedding level
    full = 4,
    won = 5,  // full hierarchy, blocks not normalised
    mp = 6,   // neighboring function = element-wise max of the triplet
    ap = 7,   // neighboring function = element-wise mean of the triplet
    id = 8,   // neighboring function = centre passthrough
};

enum class NeighborKind : std::uint32_t { learned = 0, max = 1, avg = 2, identity = 3 };

struct VariantSpec {
    Variant variant = Variant::full;
    std::size_t depth = 2;  // embedding levels L; 0 for the single-block variants
    bool normalize = true;
    NeighborKind neighbor = NeighborKind::learned;
    bool hierarchical = true;
    bool pairwise = true;
    bool neighboring = true;

    std::string name() const;
};

// Builds the wiring for a variant. depth is the hierarchy depth requested by
// the model geometry; 1L forces 1 and the single-block variants force 0.
VariantSpec apply_variant(Variant v, std::size_t depth);
// Accepts the names printed by VariantSpec::name(), case-insensitive.
VariantSpec apply_variant(std::string_view name, std::size_t depth);
std::vector<Variant> all_variants();

struct ModelGeometry {
    std::size_t views = 12;
    std::size_t stride = 2;
    std::size_t depth = 2;
    std::size_t width = 2048;
    std::size_t pair_hidden = 0;     // hidden width of f_theta; 0 = width
    std::size_t coarsen_offset = 0;  // phase of the kept nodes, < stride

    std::size_t hidden() const noexcept { return pair_hidden == 0 ? width : pair_hidden; }
};

// Node features of one level of the cyclic view graph. Row order is ring order.
struct ViewGraph {
    std::size_t level = 0;
    Matrix features;

    std::size_t nodes() const noexcept { return features.rows(); }
};

// theta_l (pairwise MLP), phi_l (fusion) and psi_l (neighboring) of one level.
// Members are absent when the variant does not use them.
struct LevelParams {
    std::optional<Mlp> pairwise;
    std::optional<LinearLayer> fusion;
    std::optional<LinearLayer> neighboring;

    static LevelParams make(std::size_t width, std::size_t hidden, bool with_pairwise, bool with_neighboring);
    void init(std::mt19937_64& rng);
    void zero_grad();
    void collect(const std::string& prefix, ParamList& out);
};

struct PairwiseTrace {
    Matrix input;
    Matrix pairs;
    MlpTrace mlp;
    Matrix fusion_in;
    Matrix fusion_pre;
};

struct NeighborTrace {
    NeighborKind kind = NeighborKind::learned;
    Matrix triplets;
    Matrix pre;
    std::vector<std::uint8_t> pick;  // max kind: 0 prev, 1 centre, 2 next
};

// x~_i = g_phi([x_i, sum_{j != i} f_theta([x_i, x_j])])
ViewGraph pairwise_relation(const ViewGraph& g, const LevelParams& p, PairwiseTrace* trace = nullptr);
Matrix pairwise_relation_backward(LevelParams& p, PairwiseTrace& trace, const Matrix& grad_out);

// x^_i = h([x~_{i-1}, x~_i, x~_{i+1}]) with cyclic wrap; needs >= 3 nodes.
ViewGraph neighboring_relation(const ViewGraph& g, const LevelParams& p, NeighborKind kind = NeighborKind::learned,
                               NeighborTrace* trace = nullptr);
Matrix neighboring_relation_backward(LevelParams& p, NeighborTrace& trace, const Matrix& grad_out);

// 0-based indices of the nodes kept when coarsening n nodes with stride s.
// offset 0 keeps s-1, 2s-1, ..., i.e. 1-based s, 2s, ..., n.
std::vector<std::size_t> coarsen_indices(std::size_t n, std::size_t stride, std::size_t offset = 0);
ViewGraph coarsen(const ViewGraph& g, std::size_t stride, std::size_t offset = 0);

struct PoolTrace {
    MaxPoolResult pool;
    NormalizeResult norm;
    bool normalized = true;
    std::size_t rows = 0;
};

// l2_normalize(maxpool_rows(features)); raw pooled vector when normalize is false.
Vector level_descriptor(const Matrix& features, bool normalize = true, PoolTrace* trace = nullptr);
Matrix level_descriptor_backward(const PoolTrace& trace, std::span<const double> grad);

struct GlobalDescriptor {
    std::vector<Vector> blocks;  // F_0 .. F_L
    Vector concatenated;         // [F_0, ..., F_L]
    std::vector<bool> degenerate;
};

struct LevelTrace {
    std::optional<PairwiseTrace> pairwise;
    std::optional<NeighborTrace> neighbor;
    std::size_t nodes = 0;
    std::vector<std::size_t> kept;
};

struct ForwardTrace {
    std::vector<LevelTrace> levels;
    std::vector<PoolTrace> blocks;
    bool ready = false;
};

class HrgeModel {
public:
    HrgeModel(ModelGeometry geometry, VariantSpec variant);

    void init(std::mt19937_64& rng);

    const ModelGeometry& geometry() const noexcept { return geo_; }
    const VariantSpec& variant() const noexcept { return variant_; }
    std::size_t width() const noexcept { return geo_.width; }
    std::size_t block_count() const noexcept;
    std::size_t descriptor_length() const noexcept { return block_count() * geo_.width; }
    // Node counts of the graphs the model touches, finest first.
    std::vector<std::size_t> level_sizes() const;

    GlobalDescriptor forward(const Matrix& views) const;
    GlobalDescriptor forward(const Matrix& views, ForwardTrace& trace) const;
    // Accumulates parameter gradients; returns d(loss)/d(views).
    Matrix backward(ForwardTrace& trace, std::span<const double> grad_descriptor);

    void zero_grad();
    ParamList params();

    std::vector<LevelParams>& levels() noexcept { return levels_; }
    const std::vector<LevelParams>& levels() const noexcept { return levels_; }

private:
    GlobalDescriptor run(const Matrix& views, ForwardTrace* trace) const;

    ModelGeometry geo_;
    VariantSpec variant_;
    std::vector<LevelParams> levels_;
};

// Throws ConfigError when the geometry cannot host the variant.
void validate_geometry(const ModelGeometry& geometry, const VariantSpec& variant);

} // namespace hrge
