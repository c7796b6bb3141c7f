#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hrge/errors.hpp"
#include "hrge/gradcheck.hpp"
#include "hrge/model.hpp"
#include "oracles.hpp"

using namespace hrge;

namespace {

HrgeModel make_model(std::size_t views, std::size_t width, std::size_t depth, Variant v, std::uint64_t seed,
                     std::size_t stride = 2) {
    ModelGeometry g;
    g.views = views;
    g.width = width;
    g.depth = depth;
    g.stride = stride;
    HrgeModel m(g, apply_variant(v, depth));
    std::mt19937_64 rng(seed);
    m.init(rng);
    // non-zero biases so every bias gradient path is exercised
    for (auto& p : m.params())
        if (p.name.ends_with(".bias"))
            for (double& b : p.value) b = 0.05;
    return m;
}

LevelParams make_level(std::size_t width, std::uint64_t seed) {
    LevelParams p = LevelParams::make(width, width, true, true);
    std::mt19937_64 rng(seed);
    p.init(rng);
    return p;
}

double max_diff(const std::vector<oracle::Vec>& a, const std::vector<Vector>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].size(); ++k) m = std::max(m, std::abs(a[i][k] - b[i][k]));
    return m;
}

} // namespace

TEST_CASE("pairwise_relation") {
    SUBCASE("single node sees an empty neighbourhood") {
        const LevelParams p = make_level(3, 1);
        const Matrix x = oracle::random_matrix(1, 3, 2);
        const ViewGraph out = pairwise_relation({0, x}, p);
        const auto expect = oracle::relu(oracle::apply_linear(*p.fusion, oracle::concat({oracle::to_rows(x)[0], {0, 0, 0}})));
        for (std::size_t k = 0; k < 3; ++k) CHECK(out.features(0, k) == doctest::Approx(expect[k]).epsilon(1e-14));
    }
    SUBCASE("two nodes: each relation is the single ordered pair") {
        const LevelParams p = make_level(2, 3);
        const Matrix x = oracle::random_matrix(2, 2, 4);
        const auto rows = oracle::to_rows(x);
        const ViewGraph out = pairwise_relation({0, x}, p);
        const auto r12 = oracle::apply_mlp(*p.pairwise, oracle::concat({rows[0], rows[1]}));
        const auto r21 = oracle::apply_mlp(*p.pairwise, oracle::concat({rows[1], rows[0]}));
        const auto e1 = oracle::relu(oracle::apply_linear(*p.fusion, oracle::concat({rows[0], r12})));
        const auto e2 = oracle::relu(oracle::apply_linear(*p.fusion, oracle::concat({rows[1], r21})));
        for (std::size_t k = 0; k < 2; ++k) {
            CHECK(std::abs(out.features(0, k) - e1[k]) <= 1e-12);
            CHECK(std::abs(out.features(1, k) - e2[k]) <= 1e-12);
        }
    }
    SUBCASE("four nodes against the brute-force double loop") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const LevelParams p = make_level(3, 10 + seed);
            const Matrix x = oracle::random_matrix(4, 3, 20 + seed);
            const ViewGraph out = pairwise_relation({0, x}, p);
            const auto ref = oracle::pairwise(p, oracle::to_rows(x));
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(out.features(i, k) - ref[i][k]) <= 1e-12);
        }
    }
    SUBCASE("width mismatch") {
        const LevelParams p = make_level(3, 1);
        CHECK_THROWS_AS(pairwise_relation({0, Matrix(4, 2)}, p), ShapeError);
    }
    SUBCASE("equivariant to any node permutation") {
        const LevelParams p = make_level(4, 7);
        const Matrix x = oracle::random_matrix(6, 4, 8);
        std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
        const Matrix a = pairwise_relation({0, x}, p).features.select_rows(perm);
        const Matrix b = pairwise_relation({0, x.select_rows(perm)}, p).features;
        CHECK(max_abs_diff(a, b) <= 1e-12);
    }
}

TEST_CASE("neighboring_relation") {
    const LevelParams p = make_level(3, 5);
    SUBCASE("three nodes: every triplet is a rotation of the ring") {
        const Matrix x = oracle::random_matrix(3, 3, 6);
        const ViewGraph out = neighboring_relation({0, x}, p);
        const auto rows = oracle::to_rows(x);
        const oracle::Vec trip[3] = {oracle::concat({rows[2], rows[0], rows[1]}), oracle::concat({rows[0], rows[1], rows[2]}),
                                     oracle::concat({rows[1], rows[2], rows[0]})};
        for (std::size_t i = 0; i < 3; ++i) {
            const auto e = oracle::relu(oracle::apply_linear(*p.neighboring, trip[i]));
            for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(out.features(i, k) - e[k]) <= 1e-12);
        }
    }
    SUBCASE("identical node features give identical outputs") {
        Matrix x(5, 3);
        for (std::size_t i = 0; i < 5; ++i) x(i, 0) = 0.3, x(i, 1) = -1.0, x(i, 2) = 2.0;
        const ViewGraph out = neighboring_relation({0, x}, p);
        for (std::size_t i = 1; i < 5; ++i)
            for (std::size_t k = 0; k < 3; ++k) CHECK(out.features(i, k) == out.features(0, k));
    }
    SUBCASE("cyclic shift of the input shifts the output") {
        const Matrix x = oracle::random_matrix(6, 3, 9);
        const Matrix base = neighboring_relation({0, x}, p).features;
        for (std::ptrdiff_t k = 0; k < 6; ++k) {
            const Matrix shifted = neighboring_relation({0, x.rotate_rows(k)}, p).features;
            CHECK(shifted == base.rotate_rows(k));
        }
    }
    SUBCASE("matches the three-case rule for every kind") {
        const Matrix x = oracle::random_matrix(5, 3, 12);
        for (auto kind : {NeighborKind::learned, NeighborKind::max, NeighborKind::avg, NeighborKind::identity}) {
            const Matrix out = neighboring_relation({0, x}, p, kind).features;
            const auto ref = oracle::neighboring(p, oracle::to_rows(x), kind);
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(out(i, k) - ref[i][k]) <= 1e-12);
        }
    }
    SUBCASE("ring too small") {
        CHECK_THROWS_AS(neighboring_relation({0, Matrix(2, 3)}, p), ConfigError);
    }
    SUBCASE("identity passthrough and average of identical rows") {
        const Matrix x = oracle::random_matrix(4, 3, 13);
        CHECK(neighboring_relation({0, x}, p, NeighborKind::identity).features == x);
        Matrix same(3, 3);
        for (std::size_t i = 0; i < 3; ++i) same(i, 0) = 0.1, same(i, 1) = 0.7, same(i, 2) = -3.3;
        const Matrix avg = neighboring_relation({0, same}, p, NeighborKind::avg).features;
        CHECK(max_abs_diff(avg, same) <= 1e-15);
    }
}

TEST_CASE("coarsen") {
    SUBCASE("twelve nodes, stride two keep 1-based 2,4,...,12") {
        CHECK(coarsen_indices(12, 2) == std::vector<std::size_t>{1, 3, 5, 7, 9, 11});
        Matrix x(12, 1);
        for (std::size_t i = 0; i < 12; ++i) x(i, 0) = static_cast<double>(i + 1);
        const ViewGraph c = coarsen({0, x}, 2);
        CHECK(c.level == 1);
        CHECK(c.features == Matrix{{2}, {4}, {6}, {8}, {10}, {12}});
    }
    SUBCASE("stride one is the identity") {
        const Matrix x = oracle::random_matrix(5, 2, 1);
        CHECK(coarsen({0, x}, 1).features == x);
    }
    SUBCASE("stride composition and phase offset") {
        const auto a = coarsen_indices(8, 2);
        std::vector<std::size_t> twice;
        for (auto i : coarsen_indices(a.size(), 2)) twice.push_back(a[i]);
        CHECK(twice == coarsen_indices(8, 4));

        CHECK(coarsen_indices(6, 2) == std::vector<std::size_t>{1, 3, 5});
        CHECK_THROWS_AS(coarsen_indices(3, 2), ConfigError);
        CHECK(coarsen_indices(6, 2, 1) == std::vector<std::size_t>{0, 2, 4});
        const Matrix x = oracle::random_matrix(6, 3, 7);
        CHECK(coarsen({0, x}, 2).features != coarsen({0, x}, 2, 1).features);
    }
    SUBCASE("non-divisible node count") {
        CHECK_THROWS_AS(coarsen({0, Matrix(10, 1)}, 4), ConfigError);
    }
}

TEST_CASE("level_descriptor") {
    const Vector v = level_descriptor(Matrix{{3, 4}});
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v[1] == doctest::Approx(0.8));
    const Vector w = level_descriptor(Matrix{{1, 0}, {0, 1}});
    CHECK(w[0] == doctest::Approx(std::sqrt(2.0) / 2));
    CHECK(w[1] == doctest::Approx(std::sqrt(2.0) / 2));
    const Matrix x = oracle::random_matrix(6, 4, 3);
    const std::vector<std::size_t> perm{5, 2, 0, 3, 1, 4};
    CHECK(level_descriptor(x) == level_descriptor(x.select_rows(perm)));
}

TEST_CASE("hrge_forward geometry") {
    SUBCASE("twelve views: graphs 12, 6, 3 and three blocks") {
        HrgeModel m = make_model(12, 5, 2, Variant::full, 1);
        CHECK(m.level_sizes() == std::vector<std::size_t>{12, 6, 3});
        const auto d = m.forward(oracle::random_matrix(12, 5, 2));
        CHECK(d.blocks.size() == 3);
        CHECK(d.concatenated.size() == 15);
        CHECK(m.descriptor_length() == 15);
    }
    SUBCASE("six views: graphs 6, 3 and two blocks") {
        HrgeModel m = make_model(6, 4, 1, Variant::full, 1);
        CHECK(m.level_sizes() == std::vector<std::size_t>{6, 3});
        CHECK(m.forward(oracle::random_matrix(6, 4, 2)).concatenated.size() == 8);
    }
    SUBCASE("wrong view count or width") {
        HrgeModel m = make_model(6, 4, 1, Variant::full, 1);
        CHECK_THROWS_AS(m.forward(Matrix(5, 4)), ShapeError);
        CHECK_THROWS_AS(m.forward(Matrix(6, 3)), ShapeError);
    }
    SUBCASE("geometry validation") {
        ModelGeometry g;
        g.views = 10;
        g.width = 4;
        CHECK_THROWS_AS(HrgeModel(g, apply_variant(Variant::full, 2)), ConfigError);
        g.views = 8;
        // 8 -> 4 -> 2 -> 1: level 2 would run the neighboring module on 2 nodes
        CHECK_THROWS_AS(HrgeModel(g, apply_variant(Variant::full, 3)), ConfigError);
        g.views = 2;
        CHECK_THROWS_AS(HrgeModel(g, apply_variant(Variant::nr, 0)), ConfigError);
        CHECK_NOTHROW(HrgeModel(g, apply_variant(Variant::baseline, 0)));
    }
}

TEST_CASE("hrge_forward matches the step-by-step oracle") {
    for (Variant v : all_variants()) {
        const std::size_t views = 12;
        HrgeModel m = make_model(views, 3, 2, v, 40 + static_cast<std::uint64_t>(v));
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Matrix x = oracle::random_matrix(views, 3, 60 + seed);
            const auto d = m.forward(x);
            const auto ref = oracle::hrge_forward(m, x);
            REQUIRE(ref.size() == d.blocks.size());
            CHECK(max_diff(ref, d.blocks) <= 1e-12);
        }
    }
    HrgeModel tiny = make_model(4, 2, 1, Variant::full, 3);
    const Matrix x = oracle::random_matrix(4, 2, 5);
    CHECK(max_diff(oracle::hrge_forward(tiny, x), tiny.forward(x).blocks) <= 1e-12);
}

TEST_CASE("apply_variant") {
    CHECK(apply_variant("baseline", 2).depth == 0);
    CHECK(apply_variant("HRGE-1L", 2).depth == 1);
    CHECK_FALSE(apply_variant("hrge-won", 2).normalize);
    CHECK(apply_variant("hrge-mp", 2).neighbor == NeighborKind::max);
    CHECK(apply_variant("hrge-ap", 2).neighbor == NeighborKind::avg);
    CHECK(apply_variant("hrge-id", 2).neighbor == NeighborKind::identity);
    CHECK(apply_variant("full", 2).name() == "full");
    CHECK_THROWS_AS(apply_variant("attention", 2), ConfigError);
    for (Variant v : all_variants()) CHECK(apply_variant(apply_variant(v, 2).name(), 2).variant == v);

    SUBCASE("baseline descriptor ignores view order") {
        HrgeModel m = make_model(12, 4, 2, Variant::baseline, 1);
        const Matrix x = oracle::random_matrix(12, 4, 2);
        std::vector<std::size_t> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(3);
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK(m.forward(x).concatenated == m.forward(x.select_rows(perm)).concatenated);
    }
    SUBCASE("parameter sets per variant") {
        CHECK(make_model(12, 3, 2, Variant::baseline, 1).levels().empty());
        auto pr = make_model(12, 3, 2, Variant::pr, 1);
        CHECK(pr.levels().size() == 1);
        CHECK(pr.levels()[0].pairwise.has_value());
        CHECK_FALSE(pr.levels()[0].neighboring.has_value());
        auto nr = make_model(12, 3, 2, Variant::nr, 1);
        CHECK_FALSE(nr.levels()[0].pairwise.has_value());
        CHECK(nr.levels()[0].neighboring.has_value());
        CHECK(make_model(12, 3, 2, Variant::hrge_1l, 1).levels().size() == 1);
        auto mp = make_model(12, 3, 2, Variant::mp, 1);
        CHECK(mp.levels().size() == 2);
        CHECK_FALSE(mp.levels()[0].neighboring.has_value());
    }
}

TEST_CASE("property: block norms") {
    for (Variant v : all_variants()) {
        HrgeModel m = make_model(12, 6, 2, v, 7);
        bool any_off_unit = false;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto d = m.forward(oracle::random_matrix(12, 6, 100 + seed));
            for (std::size_t b = 0; b < d.blocks.size(); ++b) {
                const double n = l2_norm(d.blocks[b]);
                if (v != Variant::won && !d.degenerate[b]) CHECK(std::abs(n - 1.0) <= 1e-9);
                if (std::abs(n - 1.0) > 1e-9) any_off_unit = true;
            }
        }
        if (v == Variant::won) CHECK(any_off_unit);
    }
}

TEST_CASE("property: F_0 is invariant to any permutation of the views") {
    HrgeModel m = make_model(12, 5, 2, Variant::full, 11);
    const Matrix x = oracle::random_matrix(12, 5, 12);
    const Vector f0 = m.forward(x).blocks[0];
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        const Vector g0 = m.forward(x.select_rows(perm)).blocks[0];
        CHECK(f0 == g0);
    }
}

TEST_CASE("property: cyclic shifts") {
    HrgeModel m = make_model(12, 5, 2, Variant::full, 21);
    int changed = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix x = oracle::random_matrix(12, 5, 200 + seed);
        const auto base = m.forward(x);
        const auto by4 = m.forward(x.rotate_rows(4));
        for (std::size_t b = 0; b < 3; ++b) CHECK(max_abs_diff(base.blocks[b], by4.blocks[b]) <= 1e-9);
        const auto by2 = m.forward(x.rotate_rows(2));
        if (max_abs_diff(base.blocks[2], by2.blocks[2]) > 1e-9) ++changed;
    }
    CHECK(changed >= 9);
}

TEST_CASE("property: coarsening maps a shift by s to a shift by 1") {
    const Matrix x = oracle::random_matrix(12, 3, 4);
    const Matrix a = coarsen({0, x.rotate_rows(2)}, 2).features;
    const Matrix b = coarsen({0, x}, 2).features.rotate_rows(1);
    CHECK(a == b);
}

TEST_CASE("gradients through the full forward and head match finite differences") {
    for (Variant v : all_variants()) {
        CAPTURE(static_cast<int>(v));
        const std::size_t views = v == Variant::baseline || v == Variant::pr || v == Variant::nr ? 4 : 8;
        HrgeModel m = make_model(views, 4, 2, v, 300 + static_cast<std::uint64_t>(v));
        Classifier clf(m.descriptor_length(), 3);
        std::mt19937_64 rng(9);
        clf.init(rng);
        const Matrix a = oracle::random_matrix(views, 4, 31);
        const Matrix b = oracle::random_matrix(views, 4, 32);
        const std::vector<const Matrix*> batch{&a, &b};
        const std::vector<std::size_t> labels{2, 0};
        const auto report = gradient_check(m, clf, batch, labels);
        CHECK_MESSAGE(report.passed, format_gradcheck_report(report));
    }
}

TEST_CASE("model backward twice without forward is stale") {
    HrgeModel m = make_model(4, 2, 1, Variant::full, 1);
    ForwardTrace t;
    (void)m.forward(oracle::random_matrix(4, 2, 1), t);
    const Vector g(m.descriptor_length(), 1.0);
    (void)m.backward(t, g);
    CHECK_THROWS_AS(m.backward(t, g), StaleCacheError);
}

TEST_CASE("determinism: fixed seed gives bit-identical descriptors") {
    HrgeModel a = make_model(12, 4, 2, Variant::full, 77);
    HrgeModel b = make_model(12, 4, 2, Variant::full, 77);
    const Matrix x = oracle::random_matrix(12, 4, 1);
    CHECK(a.forward(x).concatenated == b.forward(x).concatenated);
}
