#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "hrge/dataset.hpp"

namespace hrge {

enum class SyntheticKind {
    // Each class has its own per-view prototype; samples add Gaussian noise.
    prototype,
    // Every class uses the same set of view vectors; only their ring order
    // differs. Any permutation-invariant aggregator sees identical inputs
    // across classes (up to the noise).
    relational_order,
};

SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticSpec {
    std::size_t num_classes = 4;
    std::size_t per_class = 50;
    std::size_t views = 12;
    std::size_t dim = 32;
    double noise = 0.1;
    SyntheticKind kind = SyntheticKind::prototype;
    std::size_t fine_per_class = 0;  // prototype mode only; 0 = no fine labels
    double fine_spread = 0.5;
    std::uint64_t seed = 0;
};

FeatureDataset generate_synthetic(const SyntheticSpec& spec);

} // namespace hrge
