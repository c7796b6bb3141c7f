#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hrge/matrix.hpp"

namespace hrge {

inline constexpr std::uint32_t kNoFineLabel = 0xFFFFFFFFu;
inline constexpr std::string_view kFeatureMagic = "HRGF";
inline constexpr std::uint32_t kFeatureVersion = 1;

struct ShapeRecord {
    std::string id;
    Matrix views;  // N x D, ring order
    std::size_t coarse_label = 0;
    std::optional<std::size_t> fine_label;

    friend bool operator==(const ShapeRecord&, const ShapeRecord&) = default;
};

struct FeatureDataset {
    std::vector<ShapeRecord> records;
    std::size_t num_classes = 0;
    std::size_t num_fine_classes = 0;  // 0 = no fine labels
    std::size_t views = 0;
    std::size_t dim = 0;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
    // Throws DataError naming the offending record.
    void validate() const;

    friend bool operator==(const FeatureDataset&, const FeatureDataset&) = default;
};

// HRGF v1 container. Little-endian:
//   magic[4] u32 version u32 count u32 N u32 D u32 classes u32 fine_classes
//   per record: u16 id_len, id bytes, u32 coarse, u32 fine (0xFFFFFFFF = absent),
//               N*D f64 row-major
// The magic is a parameter so descriptor indexes can reuse the layout.
std::string encode_dataset(const FeatureDataset& ds, std::string_view magic = kFeatureMagic);
FeatureDataset decode_dataset(std::string_view bytes, std::string_view magic = kFeatureMagic);

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path);
FeatureDataset load_dataset(const std::filesystem::path& path);

struct DatasetSplit {
    FeatureDataset train;
    FeatureDataset test;
    std::vector<std::string> warnings;
};

// Stratified by coarse label, deterministic under seed. Classes with fewer than
// two samples go entirely to train with a warning.
DatasetSplit split(const FeatureDataset& ds, double train_fraction, std::uint64_t seed);

} // namespace hrge
