#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hrge/model.hpp"
#include "hrge/trainer.hpp"

namespace hrge {

inline constexpr std::string_view kCheckpointMagic = "HRGM";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    HrgeModel model;
    Classifier classifier;
};

// Layout (little-endian):
//   magic[4] u32 version u32 N u32 s u32 L u32 width u32 variant_tag
//   u32 pair_hidden u32 coarsen_offset u32 num_classes u32 block_count
//   per block, in declaration order: u16 name_len, name, u32 rows, u32 cols,
//   rows*cols f64.
std::string encode_checkpoint(HrgeModel& model, Classifier& clf);
Checkpoint decode_checkpoint(std::string_view bytes);

// Human-readable summary: geometry, variant and one line per block with its
// shape and L2 norm.
std::string render_manifest(HrgeModel& model, Classifier& clf);

// Writes path and path + ".manifest.txt".
void save_checkpoint(HrgeModel& model, Classifier& clf, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace hrge
