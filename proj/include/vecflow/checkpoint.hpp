#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vecflow/nn.hpp"
#include "vecflow/optim.hpp"

namespace vecflow {

// Binary checkpoint layout (all integers and floats little-endian):
//
//   u8   version            (kCheckpointVersion)
//   char magic[4]           "VFCK"
//   u32  entry_count
//   entry_count times:
//     u32  name_length, name bytes (UTF-8)
//     u32  ndim, ndim x u64 extents
//     f64  values[product(extents)]
//
// Optimizer state is stored as ordinary entries under the "adam/" prefix.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct ArrayEntry {
  Shape shape;
  std::vector<double> values;
};

using ArrayMap = std::map<std::string, ArrayEntry>;

void write_arrays(const std::filesystem::path& path, const std::vector<std::pair<std::string, ArrayEntry>>& entries);
ArrayMap read_arrays(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const AdamState* adam = nullptr);

// Copies stored values into the already-constructed parameters; every
// parameter must be present with an identical shape. When `adam` is non-null
// and the file carries optimizer state, it is restored as well.
void load_checkpoint(const std::filesystem::path& path, ParameterSet& params, AdamState* adam = nullptr);

}  // namespace vecflow
