#include "vecflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace vecflow {

namespace {

constexpr char kMagic[4] = {'V', 'F', 'C', 'K'};

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("truncated checkpoint: " + path.string());
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_arrays(const std::filesystem::path& path, const std::vector<std::pair<std::string, ArrayEntry>>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  put_le<std::uint8_t>(os, kCheckpointVersion);
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, entry] : entries) {
    if (shape_numel(entry.shape) != entry.values.size()) throw ContractError("checkpoint entry size mismatch: " + name);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entry.shape.size()));
    for (auto d : entry.shape) put_le<std::uint64_t>(os, d);
    for (double v : entry.values) put_le<double>(os, v);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

ArrayMap read_arrays(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  const auto version = get_le<std::uint8_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a checkpoint file: " + path.string());
  const auto count = get_le<std::uint32_t>(is, path);
  ArrayMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint: " + path.string());
    ArrayEntry entry;
    const auto ndim = get_le<std::uint32_t>(is, path);
    for (std::uint32_t d = 0; d < ndim; ++d) entry.shape.push_back(get_le<std::uint64_t>(is, path));
    entry.values.resize(shape_numel(entry.shape));
    for (auto& v : entry.values) v = get_le<double>(is, path);
    out.emplace(std::move(name), std::move(entry));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const AdamState* adam) {
  std::vector<std::pair<std::string, ArrayEntry>> entries;
  const auto& items = params.items();
  for (const auto& [name, t] : items) {
    entries.emplace_back(name, ArrayEntry{t.shape(), {t.data().begin(), t.data().end()}});
  }
  if (adam) {
    entries.emplace_back("adam/step", ArrayEntry{{1}, {static_cast<double>(adam->step)}});
    for (std::size_t i = 0; i < items.size(); ++i) {
      entries.emplace_back("adam/m/" + items[i].first, ArrayEntry{items[i].second.shape(), adam->m[i]});
      entries.emplace_back("adam/v/" + items[i].first, ArrayEntry{items[i].second.shape(), adam->v[i]});
    }
  }
  write_arrays(path, entries);
}

void load_checkpoint(const std::filesystem::path& path, ParameterSet& params, AdamState* adam) {
  const ArrayMap arrays = read_arrays(path);
  const auto& items = params.items();
  for (const auto& [name, t] : items) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IoError("checkpoint " + path.string() + " lacks parameter " + name);
    if (it->second.shape != t.shape()) {
      throw IoError("checkpoint " + path.string() + ": parameter " + name + " has shape " +
                    shape_str(it->second.shape) + ", model expects " + shape_str(t.shape()));
    }
    Tensor handle = t;
    std::copy(it->second.values.begin(), it->second.values.end(), handle.mutable_data().begin());
  }
  if (!adam) return;
  auto step = arrays.find("adam/step");
  if (step == arrays.end()) return;
  *adam = AdamState::for_params(params.tensors(), adam->hyper);
  adam->step = static_cast<std::uint64_t>(step->second.values.at(0));
  for (std::size_t i = 0; i < items.size(); ++i) {
    adam->m[i] = arrays.at("adam/m/" + items[i].first).values;
    adam->v[i] = arrays.at("adam/v/" + items[i].first).values;
  }
}

}  // namespace vecflow
