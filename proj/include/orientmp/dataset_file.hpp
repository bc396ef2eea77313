#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "orientmp/tensor.hpp"

namespace orientmp {

/// What a container holds. Stored in the header so a reader can reject a
/// file meant for another task.
enum class DatasetKind : std::uint32_t { params = 0, nbody = 1, shapes = 2 };

std::string to_string(DatasetKind kind);

struct Record {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Binary container shared by datasets and trained parameters.
///
/// Little-endian layout:
///
///   0   char[4]  magic "OMPD"
///   4   u32      version (1)
///   8   u32      kind
///   12  u32      reserved, 0
///   16  u64      seed
///   24  u64      record count R
///   32  u64      metadata length M
///   40  u8[M]    metadata (UTF-8 JSON)
///   then R descriptors: u32 name length, name bytes, u32 rank, u64 extents[rank]
///   then the payload: each record's values as f64, in descriptor order
struct DatasetFile {
  static constexpr char kMagic[4] = {'O', 'M', 'P', 'D'};
  static constexpr std::uint32_t kVersion = 1;

  DatasetKind kind = DatasetKind::params;
  std::uint64_t seed = 0;
  std::string metadata;
  std::vector<Record> records;

  bool has(std::string_view name) const;
  const Record& get(std::string_view name) const;
  void add(std::string name, Shape shape, std::vector<double> values);
};

std::string serialize_dataset(const DatasetFile& file);
DatasetFile parse_dataset(std::string_view bytes);

void write_dataset(const DatasetFile& file, const std::filesystem::path& path);
DatasetFile read_dataset(const std::filesystem::path& path);

}  // namespace orientmp
