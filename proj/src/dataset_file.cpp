#include "orientmp/dataset_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace orientmp {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void put(std::string& out, T v) {
  v = to_little(v);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) + " bytes, have " +
                                  std::to_string(remaining()));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::params: return "params";
    case DatasetKind::nbody: return "nbody";
    case DatasetKind::shapes: return "shapes";
  }
  return "unknown";
}

bool DatasetFile::has(std::string_view name) const {
  for (const auto& r : records) {
    if (r.name == name) return true;
  }
  return false;
}

const Record& DatasetFile::get(std::string_view name) const {
  for (const auto& r : records) {
    if (r.name == name) return r;
  }
  throw ConfigError("dataset has no record named '" + std::string(name) + "'");
}

void DatasetFile::add(std::string name, Shape shape, std::vector<double> values) {
  if (values.size() != numel_of(shape)) throw ShapeError("record '" + name + "' does not fill its shape");
  records.push_back({std::move(name), std::move(shape), std::move(values)});
}

std::string serialize_dataset(const DatasetFile& file) {
  std::string out;
  out.append(DatasetFile::kMagic, 4);
  put<std::uint32_t>(out, DatasetFile::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.kind));
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, file.seed);
  put<std::uint64_t>(out, file.records.size());
  put<std::uint64_t>(out, file.metadata.size());
  out += file.metadata;
  for (const auto& r : file.records) {
    if (r.values.size() != numel_of(r.shape)) throw ShapeError("record '" + r.name + "' does not fill its shape");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) put<std::uint64_t>(out, e);
  }
  for (const auto& r : file.records) {
    for (double v : r.values) put<double>(out, v);
  }
  return out;
}

DatasetFile parse_dataset(std::string_view bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (magic != std::string_view(DatasetFile::kMagic, 4)) throw FormatError(0, "bad magic, expected OMPD");
  const std::size_t version_at = in.pos();
  const auto version = in.get<std::uint32_t>("version");
  if (version != DatasetFile::kVersion) {
    throw FormatError(version_at, "unsupported version " + std::to_string(version));
  }
  const std::size_t kind_at = in.pos();
  const auto kind = in.get<std::uint32_t>("kind");
  if (kind > static_cast<std::uint32_t>(DatasetKind::shapes)) {
    throw FormatError(kind_at, "unknown dataset kind " + std::to_string(kind));
  }
  in.get<std::uint32_t>("reserved");

  DatasetFile file;
  file.kind = static_cast<DatasetKind>(kind);
  file.seed = in.get<std::uint64_t>("seed");
  const auto count = in.get<std::uint64_t>("record count");
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  if (meta_len > in.remaining()) {
    throw FormatError(in.pos(), "truncated metadata: need " + std::to_string(meta_len) + " bytes, have " +
                                    std::to_string(in.remaining()));
  }
  file.metadata = std::string(in.take(meta_len, "metadata"));

  std::uint64_t payload = 0;
  for (std::uint64_t r = 0; r < count; ++r) {
    Record rec;
    const auto name_len = in.get<std::uint32_t>("record name length");
    rec.name = std::string(in.take(name_len, "record name"));
    const std::size_t rank_at = in.pos();
    const auto rank = in.get<std::uint32_t>("record rank");
    if (rank > 16) throw FormatError(rank_at, "implausible rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) rec.shape.push_back(in.get<std::uint64_t>("record extent"));
    payload += numel_of(rec.shape) * sizeof(double);
    file.records.push_back(std::move(rec));
  }

  if (in.remaining() != payload) {
    throw FormatError(in.pos(), "payload length mismatch: expected " + std::to_string(payload) + " bytes, actual " +
                                    std::to_string(in.remaining()));
  }
  for (auto& rec : file.records) {
    rec.values.resize(numel_of(rec.shape));
    for (double& v : rec.values) v = in.get<double>("payload");
  }
  return file;
}

void write_dataset(const DatasetFile& file, const std::filesystem::path& path) {
  const std::string bytes = serialize_dataset(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dataset(bytes);
}

}  // namespace orientmp
