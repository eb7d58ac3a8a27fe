#pragma once

// Embedding archive ("GDCE") and generation manifest.
//
// GDCE layout, little-endian throughout:
//   "GDCE" | version u16 = 1 | dtype u8 = 0 (f32) | d u32
//   per class: label_len u16 (> 0) | label bytes (UTF-8) | rows u32 | rows*d f32, row-major
//   end marker: u32 = 0 (read where the next label length would be)

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gdc/block.hpp"
#include "gdc/error.hpp"

namespace gdc {

struct ArchiveClass {
  std::string label;
  FloatBlock block;

  friend bool operator==(const ArchiveClass&, const ArchiveClass&) = default;
};

class EmbeddingArchive {
 public:
  explicit EmbeddingArchive(std::uint32_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be >= 1");
  }

  std::uint32_t dim() const noexcept { return dim_; }
  const std::vector<ArchiveClass>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  const ArchiveClass& operator[](std::size_t i) const { return classes_[i]; }

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& c : classes_) n += c.block.rows();
    return n;
  }

  std::optional<std::size_t> find(std::string_view label) const {
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i].label == label) return i;
    return std::nullopt;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& c : classes_) out.push_back(c.label);
    return out;
  }

  void add_class(std::string label, FloatBlock block) {
    if (label.empty()) throw Error(ErrorKind::InvalidArgument, "class label must be non-empty");
    if (label.size() > 0xFFFF) throw Error(ErrorKind::InvalidArgument, "class label longer than 65535 bytes");
    if (block.cols() != dim_ && !(block.rows() == 0 && block.cols() == 0))
      throw Error(ErrorKind::DimensionMismatch, "class '" + label + "' has width " + std::to_string(block.cols()) +
                                                    ", archive dimension is " + std::to_string(dim_));
    if (find(label)) throw Error(ErrorKind::DuplicateLabel, "duplicate class label '" + label + "'");
    for (float v : block.data())
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "class '" + label + "' contains a non-finite value");
    if (block.cols() == 0) block = FloatBlock(0, dim_);
    classes_.push_back({std::move(label), std::move(block)});
  }

  /// Replaces the block of an existing class; row count may change.
  void replace_block(std::size_t index, FloatBlock block) {
    if (block.cols() != dim_) throw Error(ErrorKind::DimensionMismatch, "replacement block width mismatch");
    classes_.at(index).block = std::move(block);
  }

  friend bool operator==(const EmbeddingArchive&, const EmbeddingArchive&) = default;

 private:
  std::uint32_t dim_;
  std::vector<ArchiveClass> classes_;
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

inline void put_label(std::ostream& out, const std::string& label) {
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(label.size()));
  out.write(label.data(), static_cast<std::streamsize>(label.size()));
}

/// Sequential little-endian reader that tracks the byte offset for error reports.
class ByteReader {
 public:
  explicit ByteReader(std::istream& in) : in_(in) {}

  std::size_t offset() const noexcept { return offset_; }

  void read(char* dst, std::size_t n, const std::string& what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) throw FormatError(ErrorKind::TruncatedFile, offset_ + got, "unexpected end of file reading " + what);
    offset_ += n;
  }

  template <class T>
  T get(const std::string& what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    std::array<char, sizeof(U)> bytes{};
    read(bytes.data(), bytes.size(), what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return std::bit_cast<T>(bits);
  }

  std::string get_string(std::size_t n, const std::string& what) {
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

inline void write_f32_values(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  } else {
    for (float v : values) put_le(out, v);
  }
}

inline void check_magic(ByteReader& r, std::string_view magic) {
  const std::string got = r.get_string(magic.size(), "magic");
  if (got != magic) throw FormatError(ErrorKind::BadMagic, 0, "expected magic '" + std::string(magic) + "'");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  return in;
}

}  // namespace detail

inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;

inline void write_embeddings(const EmbeddingArchive& archive, std::ostream& out) {
  out.write("GDCE", 4);
  detail::put_le<std::uint16_t>(out, kEmbeddingFormatVersion);
  detail::put_le<std::uint8_t>(out, 0);
  detail::put_le<std::uint32_t>(out, archive.dim());
  for (const auto& c : archive.classes()) {
    detail::put_label(out, c.label);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.block.rows()));
    detail::write_f32_values(out, c.block.data());
  }
  detail::put_le<std::uint32_t>(out, 0);
  if (!out) throw Error(ErrorKind::Io, "failed writing embedding archive");
}

inline void write_embeddings(const EmbeddingArchive& archive, const std::string& path) {
  auto out = detail::open_out(path);
  write_embeddings(archive, out);
}

inline EmbeddingArchive read_embeddings(std::istream& in) {
  detail::ByteReader r(in);
  detail::check_magic(r, "GDCE");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kEmbeddingFormatVersion)
    throw FormatError(ErrorKind::UnsupportedVersion, version_at, "embedding format version " + std::to_string(version));
  const std::size_t dtype_at = r.offset();
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype != 0) throw FormatError(ErrorKind::UnsupportedVersion, dtype_at, "dtype " + std::to_string(dtype));
  const std::size_t dim_at = r.offset();
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError(ErrorKind::DimensionMismatch, dim_at, "dimension is zero");

  EmbeddingArchive archive(dim);
  std::vector<char> raw;
  while (true) {
    const std::size_t label_at = r.offset();
    const auto label_len = r.get<std::uint16_t>("label length");
    if (label_len == 0) {
      const auto rest = r.get<std::uint16_t>("end marker");
      if (rest != 0) throw FormatError(ErrorKind::BadMagic, label_at, "malformed end marker");
      break;
    }
    std::string label = r.get_string(label_len, "class label");
    if (archive.find(label)) throw FormatError(ErrorKind::DuplicateLabel, label_at, "duplicate class label '" + label + "'");
    const auto rows = r.get<std::uint32_t>("row count of class '" + label + "'");
    const std::size_t count = static_cast<std::size_t>(rows) * dim;
    const std::size_t values_at = r.offset();
    raw.resize(count * 4);
    r.read(raw.data(), raw.size(), "values of class '" + label + "'");
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
      values[i] = std::bit_cast<float>(bits);
      if (!std::isfinite(values[i]))
        throw FormatError(ErrorKind::NonFinite, values_at + 4 * i, "non-finite value in class '" + label + "'");
    }
    archive.add_class(std::move(label), FloatBlock(rows, dim, std::move(values)));
  }
  return archive;
}

inline EmbeddingArchive read_embeddings(const std::string& path) {
  auto in = detail::open_in(path);
  return read_embeddings(in);
}

// ---------------------------------------------------------------------------
// Generation manifest

/// Prompt templates used for reference generation; "{}" is replaced by the class name.
inline const std::vector<std::string>& default_templates() {
  static const std::vector<std::string> templates = {
      "a photo of a {}",         "itap of a {}",         "a bad photo of the {}", "a origami {}",
      "a photo of the large {}", "a {} in a video game", "art of the {}",         "a photo of the small {}",
  };
  return templates;
}

/// One generation job: `count` images of `label` from `prompt`, image j seeded with seed + j.
struct ManifestEntry {
  std::string label;
  std::string prompt;
  std::uint32_t count = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct GenerationManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> templates;
  std::uint32_t per_class_target = 0;

  std::size_t images_for(std::string_view label) const {
    std::size_t n = 0;
    for (const auto& e : entries)
      if (e.label == label) n += e.count;
    return n;
  }
  std::size_t total_images() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.count;
    return n;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline GenerationManifest expand_manifest(const std::vector<std::string>& labels,
                                          const std::vector<std::string>& templates, std::uint32_t per_template,
                                          std::uint64_t seed) {
  if (labels.empty()) throw Error(ErrorKind::EmptyInput, "no class labels");
  if (templates.empty()) throw Error(ErrorKind::EmptyInput, "no prompt templates");
  if (per_template == 0) throw Error(ErrorKind::InvalidArgument, "per-template count must be >= 1");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw Error(ErrorKind::EmptyInput, "empty class label");
    if (l.find_first_of("\t\n\r") != std::string::npos)
      throw Error(ErrorKind::InvalidArgument, "label '" + l + "' contains a tab or newline");
    if (!seen.insert(l).second) throw Error(ErrorKind::DuplicateLabel, "duplicate class label '" + l + "'");
  }
  for (const auto& t : templates) {
    const auto first = t.find("{}");
    if (first == std::string::npos || t.find("{}", first + 2) != std::string::npos)
      throw Error(ErrorKind::MissingPlaceholder, "template '" + t + "' must contain '{}' exactly once");
    if (t.find_first_of("\t\n\r") != std::string::npos)
      throw Error(ErrorKind::InvalidArgument, "template '" + t + "' contains a tab or newline");
  }

  GenerationManifest m;
  m.templates = templates;
  m.per_class_target = static_cast<std::uint32_t>(templates.size()) * per_template;
  for (std::size_t li = 0; li < labels.size(); ++li) {
    for (std::size_t ti = 0; ti < templates.size(); ++ti) {
      std::string prompt = templates[ti];
      prompt.replace(prompt.find("{}"), 2, labels[li]);
      // Record seeds are spaced 2^32 apart so per-image seeds (seed + j) never collide.
      const std::uint64_t record = li * templates.size() + ti;
      const std::uint64_t record_seed = detail::splitmix64(seed) + (record << 32);
      m.entries.push_back({labels[li], std::move(prompt), per_template, record_seed});
    }
  }
  return m;
}

/// One record per line: label \t prompt \t count \t seed.
inline void write_manifest(const GenerationManifest& m, std::ostream& out) {
  for (const auto& e : m.entries) out << e.label << '\t' << e.prompt << '\t' << e.count << '\t' << e.seed << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing manifest");
}

inline std::vector<ManifestEntry> read_manifest(std::istream& in) {
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 4)
      throw Error(ErrorKind::InvalidArgument, "manifest line " + std::to_string(line_no) + " does not have 4 fields");
    ManifestEntry e{fields[0], fields[1], 0, 0};
    try {
      e.count = static_cast<std::uint32_t>(std::stoul(fields[2]));
      e.seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "manifest line " + std::to_string(line_no) + " has a bad count or seed");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Reads non-empty lines, trimming trailing carriage returns.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace gdc
