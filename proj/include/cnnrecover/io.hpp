#pragma once

// File formats.
//
// Sample set (little-endian):
//   char[4]  magic "CNNS"
//   u32      version (1)
//   u64      d, k, r, t, n
//   u32      activation name length, then the name bytes
//   u64      seed
//   f64[n*d] inputs, row-major
//   f64[n]   labels
//
// Third-moment dump (little-endian):
//   char[4]  magic "CNT3"
//   u32      version (1)
//   u64      k
//   f64[k^3] entries in lexicographic (a, b, c) order, c fastest

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cnnrecover/csv.hpp"
#include "cnnrecover/model.hpp"
#include "cnnrecover/tensor.hpp"

namespace cnnrecover {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr std::uint32_t kSampleFormatVersion = 1;
inline constexpr std::uint32_t kTensorFormatVersion = 1;

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open '" + path + "' for writing");
  }
  template <class T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw ConfigError("write failed");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw ConfigError("cannot open '" + path + "' for reading");
  }
  template <class T>
  T get() {
    T v{};
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ConfigError("unexpected end of file");
  }

 private:
  std::ifstream in_;
};

}  // namespace detail

inline void write_samples(const std::string& path, const SampleSet& s) {
  detail::BinaryWriter w(path);
  w.put_bytes("CNNS", 4);
  w.put(kSampleFormatVersion);
  const auto& f = s.fingerprint;
  for (std::uint64_t v : {std::uint64_t{f.d}, std::uint64_t{f.k}, std::uint64_t{f.r}, std::uint64_t{f.t},
                          std::uint64_t{s.size()}})
    w.put(v);
  w.put(static_cast<std::uint32_t>(f.activation.size()));
  w.put_bytes(f.activation.data(), f.activation.size());
  w.put(f.seed);
  w.put_bytes(s.inputs.data(), sizeof(double) * static_cast<std::size_t>(s.inputs.size()));
  w.put_bytes(s.labels.data(), sizeof(double) * static_cast<std::size_t>(s.labels.size()));
  w.finish();
}

inline SampleSet read_samples(const std::string& path) {
  detail::BinaryReader rd(path);
  char magic[4];
  rd.get_bytes(magic, 4);
  if (std::memcmp(magic, "CNNS", 4) != 0) throw ConfigError("'" + path + "' is not a sample file");
  if (rd.get<std::uint32_t>() != kSampleFormatVersion) throw ConfigError("unsupported sample file version");
  SampleSet s;
  auto& f = s.fingerprint;
  f.d = rd.get<std::uint64_t>();
  f.k = rd.get<std::uint64_t>();
  f.r = rd.get<std::uint64_t>();
  f.t = rd.get<std::uint64_t>();
  const auto n = rd.get<std::uint64_t>();
  if (f.d != f.r * f.k) throw ConfigError("sample file header has d != r*k");
  const auto len = rd.get<std::uint32_t>();
  if (len > 256) throw ConfigError("sample file activation name too long");
  f.activation.resize(len);
  rd.get_bytes(f.activation.data(), len);
  Activation::parse(f.activation);
  f.seed = rd.get<std::uint64_t>();
  s.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f.d));
  s.labels.resize(static_cast<Eigen::Index>(n));
  rd.get_bytes(s.inputs.data(), sizeof(double) * n * f.d);
  rd.get_bytes(s.labels.data(), sizeof(double) * n);
  return s;
}

/// Columns x_1..x_d, y.
inline std::string samples_csv(const SampleSet& s) {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < s.inputs.cols(); ++j) header.push_back("x_" + std::to_string(j + 1));
  header.emplace_back("y");
  CsvTable table(header);
  for (Eigen::Index i = 0; i < s.inputs.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < s.inputs.cols(); ++j) row.push_back(format_number(s.inputs(i, j)));
    row.push_back(format_number(s.labels(i)));
    table.add_row(std::move(row));
  }
  return table.str();
}

inline void write_tensor(const std::string& path, const Tensor3& t) {
  detail::BinaryWriter w(path);
  w.put_bytes("CNT3", 4);
  w.put(kTensorFormatVersion);
  w.put(static_cast<std::uint64_t>(t.dim()));
  w.put_bytes(t.data().data(), sizeof(double) * t.data().size());
  w.finish();
}

inline Tensor3 read_tensor(const std::string& path) {
  detail::BinaryReader rd(path);
  char magic[4];
  rd.get_bytes(magic, 4);
  if (std::memcmp(magic, "CNT3", 4) != 0) throw ConfigError("'" + path + "' is not a tensor file");
  if (rd.get<std::uint32_t>() != kTensorFormatVersion) throw ConfigError("unsupported tensor file version");
  const auto k = rd.get<std::uint64_t>();
  if (k > kMaxTensorDim) throw ConfigError("tensor file dimension exceeds 64");
  Tensor3 t(k);
  rd.get_bytes(t.data().data(), sizeof(double) * t.data().size());
  return t;
}

}  // namespace cnnrecover
