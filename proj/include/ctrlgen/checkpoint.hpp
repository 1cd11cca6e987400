#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ctrlgen/tensor.hpp"
#include "ctrlgen/util.hpp"

// Single-file checkpoint: a fixed magic and format version, one JSON blob
// describing the architecture, then each named parameter as
//   u32 name length, name bytes, u32 rank, i64 dims, f32 values (row major).
// All integers and floats are written little-endian byte by byte, so files
// move between machines regardless of host endianness.

namespace ctrlgen {

inline constexpr char kCheckpointMagic[4] = {'C', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    int ch = in.get();
    if (ch == std::istream::traits_type::eof()) throw DataError("checkpoint truncated");
    v |= static_cast<std::uint64_t>(ch & 0xff) << (8 * i);
  }
  return static_cast<T>(v);
}

inline void write_f32(std::ostream& out, float value) {
  std::uint32_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  write_le(out, bits);
}

inline float read_f32(std::istream& in) {
  std::uint32_t bits = read_le<std::uint32_t>(in);
  float value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace detail

template <typename S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>>>;

template <typename S>
void save_checkpoint(const std::string& path, const std::string& arch_json, const NamedParams<S>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(cat("cannot write checkpoint ", path));
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_le(out, kCheckpointVersion);
  detail::write_le(out, static_cast<std::uint64_t>(arch_json.size()));
  out.write(arch_json.data(), static_cast<std::streamsize>(arch_json.size()));
  detail::write_le(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    detail::write_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = tensor.shape();
    detail::write_le(out, static_cast<std::uint32_t>(shape.size()));
    for (Eigen::Index dim : shape) detail::write_le(out, static_cast<std::int64_t>(dim));
    const auto& value = tensor.value();
    for (Eigen::Index r = 0; r < value.rows(); ++r)
      for (Eigen::Index c = 0; c < value.cols(); ++c)
        detail::write_f32(out, static_cast<float>(value(r, c)));
  }
  if (!out) throw DataError(cat("write failed for checkpoint ", path));
}

struct RawParam {
  std::string name;
  Shape shape;
  std::vector<float> values;  // row major
};

struct RawCheckpoint {
  std::string arch_json;
  std::vector<RawParam> params;
};

inline RawCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(cat("cannot open checkpoint ", path));
  char magic[4];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError(cat(path, " is not a checkpoint file"));
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError(cat(path, ": unsupported checkpoint version ", version));

  RawCheckpoint ckpt;
  const auto arch_len = detail::read_le<std::uint64_t>(in);
  ckpt.arch_json.resize(arch_len);
  in.read(ckpt.arch_json.data(), static_cast<std::streamsize>(arch_len));
  if (static_cast<std::uint64_t>(in.gcount()) != arch_len) throw DataError("checkpoint truncated");

  const auto n_params = detail::read_le<std::uint64_t>(in);
  for (std::uint64_t p = 0; p < n_params; ++p) {
    RawParam param;
    const auto name_len = detail::read_le<std::uint32_t>(in);
    param.name.resize(name_len);
    in.read(param.name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) throw DataError("checkpoint truncated");
    const auto rank = detail::read_le<std::uint32_t>(in);
    if (rank > 2) throw DataError(cat("checkpoint parameter ", param.name, " has rank ", rank));
    std::int64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      auto dim = detail::read_le<std::int64_t>(in);
      if (dim < 0) throw DataError(cat("negative dimension in checkpoint parameter ", param.name));
      param.shape.push_back(static_cast<Eigen::Index>(dim));
      total *= dim;
    }
    param.values.reserve(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) param.values.push_back(detail::read_f32(in));
    ckpt.params.push_back(std::move(param));
  }
  return ckpt;
}

// Copies checkpoint values into an existing parameter list. Names must match
// one to one and shapes must agree; extra or missing parameters are errors.
template <typename S>
std::string load_checkpoint_into(const std::string& path, NamedParams<S>& params) {
  RawCheckpoint ckpt = read_checkpoint(path);
  if (ckpt.params.size() != params.size())
    throw DataError(cat(path, " holds ", ckpt.params.size(), " parameters, model expects ", params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    const RawParam& raw = ckpt.params[i];
    if (raw.name != name)
      throw DataError(cat(path, ": parameter ", i, " is '", raw.name, "', expected '", name, "'"));
    if (raw.shape != tensor.shape())
      throw DataError(cat(path, ": shape mismatch for ", name));
    MatrixX<S>& value = tensor.value();
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < value.rows(); ++r)
      for (Eigen::Index c = 0; c < value.cols(); ++c) value(r, c) = static_cast<S>(raw.values[k++]);
  }
  return ckpt.arch_json;
}

}  // namespace ctrlgen
