#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokswap/digest.hpp"
#include "tokswap/error.hpp"
#include "tokswap/io.hpp"

namespace tokswap {

static_assert(std::endian::native == std::endian::little, "EMB1 I/O assumes a little-endian host");

/// Row-major |V| x d float matrix bound to a vocabulary by its hash.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim, Digest vocab_hash = {})
      : rows_(rows), dim_(dim), data_(rows * dim, 0.0f), vocab_hash_(vocab_hash) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }

  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  float& at(std::size_t i, std::size_t j) { return data_[i * dim_ + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

  const std::vector<float>& data() const { return data_; }
  const Digest& vocab_hash() const { return vocab_hash_; }
  void set_vocab_hash(const Digest& h) { vocab_hash_ = h; }

  bool all_finite() const {
    for (float v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  Digest vocab_hash_{};
};

inline constexpr std::string_view kEmbMagic = "EMB1";

/// "EMB1", u32 rows, u32 dim (little-endian), rows x dim float32 row-major,
/// then the 32-byte vocabulary hash.
inline std::string serialize_embeddings(const EmbeddingMatrix& m) {
  if (m.rows() > UINT32_MAX || m.dim() > UINT32_MAX) {
    throw Error(ErrorKind::kInvalidArgument, "matrix too large for EMB1");
  }
  std::string out;
  out.reserve(12 + m.data().size() * 4 + 32);
  out += kEmbMagic;
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
  };
  put_u32(static_cast<std::uint32_t>(m.rows()));
  put_u32(static_cast<std::uint32_t>(m.dim()));
  out.append(reinterpret_cast<const char*>(m.data().data()), m.data().size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(m.vocab_hash().data()), 32);
  return out;
}

inline EmbeddingMatrix parse_embeddings(std::string_view bytes) {
  if (bytes.size() < 12 + 32 || bytes.substr(0, 4) != kEmbMagic) {
    throw Error(ErrorKind::kFormat, "not an EMB1 file");
  }
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  std::memcpy(&rows, bytes.data() + 4, 4);
  std::memcpy(&dim, bytes.data() + 8, 4);
  const std::uint64_t payload = std::uint64_t{rows} * dim * sizeof(float);
  if (bytes.size() != 12 + payload + 32) {
    throw Error(ErrorKind::kFormat, "EMB1 size mismatch: header says " + std::to_string(rows) + "x" +
                                        std::to_string(dim) + ", file has " +
                                        std::to_string(bytes.size()) + " bytes");
  }
  Digest hash{};
  std::memcpy(hash.data(), bytes.data() + 12 + payload, 32);
  EmbeddingMatrix m(rows, dim, hash);
  for (std::size_t i = 0; i < rows; ++i) {
    std::memcpy(m.row(i).data(), bytes.data() + 12 + i * dim * sizeof(float), dim * sizeof(float));
  }
  if (!m.all_finite()) throw Error(ErrorKind::kFormat, "EMB1 contains non-finite values");
  return m;
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  return parse_embeddings(read_file(path));
}

inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  write_file(path, serialize_embeddings(m));
}

}  // namespace tokswap
