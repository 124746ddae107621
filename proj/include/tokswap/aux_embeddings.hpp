#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "tokswap/bpe.hpp"
#include "tokswap/error.hpp"
#include "tokswap/vocabulary.hpp"

namespace tokswap {

/// Token -> vector map used only for measuring similarity. All vectors share
/// one dimension, are finite and non-zero.
class AuxiliaryEmbeddings {
 public:
  explicit AuxiliaryEmbeddings(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void add(std::string token, std::vector<double> vec) {
    if (dim_ == 0 && tokens_.empty()) dim_ = vec.size();
    if (vec.size() != dim_ || dim_ == 0) {
      throw Error(ErrorKind::kDimensionMismatch, "aux vector for '" + token + "' has dimension " +
                                                     std::to_string(vec.size()) + ", expected " +
                                                     std::to_string(dim_));
    }
    double sq = 0.0;
    for (double v : vec) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kFormat, "non-finite aux value for '" + token + "'");
      sq += v * v;
    }
    if (sq == 0.0) throw Error(ErrorKind::kFormat, "zero aux vector for '" + token + "'");
    if (!index_.emplace(token, tokens_.size()).second) {
      throw Error(ErrorKind::kFormat, "duplicate aux token '" + token + "'");
    }
    tokens_.push_back(std::move(token));
    vectors_.push_back(std::move(vec));
  }

  const std::vector<double>* find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  const std::vector<double>& vector(std::size_t i) const { return vectors_[i]; }

 private:
  std::size_t dim_;
  std::vector<std::string> tokens_;
  std::vector<std::vector<double>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

// Tokens are written with \\, \n, \t, \r and \s (space) escaped so that one
// line always holds one entry.
inline std::string escape_aux_token(std::string_view t) {
  std::string out;
  for (char c : t) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case ' ': out += "\\s"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_aux_token(std::string_view t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '\\' || i + 1 == t.size()) {
      out.push_back(t[i]);
      continue;
    }
    switch (t[++i]) {
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case 's': out.push_back(' '); break;
      default:
        out.push_back('\\');
        out.push_back(t[i]);
    }
  }
  return out;
}

inline std::string serialize_aux(const AuxiliaryEmbeddings& aux) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < aux.size(); ++i) {
    out += escape_aux_token(aux.tokens()[i]);
    for (double v : aux.vector(i)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.push_back(' ');
      out.append(buf, end);
    }
    out.push_back('\n');
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses "token v1 v2 ... vd" lines. An optional word2vec-style "count dim"
/// header line is accepted. Errors cite 1-based line numbers.
inline AuxiliaryEmbeddings parse_aux(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }

  std::size_t first = 0;
  std::optional<std::size_t> expected_dim;
  if (lines.size() >= 2) {
    auto head = detail::split_fields(lines[0]);
    auto next = detail::split_fields(lines[1]);
    std::size_t count = 0;
    std::size_t dim = 0;
    auto is_uint = [](std::string_view s, std::size_t& out) {
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
      return ec == std::errc() && p == s.data() + s.size();
    };
    if (head.size() == 2 && is_uint(head[0], count) && is_uint(head[1], dim) && dim > 0 &&
        next.size() == dim + 1) {
      first = 1;
      expected_dim = dim;
    }
  }

  AuxiliaryEmbeddings aux(expected_dim.value_or(0));
  for (std::size_t ln = first; ln < lines.size(); ++ln) {
    const std::string where = "line " + std::to_string(ln + 1);
    auto fields = detail::split_fields(lines[ln]);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw Error(ErrorKind::kFormat, where + ": token without values");
    const std::size_t got = fields.size() - 1;
    if (!expected_dim) expected_dim = got;
    if (got != *expected_dim) {
      throw Error(ErrorKind::kFormat, where + ": expected " + std::to_string(*expected_dim) +
                                          " values, got " + std::to_string(got));
    }
    std::vector<double> vec;
    vec.reserve(got);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      auto v = detail::parse_double(fields[f]);
      if (!v) throw Error(ErrorKind::kFormat, where + ": bad number '" + std::string(fields[f]) + "'");
      vec.push_back(*v);
    }
    try {
      aux.add(unescape_aux_token(fields[0]), std::move(vec));
    } catch (const Error& e) {
      throw Error(ErrorKind::kFormat, where + ": " + e.message());
    }
  }
  return aux;
}

/// Positive pointwise mutual information over token co-occurrence counts.
/// Row/column order follows `types`.
struct CooccurrenceModel {
  std::vector<TokenId> types;
  Eigen::MatrixXd counts;
  Eigen::MatrixXd ppmi;
};

/// Counts pairs (i, j) with |i - j| <= window inside each document, offset 0
/// included, then applies max(0, log(c_ij * N / (c_i * c_j))).
inline CooccurrenceModel build_ppmi(std::span<const std::string> corpus, const Vocabulary& tokenizer,
                                    std::size_t window) {
  std::vector<std::vector<TokenId>> docs;
  std::map<TokenId, std::size_t> type_index;
  for (const auto& doc : corpus) {
    auto ids = encode(tokenizer, doc).ids;
    for (auto id : ids) type_index.emplace(id, 0);
    docs.push_back(std::move(ids));
  }
  CooccurrenceModel m;
  for (auto& [id, idx] : type_index) {
    idx = m.types.size();
    m.types.push_back(id);
  }
  const auto n = static_cast<Eigen::Index>(m.types.size());
  m.counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& ids : docs) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto a = static_cast<Eigen::Index>(type_index[ids[i]]);
      const std::size_t lo = i >= window ? i - window : 0;
      const std::size_t hi = std::min(ids.size() - 1, i + window);
      for (std::size_t j = lo; j <= hi; ++j) {
        m.counts(a, static_cast<Eigen::Index>(type_index[ids[j]])) += 1.0;
      }
    }
  }
  const Eigen::VectorXd row = m.counts.rowwise().sum();
  const double total = row.sum();
  m.ppmi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double c = m.counts(i, j);
      if (c > 0.0) m.ppmi(i, j) = std::max(0.0, std::log(c * total / (row(i) * row(j))));
    }
  }
  return m;
}

struct EigenPairs {
  Eigen::VectorXd values;   // sorted by descending magnitude
  Eigen::MatrixXd vectors;  // columns, orthonormal
  int iterations = 0;
};

/// Dominant-magnitude eigenpairs of a symmetric matrix by seeded subspace
/// (block power) iteration followed by a Rayleigh-Ritz step.
inline EigenPairs top_eigenpairs(const Eigen::MatrixXd& sym, std::size_t k, std::uint64_t seed,
                                 int max_iterations = 2000, double tol = 1e-12) {
  const auto n = sym.rows();
  const auto kk = static_cast<Eigen::Index>(k);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd q(n, kk);
  for (Eigen::Index j = 0; j < kk; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) q(i, j) = normal(rng);
  }
  auto orthonormalize = [&](const Eigen::MatrixXd& x) -> Eigen::MatrixXd {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, kk);
  };
  q = orthonormalize(q);

  EigenPairs out;
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(kk);
  for (int it = 1; it <= max_iterations; ++it) {
    q = orthonormalize(sym * q);
    out.iterations = it;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(q.transpose() * sym * q);
    Eigen::VectorXd vals = ritz.eigenvalues().cwiseAbs();
    std::sort(vals.data(), vals.data() + vals.size());
    const double scale = std::max(1.0, vals.maxCoeff());
    if ((vals - prev).cwiseAbs().maxCoeff() <= tol * scale && it > 1) break;
    prev = vals;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(q.transpose() * sym * q);
  const Eigen::MatrixXd u = q * ritz.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(kk));
  for (Eigen::Index i = 0; i < kk; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::abs(ritz.eigenvalues()(a)) > std::abs(ritz.eigenvalues()(b));
  });
  out.values.resize(kk);
  out.vectors.resize(n, kk);
  for (Eigen::Index c = 0; c < kk; ++c) {
    const auto src = order[static_cast<std::size_t>(c)];
    out.values(c) = ritz.eigenvalues()(src);
    Eigen::VectorXd v = u.col(src);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.vectors.col(c) = v;
  }
  return out;
}

/// Learns auxiliary vectors from co-occurrence: PPMI, rank-`dim` factorization
/// U |Lambda|^(1/2), rows unit-normalized. Tokens whose row vanishes are left out.
inline AuxiliaryEmbeddings train_aux_embeddings(std::span<const std::string> corpus,
                                                const Vocabulary& tokenizer, std::size_t dim,
                                                std::size_t window, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::kInvalidArgument, "aux dimension must be positive");
  if (corpus.empty()) throw Error(ErrorKind::kCorpusTooSmall, "empty corpus");
  const auto model = build_ppmi(corpus, tokenizer, window);
  if (model.types.size() < 2) {
    throw Error(ErrorKind::kCorpusTooSmall, "corpus has " + std::to_string(model.types.size()) +
                                                " distinct token(s); need at least 2");
  }
  if (dim > model.types.size()) {
    throw Error(ErrorKind::kCorpusTooSmall, "dimension " + std::to_string(dim) + " exceeds the " +
                                                std::to_string(model.types.size()) +
                                                " distinct tokens in the corpus");
  }
  if (model.ppmi.isZero(0.0)) {
    throw Error(ErrorKind::kCorpusTooSmall, "no positive association between any tokens");
  }
  const auto eig = top_eigenpairs(model.ppmi, dim, seed);
  AuxiliaryEmbeddings aux(dim);
  for (std::size_t t = 0; t < model.types.size(); ++t) {
    std::vector<double> v(dim);
    double sq = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      v[c] = eig.vectors(static_cast<Eigen::Index>(t), ci) * std::sqrt(std::abs(eig.values(ci)));
      sq += v[c] * v[c];
    }
    if (sq <= 1e-24) continue;
    const double norm = std::sqrt(sq);
    for (auto& x : v) x /= norm;
    aux.add(tokenizer.token(model.types[t]), std::move(v));
  }
  return aux;
}

inline AuxiliaryEmbeddings train_aux_embeddings(const std::vector<std::string>& corpus,
                                                const Vocabulary& tokenizer, std::size_t dim,
                                                std::size_t window, std::uint64_t seed) {
  return train_aux_embeddings(std::span<const std::string>(corpus), tokenizer, dim, window, seed);
}

}  // namespace tokswap
