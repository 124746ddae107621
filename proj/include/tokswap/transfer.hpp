#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tokswap/aux_embeddings.hpp"
#include "tokswap/bpe.hpp"
#include "tokswap/embedding.hpp"
#include "tokswap/error.hpp"
#include "tokswap/sparsemax.hpp"
#include "tokswap/vocabulary.hpp"

namespace tokswap {

/// (target id, source id) pairs whose token strings are identical, ordered by target id.
struct OverlapMap {
  std::vector<std::pair<TokenId, TokenId>> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

inline OverlapMap compute_overlap(const Vocabulary& source, const Vocabulary& target) {
  OverlapMap out;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (auto s = source.find(target.tokens()[t])) out.pairs.emplace_back(static_cast<TokenId>(t), *s);
  }
  return out;
}

enum class Provenance {
  kCopiedOverlap,
  kFocusCombination,
  kFvtDecomposition,
  kLinearMapped,
  kRandomFallback,
};

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCopiedOverlap: return "copied-overlap";
    case Provenance::kFocusCombination: return "focus-combination";
    case Provenance::kFvtDecomposition: return "fvt-decomposition";
    case Provenance::kLinearMapped: return "linear-mapped";
    case Provenance::kRandomFallback: return "random-fallback";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  for (auto p : {Provenance::kCopiedOverlap, Provenance::kFocusCombination,
                 Provenance::kFvtDecomposition, Provenance::kLinearMapped,
                 Provenance::kRandomFallback}) {
    if (to_string(p) == s) return p;
  }
  throw Error(ErrorKind::kFormat, "unknown provenance '" + std::string(s) + "'");
}

struct PlanEntry {
  TokenId target = 0;
  Provenance provenance = Provenance::kRandomFallback;
  /// (source id, weight); empty for random-fallback.
  std::vector<std::pair<TokenId, double>> sources;
};

/// How every target row is produced from source rows. The same plan applies
/// to any matrix bound to the source vocabulary (input embeddings, lm_head).
struct TransferPlan {
  std::string method;
  Digest source_hash{};
  Digest target_hash{};
  std::size_t source_rows = 0;
  std::uint64_t seed = 0;
  /// Linear fit had fewer independent points than aux dimensions + 1.
  bool rank_deficient = false;
  std::vector<PlanEntry> entries;

  std::map<std::string, std::size_t> provenance_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& e : entries) ++out[std::string(to_string(e.provenance))];
    return out;
  }
};

struct TransferOptions {
  std::uint64_t seed = 0;
  /// Token -> count, for frequency-weighted FVT. Empty means uniform weights.
  std::unordered_map<std::string, double> frequencies;
};

struct TransferResult {
  EmbeddingMatrix matrix;
  TransferPlan plan;
};

namespace detail {

inline void check_binding(const EmbeddingMatrix& emb, const Vocabulary& vocab) {
  if (emb.rows() != vocab.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedding has " + std::to_string(emb.rows()) +
                                                   " rows, vocabulary has " +
                                                   std::to_string(vocab.size()) + " tokens");
  }
  if (emb.vocab_hash() != vocab.hash()) {
    throw Error(ErrorKind::kHashMismatch, "embedding matrix is bound to a different vocabulary");
  }
}

inline TransferPlan new_plan(std::string method, const EmbeddingMatrix& src_emb, const Vocabulary& tgt,
                             std::uint64_t seed) {
  TransferPlan plan;
  plan.method = std::move(method);
  plan.source_hash = src_emb.vocab_hash();
  plan.target_hash = tgt.hash();
  plan.source_rows = src_emb.rows();
  plan.seed = seed;
  plan.entries.reserve(tgt.size());
  return plan;
}

inline std::vector<std::optional<TokenId>> overlap_lookup(const OverlapMap& overlap, std::size_t n) {
  std::vector<std::optional<TokenId>> out(n);
  for (auto [t, s] : overlap.pairs) out[t] = s;
  return out;
}

/// Text a token string stands for: marker back to space, byte tokens to their byte.
inline std::string token_text(std::string_view token) {
  if (auto b = parse_byte_token(token)) return std::string(1, static_cast<char>(*b));
  std::string out;
  std::size_t pos = 0;
  while (pos < token.size()) {
    if (token.compare(pos, kSpaceMarkerUtf8.size(), kSpaceMarkerUtf8) == 0) {
      out.push_back(' ');
      pos += kSpaceMarkerUtf8.size();
    } else {
      out.push_back(token[pos++]);
    }
  }
  return out;
}

/// FVT weights for one target token string, or nullopt when the source
/// tokenizer cannot cover it.
inline std::optional<std::vector<std::pair<TokenId, double>>> fvt_weights(
    const Vocabulary& src_vocab, std::string_view token,
    const std::unordered_map<std::string, double>& freq) {
  std::vector<TokenId> pieces;
  try {
    pieces = encode(src_vocab, token_text(token)).ids;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kUnknownSymbol || e.kind() == ErrorKind::kInvalidUtf8) return std::nullopt;
    throw;
  }
  if (pieces.empty()) return std::nullopt;
  std::vector<double> w(pieces.size(), 1.0);
  if (!freq.empty()) {
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      auto it = freq.find(src_vocab.token(pieces[i]));
      w[i] = it == freq.end() ? 0.0 : std::max(0.0, it->second);
      total += w[i];
    }
    if (total == 0.0) std::fill(w.begin(), w.end(), 1.0);
  }
  double total = 0.0;
  for (double x : w) total += x;
  std::map<TokenId, double> agg;
  for (std::size_t i = 0; i < pieces.size(); ++i) agg[pieces[i]] += w[i] / total;
  std::vector<std::pair<TokenId, double>> out;
  for (auto [id, x] : agg) {
    if (x > 0.0) out.emplace_back(id, x);
  }
  return out;
}

inline void push_fallback(TransferPlan& plan, TokenId t, const Vocabulary& src_vocab,
                          const Vocabulary& tgt_vocab, const TransferOptions& opts) {
  if (auto w = fvt_weights(src_vocab, tgt_vocab.token(t), opts.frequencies)) {
    plan.entries.push_back({t, Provenance::kFvtDecomposition, std::move(*w)});
  } else {
    plan.entries.push_back({t, Provenance::kRandomFallback, {}});
  }
}

}  // namespace detail

/// Builds one target matrix from a source matrix by following `plan`. Copies
/// are bitwise; combinations accumulate in double; random rows are drawn per
/// dimension from N(mean_j, std_j) of the source matrix, in target-id order
/// from a generator seeded with plan.seed.
inline EmbeddingMatrix realize_plan(const TransferPlan& plan, const EmbeddingMatrix& src) {
  if (src.vocab_hash() != plan.source_hash) {
    throw Error(ErrorKind::kHashMismatch, "matrix is not bound to the plan's source vocabulary");
  }
  if (src.rows() != plan.source_rows) {
    throw Error(ErrorKind::kDimensionMismatch, "matrix row count differs from the plan's source");
  }
  const std::size_t d = src.dim();
  EmbeddingMatrix out(plan.entries.size(), d, plan.target_hash);

  std::vector<double> mean(d, 0.0);
  std::vector<double> stdev(d, 0.0);
  const bool needs_random = std::any_of(plan.entries.begin(), plan.entries.end(), [](const auto& e) {
    return e.provenance == Provenance::kRandomFallback;
  });
  if (needs_random && src.rows() > 0) {
    for (std::size_t i = 0; i < src.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += src.at(i, j);
    }
    for (auto& m : mean) m /= static_cast<double>(src.rows());
    for (std::size_t i = 0; i < src.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = src.at(i, j) - mean[j];
        stdev[j] += dv * dv;
      }
    }
    for (auto& s : stdev) s = std::sqrt(s / static_cast<double>(src.rows()));
  }
  std::mt19937_64 rng(plan.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> acc(d);
  for (const auto& e : plan.entries) {
    if (e.target >= out.rows()) throw Error(ErrorKind::kFormat, "plan target id out of range");
    auto row = out.row(e.target);
    if (e.provenance == Provenance::kRandomFallback) {
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(mean[j] + stdev[j] * normal(rng));
      }
      continue;
    }
    for (auto [s, w] : e.sources) {
      if (s >= src.rows()) throw Error(ErrorKind::kFormat, "plan source id out of range");
    }
    if (e.sources.size() == 1 && e.sources[0].second == 1.0) {
      std::copy_n(src.row(e.sources[0].first).begin(), d, row.begin());
      continue;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (auto [s, w] : e.sources) {
      auto srow = src.row(s);
      for (std::size_t j = 0; j < d; ++j) acc[j] += w * static_cast<double>(srow[j]);
    }
    for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(acc[j]);
  }
  return out;
}

/// Overlapping tokens copy their source row; every other token becomes a
/// sparsemax-weighted combination of overlapping source rows, weighted by
/// cosine similarity in the auxiliary space. Tokens without an auxiliary
/// vector go to FVT decomposition, then to random initialization.
inline TransferResult focus_initialize(const EmbeddingMatrix& src_emb, const Vocabulary& src_vocab,
                                       const Vocabulary& tgt_vocab, const AuxiliaryEmbeddings& aux,
                                       const TransferOptions& opts = {}) {
  detail::check_binding(src_emb, src_vocab);
  const auto overlap = compute_overlap(src_vocab, tgt_vocab);
  if (overlap.empty()) throw Error(ErrorKind::kNoOverlap, "source and target share no tokens");

  // Candidates: overlapping tokens that have an auxiliary vector, unit-normalized.
  std::vector<TokenId> cand_src;
  std::vector<std::vector<double>> cand_vec;
  for (auto [t, s] : overlap.pairs) {
    if (const auto* v = aux.find(tgt_vocab.token(t))) {
      double n = 0.0;
      for (double x : *v) n += x * x;
      n = std::sqrt(n);
      std::vector<double> u(*v);
      for (auto& x : u) x /= n;
      cand_src.push_back(s);
      cand_vec.push_back(std::move(u));
    }
  }
  if (cand_src.empty()) {
    throw Error(ErrorKind::kMissingAuxVector, "no overlapping token has an auxiliary vector");
  }

  auto plan = detail::new_plan("focus", src_emb, tgt_vocab, opts.seed);
  const auto lookup = detail::overlap_lookup(overlap, tgt_vocab.size());
  std::vector<double> scores(cand_src.size());
  for (std::size_t t = 0; t < tgt_vocab.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    if (lookup[t]) {
      plan.entries.push_back({tid, Provenance::kCopiedOverlap, {{*lookup[t], 1.0}}});
      continue;
    }
    const auto* v = aux.find(tgt_vocab.token(tid));
    if (!v) {
      detail::push_fallback(plan, tid, src_vocab, tgt_vocab, opts);
      continue;
    }
    if (v->size() != aux.dim()) throw Error(ErrorKind::kDimensionMismatch, "aux dimension mismatch");
    double n = 0.0;
    for (double x : *v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t c = 0; c < cand_src.size(); ++c) {
      double dot = 0.0;
      for (std::size_t j = 0; j < v->size(); ++j) dot += (*v)[j] * cand_vec[c][j];
      scores[c] = dot / n;
    }
    const auto w = sparsemax(scores);
    PlanEntry e{tid, Provenance::kFocusCombination, {}};
    for (std::size_t c = 0; c < w.size(); ++c) {
      if (w[c] > 0.0) e.sources.emplace_back(cand_src[c], w[c]);
    }
    std::sort(e.sources.begin(), e.sources.end());
    plan.entries.push_back(std::move(e));
  }
  auto matrix = realize_plan(plan, src_emb);
  return {std::move(matrix), std::move(plan)};
}

/// Each target token is the (frequency-weighted) mean of the source rows of
/// its source-tokenizer decomposition. Throws UndecomposableToken when a
/// token cannot be encoded by the source vocabulary.
inline TransferResult fvt_initialize(const EmbeddingMatrix& src_emb, const Vocabulary& src_vocab,
                                     const Vocabulary& tgt_vocab, const TransferOptions& opts = {}) {
  detail::check_binding(src_emb, src_vocab);
  const auto lookup = detail::overlap_lookup(compute_overlap(src_vocab, tgt_vocab), tgt_vocab.size());
  auto plan = detail::new_plan("fvt", src_emb, tgt_vocab, opts.seed);
  for (std::size_t t = 0; t < tgt_vocab.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    if (lookup[t]) {
      plan.entries.push_back({tid, Provenance::kCopiedOverlap, {{*lookup[t], 1.0}}});
      continue;
    }
    auto w = detail::fvt_weights(src_vocab, tgt_vocab.token(tid), opts.frequencies);
    if (!w) {
      throw Error(ErrorKind::kUndecomposableToken,
                  "source vocabulary cannot encode target token '" + tgt_vocab.token(tid) + "'");
    }
    plan.entries.push_back({tid, Provenance::kFvtDecomposition, std::move(*w)});
  }
  auto matrix = realize_plan(plan, src_emb);
  return {std::move(matrix), std::move(plan)};
}

struct LinearFit {
  Eigen::MatrixXd a;  // d_out x d_in
  Eigen::VectorXd b;  // d_out
  Eigen::VectorXd x_mean;
  /// pinv of the centered inputs, d_in x n.
  Eigen::MatrixXd centered_pinv;
  Eigen::Index rank = 0;
  bool rank_deficient = false;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return a * x + b; }

  /// Weights over the n fit rows reproducing apply(x) as a combination of targets.
  Eigen::VectorXd row_weights(const Eigen::VectorXd& x) const {
    const auto n = centered_pinv.cols();
    Eigen::VectorXd w = centered_pinv.transpose() * (x - x_mean);
    w.array() += 1.0 / static_cast<double>(n);
    return w;
  }
};

/// Least-squares (A, b) minimizing sum ||A x_i + b - y_i||^2 over the rows of
/// x (n x d_in) and y (n x d_out). Solved on centered data so b = mean(y) -
/// A mean(x); A is the minimum-norm solution when the fit is underdetermined.
inline LinearFit fit_linear_map(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() == 0 || x.rows() != y.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "linear fit needs matching non-empty row sets");
  }
  LinearFit fit;
  fit.x_mean = x.colwise().mean().transpose();
  const Eigen::VectorXd y_mean = y.colwise().mean().transpose();
  const Eigen::MatrixXd xc = x.rowwise() - fit.x_mean.transpose();
  const Eigen::MatrixXd yc = y.rowwise() - y_mean.transpose();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < x.cols();
  if (fit.rank == 0) {
    fit.centered_pinv = Eigen::MatrixXd::Zero(x.cols(), x.rows());
  } else {
    fit.centered_pinv = cod.pseudoInverse();
    // Well-conditioned full-rank fits go through the normal equations, which
    // keep small exact cases (e.g. two-point lines) exact.
    if (!fit.rank_deficient) {
      const Eigen::LDLT<Eigen::MatrixXd> normal(xc.transpose() * xc);
      if (normal.info() == Eigen::Success && normal.isPositive() && normal.rcond() > 1e-8) {
        fit.centered_pinv = normal.solve(xc.transpose());
      }
    }
  }
  fit.a = (fit.centered_pinv * yc).transpose();
  fit.b = y_mean - fit.a * fit.x_mean;
  return fit;
}

/// Fits A aux + b = source row on overlapping tokens and maps every new
/// token's auxiliary vector through it. Overlapping tokens are still copied.
inline TransferResult linear_initialize(const EmbeddingMatrix& src_emb, const Vocabulary& src_vocab,
                                        const Vocabulary& tgt_vocab, const AuxiliaryEmbeddings& aux,
                                        const TransferOptions& opts = {}) {
  detail::check_binding(src_emb, src_vocab);
  const auto overlap = compute_overlap(src_vocab, tgt_vocab);
  if (overlap.empty()) throw Error(ErrorKind::kNoOverlap, "source and target share no tokens");

  std::vector<TokenId> fit_src;
  std::vector<const std::vector<double>*> fit_aux;
  for (auto [t, s] : overlap.pairs) {
    if (const auto* v = aux.find(tgt_vocab.token(t))) {
      fit_src.push_back(s);
      fit_aux.push_back(v);
    }
  }
  if (fit_src.empty()) {
    throw Error(ErrorKind::kMissingAuxVector, "no overlapping token has an auxiliary vector");
  }
  const auto n = static_cast<Eigen::Index>(fit_src.size());
  const auto da = static_cast<Eigen::Index>(aux.dim());
  const auto d = static_cast<Eigen::Index>(src_emb.dim());
  Eigen::MatrixXd x(n, da);
  Eigen::MatrixXd y(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < da; ++j) x(i, j) = (*fit_aux[static_cast<std::size_t>(i)])[static_cast<std::size_t>(j)];
    auto row = src_emb.row(fit_src[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < d; ++j) y(i, j) = row[static_cast<std::size_t>(j)];
  }
  const auto fit = fit_linear_map(x, y);

  auto plan = detail::new_plan("linear", src_emb, tgt_vocab, opts.seed);
  plan.rank_deficient = fit.rank_deficient;
  const auto lookup = detail::overlap_lookup(overlap, tgt_vocab.size());
  for (std::size_t t = 0; t < tgt_vocab.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    if (lookup[t]) {
      plan.entries.push_back({tid, Provenance::kCopiedOverlap, {{*lookup[t], 1.0}}});
      continue;
    }
    const auto* v = aux.find(tgt_vocab.token(tid));
    if (!v) {
      detail::push_fallback(plan, tid, src_vocab, tgt_vocab, opts);
      continue;
    }
    const Eigen::VectorXd w = fit.row_weights(Eigen::Map<const Eigen::VectorXd>(v->data(), da));
    std::map<TokenId, double> agg;
    for (Eigen::Index i = 0; i < n; ++i) agg[fit_src[static_cast<std::size_t>(i)]] += w(i);
    PlanEntry e{tid, Provenance::kLinearMapped, {}};
    for (auto [s, x] : agg) {
      if (x != 0.0) e.sources.emplace_back(s, x);
    }
    plan.entries.push_back(std::move(e));
  }
  auto matrix = realize_plan(plan, src_emb);
  return {std::move(matrix), std::move(plan)};
}

/// New rows sampled per dimension from the source matrix's mean and standard
/// deviation; overlapping tokens copied.
inline TransferResult random_initialize(const EmbeddingMatrix& src_emb, const Vocabulary& src_vocab,
                                        const Vocabulary& tgt_vocab, std::uint64_t seed) {
  detail::check_binding(src_emb, src_vocab);
  const auto lookup = detail::overlap_lookup(compute_overlap(src_vocab, tgt_vocab), tgt_vocab.size());
  auto plan = detail::new_plan("random", src_emb, tgt_vocab, seed);
  for (std::size_t t = 0; t < tgt_vocab.size(); ++t) {
    const auto tid = static_cast<TokenId>(t);
    if (lookup[t]) {
      plan.entries.push_back({tid, Provenance::kCopiedOverlap, {{*lookup[t], 1.0}}});
    } else {
      plan.entries.push_back({tid, Provenance::kRandomFallback, {}});
    }
  }
  auto matrix = realize_plan(plan, src_emb);
  return {std::move(matrix), std::move(plan)};
}

/// Applies one plan to the input embedding and the output head independently.
inline std::pair<EmbeddingMatrix, EmbeddingMatrix> apply_transfer(const EmbeddingMatrix& src_in,
                                                                  const EmbeddingMatrix& src_out,
                                                                  const TransferPlan& plan) {
  return {realize_plan(plan, src_in), realize_plan(plan, src_out)};
}

// Plan serialization: JSON lines, one record per target id, plus a JSON
// header object for plan-level fields.

inline nlohmann::json to_json(const PlanEntry& e, const Vocabulary* tgt_vocab = nullptr) {
  nlohmann::json sources = nlohmann::json::array();
  for (auto [s, w] : e.sources) sources.push_back({s, w});
  nlohmann::json j = {
      {"target_id", e.target},
      {"provenance", std::string(to_string(e.provenance))},
      {"sources", std::move(sources)},
  };
  if (tgt_vocab) j["token"] = tgt_vocab->token(e.target);
  return j;
}

inline std::string serialize_plan_jsonl(const TransferPlan& plan, const Vocabulary* tgt_vocab = nullptr) {
  std::string out;
  for (const auto& e : plan.entries) {
    out += to_json(e, tgt_vocab).dump();
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::json plan_header_json(const TransferPlan& plan) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [k, v] : plan.provenance_counts()) counts[k] = v;
  return {
      {"method", plan.method},
      {"source_vocab_hash", to_hex(plan.source_hash)},
      {"target_vocab_hash", to_hex(plan.target_hash)},
      {"source_rows", plan.source_rows},
      {"seed", plan.seed},
      {"rank_deficient", plan.rank_deficient},
      {"entries", plan.entries.size()},
      {"provenance_counts", std::move(counts)},
  };
}

inline TransferPlan parse_plan(const nlohmann::json& header, std::string_view jsonl) {
  TransferPlan plan;
  try {
    plan.method = header.at("method").get<std::string>();
    plan.source_hash = from_hex(header.at("source_vocab_hash").get<std::string>());
    plan.target_hash = from_hex(header.at("target_vocab_hash").get<std::string>());
    plan.source_rows = header.at("source_rows").get<std::size_t>();
    plan.seed = header.at("seed").get<std::uint64_t>();
    plan.rank_deficient = header.value("rank_deficient", false);
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < jsonl.size()) {
      std::size_t end = jsonl.find('\n', start);
      if (end == std::string_view::npos) end = jsonl.size();
      const auto line = jsonl.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      PlanEntry e;
      e.target = j.at("target_id").get<TokenId>();
      if (e.target != plan.entries.size()) {
        throw Error(ErrorKind::kFormat, "plan line " + std::to_string(line_no) + ": expected target_id " +
                                            std::to_string(plan.entries.size()));
      }
      e.provenance = parse_provenance(j.at("provenance").get<std::string>());
      for (const auto& s : j.at("sources")) e.sources.emplace_back(s.at(0).get<TokenId>(), s.at(1).get<double>());
      plan.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("transfer plan: ") + e.what());
  }
  return plan;
}

}  // namespace tokswap
