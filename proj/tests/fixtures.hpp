#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <random>
#include <string>
#include <vector>

#include "tokswap/aux_embeddings.hpp"
#include "tokswap/embedding.hpp"
#include "tokswap/transfer.hpp"
#include "tokswap/vocabulary.hpp"

namespace fixtures {

inline tokswap::Vocabulary plain_vocab(std::vector<std::string> tokens, bool byte_fallback = false) {
  tokswap::PreTokenizerConfig cfg;
  cfg.byte_fallback = byte_fallback;
  if (byte_fallback) {
    for (int b = 0; b < 256; ++b) tokens.push_back(tokswap::byte_token(static_cast<std::uint8_t>(b)));
  }
  return tokswap::Vocabulary(std::move(tokens), {}, cfg, {});
}

inline tokswap::EmbeddingMatrix matrix_for(const tokswap::Vocabulary& v, const std::vector<std::vector<float>>& rows) {
  tokswap::EmbeddingMatrix m(v.size(), rows.empty() ? 0 : rows[0].size(), v.hash());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

inline tokswap::EmbeddingMatrix random_matrix(const tokswap::Vocabulary& v, std::size_t dim, std::uint64_t seed) {
  tokswap::EmbeddingMatrix m(v.size(), dim, v.hash());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (auto& x : m.row(i)) x = static_cast<float>(normal(rng));
  }
  return m;
}

/// Three overlapping tokens a, b, c with unit-basis source rows and a new
/// target token "n" whose auxiliary cosines to a, b, c are 0.9, 0.5, 0.1.
struct ThreeOverlap {
  tokswap::Vocabulary source = plain_vocab({"a", "b", "c"});
  tokswap::Vocabulary target = plain_vocab({"a", "b", "c", "n"});
  tokswap::EmbeddingMatrix source_emb = matrix_for(source, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  tokswap::AuxiliaryEmbeddings aux = make_aux();

  static tokswap::AuxiliaryEmbeddings make_aux() {
    tokswap::AuxiliaryEmbeddings aux(4);
    aux.add("a", {0.9, std::sqrt(1 - 0.81), 0, 0});
    aux.add("b", {0.5, 0, std::sqrt(1 - 0.25), 0});
    aux.add("c", {0.1, 0, 0, std::sqrt(1 - 0.01)});
    aux.add("n", {1, 0, 0, 0});
    return aux;
  }
};

struct RandomInstance {
  tokswap::Vocabulary source;
  tokswap::Vocabulary target;
  tokswap::EmbeddingMatrix source_emb;
  tokswap::AuxiliaryEmbeddings aux;
};

// Random toy vocabularies over a small alphabet with partial overlap; aux
// vectors for every token of both, except a few target tokens left out so the
// fallback ladder is exercised too.
inline RandomInstance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 3);
  std::uniform_int_distribution<int> letter(0, 5);
  auto random_token = [&] {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + letter(rng)));
    return s;
  };
  std::set<std::string> src_set = {"a", "b", "c", "d", "e", "f"};
  const std::size_t src_size = std::uniform_int_distribution<std::size_t>(8, 64)(rng);
  while (src_set.size() < src_size) src_set.insert(random_token());
  std::set<std::string> tgt_set;
  const std::size_t tgt_size = std::uniform_int_distribution<std::size_t>(8, 64)(rng);
  while (tgt_set.size() < tgt_size) tgt_set.insert(random_token() + (letter(rng) < 2 ? "x" : ""));
  tgt_set.insert("a");

  std::vector<std::string> src(src_set.begin(), src_set.end());
  std::vector<std::string> tgt(tgt_set.begin(), tgt_set.end());
  std::shuffle(tgt.begin(), tgt.end(), rng);
  auto source = plain_vocab(src);
  auto target = plain_vocab(tgt);
  const std::size_t d = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
  const std::size_t da = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
  auto emb = random_matrix(source, d, seed + 1);

  tokswap::AuxiliaryEmbeddings aux(da);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::set<std::string> all(src.begin(), src.end());
  all.insert(tgt.begin(), tgt.end());
  for (const auto& t : all) {
    if (!src_set.contains(t) && letter(rng) == 0) continue;
    std::vector<double> v(da);
    for (auto& x : v) x = normal(rng);
    aux.add(t, v);
  }
  return {std::move(source), std::move(target), std::move(emb), std::move(aux)};
}

}  // namespace fixtures
