#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tokswap/error.hpp"
#include "tokswap/pretokenizer.hpp"
#include "tokswap/vocabulary.hpp"

namespace tokswap {

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t source_len_chars = 0;
};

struct TrainResult {
  Vocabulary vocab;
  /// Set when no pair reached count 2 before the target size.
  bool saturated = false;
};

namespace detail {

using Word = std::vector<TokenId>;

// Splits a fragment into mergeable runs of base-symbol strings. A literal
// U+2581 never becomes an ordinary symbol; it always ends the current run.
inline std::vector<std::vector<std::string>> fragment_runs(const Fragment& f) {
  std::vector<std::vector<std::string>> runs(1);
  if (f.space_marker) runs.back().emplace_back(kSpaceMarkerUtf8);
  for (char32_t cp : f.body) {
    if (cp == kSpaceMarker) {
      if (!runs.back().empty()) runs.emplace_back();
      continue;
    }
    runs.back().push_back(utf8::encode(cp));
  }
  if (runs.back().empty()) runs.pop_back();
  return runs;
}

inline bool pair_less(std::size_t count_a, TokenId la, TokenId ra, std::size_t count_b, TokenId lb,
                      TokenId rb, const std::vector<std::string>& tokens) {
  // "a is preferred over b"
  if (count_a != count_b) return count_a > count_b;
  if (la != lb) return la < lb;
  return tokens[ra] < tokens[rb];
}

}  // namespace detail

/// Trains a byte-pair-encoding vocabulary. Ids are assigned in creation order:
/// specials, then the 256 byte tokens when byte fallback is on, then every
/// character seen in the corpus in code point order, then merge outputs.
/// Ties in pair frequency go to the pair whose left element was created first,
/// then to the byte-wise smaller (left, right).
inline TrainResult train_bpe(std::span<const std::string> corpus, std::size_t target_size,
                             const PreTokenizerConfig& cfg,
                             std::span<const std::string> specials = {}) {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, TokenId> index;
  std::unordered_set<std::string> reserved;
  auto add = [&](const std::string& s) {
    auto [it, inserted] = index.emplace(s, static_cast<TokenId>(tokens.size()));
    if (inserted) tokens.push_back(s);
    return it->second;
  };

  std::vector<std::string> special_list;
  for (const auto& s : specials) {
    if (s.empty()) throw Error(ErrorKind::kInvalidArgument, "empty special token");
    if (!index.contains(s)) special_list.push_back(s);
    add(s);
    reserved.insert(s);
  }
  for (int b = 0; b < 256; ++b) reserved.insert(byte_token(static_cast<std::uint8_t>(b)));
  if (cfg.byte_fallback) {
    for (int b = 0; b < 256; ++b) add(byte_token(static_cast<std::uint8_t>(b)));
  }

  // Fragment multiset, keyed by the run of base-symbol strings.
  std::map<std::vector<std::string>, std::size_t> run_counts;
  std::set<char32_t> alphabet;
  for (const auto& doc : corpus) {
    for (const auto& frag : pretokenize_fragments(doc, cfg)) {
      if (frag.space_marker) alphabet.insert(kSpaceMarker);
      for (char32_t cp : frag.body) {
        if (cp != kSpaceMarker) alphabet.insert(cp);
      }
      for (auto& run : detail::fragment_runs(frag)) ++run_counts[std::move(run)];
    }
  }
  for (char32_t cp : alphabet) add(utf8::encode(cp));

  if (target_size < tokens.size()) {
    throw Error(ErrorKind::kTargetTooSmall,
                "target size " + std::to_string(target_size) + " below base alphabet size " +
                    std::to_string(tokens.size()));
  }

  std::vector<detail::Word> words;
  std::vector<std::size_t> counts;
  for (const auto& [run, count] : run_counts) {
    detail::Word w;
    for (const auto& sym : run) w.push_back(index.at(sym));
    words.push_back(std::move(w));
    counts.push_back(count);
  }

  std::vector<Vocabulary::Merge> merges;
  bool saturated = false;
  std::unordered_map<std::uint64_t, std::size_t> pair_counts;
  auto key = [](TokenId l, TokenId r) { return (std::uint64_t{l} << 32) | r; };

  while (tokens.size() < target_size) {
    pair_counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& word = words[w];
      for (std::size_t i = 0; i + 1 < word.size(); ++i) pair_counts[key(word[i], word[i + 1])] += counts[w];
    }

    bool found = false;
    std::size_t best_count = 0;
    TokenId best_l = 0;
    TokenId best_r = 0;
    for (const auto& [k, c] : pair_counts) {
      const auto l = static_cast<TokenId>(k >> 32);
      const auto r = static_cast<TokenId>(k & 0xFFFFFFFFu);
      if (c < 2) continue;
      if (reserved.contains(tokens[l] + tokens[r])) continue;
      if (!found || detail::pair_less(c, l, r, best_count, best_l, best_r, tokens)) {
        found = true;
        best_count = c;
        best_l = l;
        best_r = r;
      }
    }
    if (!found) {
      saturated = true;
      break;
    }

    merges.emplace_back(tokens[best_l], tokens[best_r]);
    const TokenId merged = add(tokens[best_l] + tokens[best_r]);
    for (auto& word : words) {
      if (word.size() < 2) continue;
      detail::Word next;
      next.reserve(word.size());
      for (std::size_t i = 0; i < word.size(); ++i) {
        if (i + 1 < word.size() && word[i] == best_l && word[i + 1] == best_r) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(word[i]);
        }
      }
      word = std::move(next);
    }
  }

  return {Vocabulary(std::move(tokens), std::move(merges), cfg, std::move(special_list)), saturated};
}

inline TrainResult train_bpe(const std::vector<std::string>& corpus, std::size_t target_size,
                             const PreTokenizerConfig& cfg,
                             const std::vector<std::string>& specials = {}) {
  return train_bpe(std::span<const std::string>(corpus), target_size, cfg,
                   std::span<const std::string>(specials));
}

namespace detail {

struct Symbol {
  std::string text;
  TokenId id;
  bool mergeable;
};

inline void push_bytes(const Vocabulary& vocab, std::string_view bytes, std::string_view what,
                       std::vector<Symbol>& out) {
  if (!vocab.pretok().byte_fallback) {
    throw Error(ErrorKind::kUnknownSymbol, "no token covers '" + std::string(what) + "'");
  }
  for (unsigned char b : bytes) out.push_back({byte_token(b), *vocab.byte_id(b), false});
}

inline void encode_fragment(const Vocabulary& vocab, const Fragment& frag, std::vector<TokenId>& out) {
  std::vector<Symbol> syms;
  if (frag.space_marker) {
    if (auto id = vocab.find(kSpaceMarkerUtf8)) {
      syms.push_back({std::string(kSpaceMarkerUtf8), *id, true});
    } else {
      push_bytes(vocab, " ", " ", syms);
    }
  }
  for (char32_t cp : frag.body) {
    const std::string ch = utf8::encode(cp);
    std::optional<TokenId> id;
    if (cp != kSpaceMarker) id = vocab.find(ch);
    if (id) {
      syms.push_back({ch, *id, true});
    } else {
      push_bytes(vocab, ch, ch, syms);
    }
  }

  while (syms.size() > 1) {
    std::size_t best_rank = static_cast<std::size_t>(-1);
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      if (!syms[i].mergeable || !syms[i + 1].mergeable) continue;
      if (auto r = vocab.merge_rank(syms[i].text, syms[i + 1].text); r && *r < best_rank) {
        best_rank = *r;
        best_pos = i;
      }
    }
    if (best_rank == static_cast<std::size_t>(-1)) break;
    std::string merged = syms[best_pos].text + syms[best_pos + 1].text;
    const TokenId id = *vocab.find(merged);
    syms[best_pos] = {std::move(merged), id, true};
    syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  for (const auto& s : syms) out.push_back(s.id);
}

}  // namespace detail

/// Applies merges lowest rank first inside each pre-token fragment.
inline TokenSequence encode(const Vocabulary& vocab, std::string_view text) {
  TokenSequence seq;
  seq.source_len_chars = utf8::count_scalars(text);
  for (const auto& frag : pretokenize_fragments(text, vocab.pretok())) {
    detail::encode_fragment(vocab, frag, seq.ids);
  }
  return seq;
}

/// Token strings for a sequence of ids, as stored in the vocabulary.
inline std::vector<std::string> token_strings(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(vocab.token(id));
  return out;
}

inline std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (auto id : ids) {
    const std::string& tok = vocab.token(id);
    if (auto b = parse_byte_token(tok)) {
      out.push_back(static_cast<char>(*b));
      continue;
    }
    std::size_t pos = 0;
    while (pos < tok.size()) {
      if (tok.compare(pos, kSpaceMarkerUtf8.size(), kSpaceMarkerUtf8) == 0) {
        out.push_back(' ');
        pos += kSpaceMarkerUtf8.size();
      } else {
        out.push_back(tok[pos++]);
      }
    }
  }
  return out;
}

inline std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
  return decode(vocab, std::span<const TokenId>(ids));
}

/// Named tokenizer over a vocabulary, usable wherever a TokenCounter is expected.
class BpeTokenizer {
 public:
  BpeTokenizer(std::string name, Vocabulary vocab) : name_(std::move(name)), vocab_(std::move(vocab)) {}

  const std::string& name() const { return name_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t count_tokens(std::string_view text) const { return encode(vocab_, text).ids.size(); }
  const Vocabulary& vocab() const { return vocab_; }

 private:
  std::string name_;
  Vocabulary vocab_;
};

}  // namespace tokswap
