#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tokswap/digest.hpp"
#include "tokswap/error.hpp"
#include "tokswap/pretokenizer.hpp"

namespace tokswap {

using TokenId = std::uint32_t;

inline constexpr int kVocabFormatVersion = 1;

/// "<0xNN>" with upper-case hex.
inline std::string byte_token(std::uint8_t b) {
  char buf[7];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

inline std::optional<std::uint8_t> parse_byte_token(std::string_view s) {
  if (s.size() != 6 || s.substr(0, 3) != "<0x" || s[5] != '>') return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  const int hi = nibble(s[3]);
  const int lo = nibble(s[4]);
  if (hi < 0 || lo < 0) return std::nullopt;
  return static_cast<std::uint8_t>(hi * 16 + lo);
}

struct PairHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h1 = std::hash<std::string>{}(p.first);
    const std::size_t h2 = std::hash<std::string>{}(p.second);
    return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
  }
};

/// Token inventory, merge list and pre-tokenizer settings. Immutable once
/// built; construction validates the id and merge invariants and builds the
/// lookup tables used by encode/decode.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() = default;

  Vocabulary(std::vector<std::string> tokens, std::vector<Merge> merges, PreTokenizerConfig pretok,
             std::vector<std::string> specials)
      : tokens_(std::move(tokens)),
        merges_(std::move(merges)),
        pretok_(pretok),
        specials_(std::move(specials)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) {
        throw Error(ErrorKind::kFormat, "empty token string at id " + std::to_string(i));
      }
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
        throw Error(ErrorKind::kFormat, "duplicate token '" + tokens_[i] + "'");
      }
    }
    byte_ids_.fill(kNone);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (auto b = parse_byte_token(tokens_[i])) byte_ids_[*b] = static_cast<TokenId>(i);
    }
    if (pretok_.byte_fallback) {
      for (int b = 0; b < 256; ++b) {
        if (byte_ids_[b] == kNone) {
          throw Error(ErrorKind::kFormat, "byte_fallback set but " + byte_token(b) + " missing");
        }
      }
    }
    for (const auto& s : specials_) {
      if (!index_.contains(s)) throw Error(ErrorKind::kFormat, "special '" + s + "' not in tokens");
    }
    merge_rank_.reserve(merges_.size());
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      const auto& [l, rt] = merges_[r];
      if (!index_.contains(l + rt)) {
        throw Error(ErrorKind::kFormat, "merge output '" + l + rt + "' not in tokens");
      }
      merge_rank_.emplace(merges_[r], r);
    }
  }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const PreTokenizerConfig& pretok() const { return pretok_; }
  const std::vector<std::string>& specials() const { return specials_; }
  std::size_t size() const { return tokens_.size(); }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<TokenId> byte_id(std::uint8_t b) const {
    return byte_ids_[b] == kNone ? std::nullopt : std::optional<TokenId>(byte_ids_[b]);
  }

  std::optional<std::size_t> merge_rank(const std::string& left, const std::string& right) const {
    auto it = merge_rank_.find(Merge{left, right});
    if (it == merge_rank_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) {
      throw Error(ErrorKind::kIdOutOfRange,
                  "token id " + std::to_string(id) + " >= " + std::to_string(tokens_.size()));
    }
    return tokens_[id];
  }

  /// SHA-256 over the token strings in id order, each followed by a NUL byte.
  Digest hash() const {
    Sha256 h;
    for (const auto& t : tokens_) h.update(t).update(std::string_view("\0", 1));
    return h.finish();
  }

 private:
  static constexpr TokenId kNone = static_cast<TokenId>(-1);

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  PreTokenizerConfig pretok_;
  std::vector<std::string> specials_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<Merge, std::size_t, PairHash> merge_rank_;
  std::array<TokenId, 256> byte_ids_{};
};

inline nlohmann::json pretok_to_json(const PreTokenizerConfig& cfg) {
  return {
      {"split_digits", cfg.split_digits},
      {"isolate_punctuation", cfg.isolate_punctuation},
      {"whitespace_policy", std::string(to_string(cfg.whitespace_policy))},
      {"lowercase", cfg.lowercase},
      {"byte_fallback", cfg.byte_fallback},
  };
}

inline PreTokenizerConfig pretok_from_json(const nlohmann::json& j) {
  PreTokenizerConfig cfg;
  cfg.split_digits = j.value("split_digits", false);
  cfg.isolate_punctuation = j.value("isolate_punctuation", false);
  cfg.whitespace_policy =
      parse_whitespace_policy(j.value("whitespace_policy", std::string("attach-leading-space")));
  cfg.lowercase = j.value("lowercase", false);
  cfg.byte_fallback = j.value("byte_fallback", false);
  return cfg;
}

/// Keys serialize in sorted order, so equal vocabularies give equal bytes.
inline nlohmann::json to_json(const Vocabulary& v) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [l, r] : v.merges()) merges.push_back({l, r});
  return {
      {"format_version", kVocabFormatVersion},
      {"tokens", v.tokens()},
      {"merges", std::move(merges)},
      {"pretok", pretok_to_json(v.pretok())},
      {"specials", v.specials()},
  };
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kVocabFormatVersion) {
      throw Error(ErrorKind::kFormat, "unsupported vocabulary format_version " +
                                          std::to_string(version));
    }
    std::vector<Vocabulary::Merge> merges;
    for (const auto& m : j.at("merges")) {
      if (!m.is_array() || m.size() != 2) throw Error(ErrorKind::kFormat, "merge must be a pair");
      merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
    }
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>(), std::move(merges),
                      pretok_from_json(j.at("pretok")),
                      j.value("specials", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("vocabulary JSON: ") + e.what());
  }
}

inline std::string serialize_vocabulary(const Vocabulary& v,
                                        const nlohmann::json& provenance = nullptr) {
  auto j = to_json(v);
  if (!provenance.is_null()) j["provenance"] = provenance;
  return j.dump(1) + "\n";
}

inline Vocabulary parse_vocabulary(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("vocabulary JSON: ") + e.what());
  }
  return vocabulary_from_json(j);
}

}  // namespace tokswap
