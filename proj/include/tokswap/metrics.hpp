#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tokswap/digest.hpp"
#include "tokswap/error.hpp"
#include "tokswap/utf8.hpp"

namespace tokswap {

/// How characters are counted. kNormalizedSpaces collapses every whitespace
/// run that contains a line break into one space, trims both ends, and counts
/// every scalar (spaces included). kNormalizedNoSpaces uses the same text but
/// skips whitespace. kRaw counts the input as given.
enum class CountingConvention { kNormalizedSpaces, kNormalizedNoSpaces, kRaw };

inline std::string_view to_string(CountingConvention c) {
  switch (c) {
    case CountingConvention::kNormalizedSpaces: return "normalized-spaces";
    case CountingConvention::kNormalizedNoSpaces: return "normalized-nospaces";
    case CountingConvention::kRaw: return "raw";
  }
  return "?";
}

inline CountingConvention parse_convention(std::string_view s) {
  if (s == "normalized-spaces") return CountingConvention::kNormalizedSpaces;
  if (s == "normalized-nospaces") return CountingConvention::kNormalizedNoSpaces;
  if (s == "raw") return CountingConvention::kRaw;
  throw Error(ErrorKind::kInvalidArgument, "unknown counting convention '" + std::string(s) + "'");
}

/// Exact non-negative rational, kept reduced.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t n, std::uint64_t d) {
    if (d == 0) throw Error(ErrorKind::kInvalidArgument, "zero denominator");
    const auto g = std::gcd(n, d);
    return g == 0 ? Ratio{0, 1} : Ratio{n / g, d / g};
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend Ratio operator*(Ratio r, std::uint64_t k) { return of(r.num * k, r.den); }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Decimal rendering rounded half-to-even at `places` digits, computed on the
/// exact rational.
inline std::string round_half_even(Ratio r, int places = 2) {
  std::uint64_t scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  const std::uint64_t scaled_num = r.num * scale;
  std::uint64_t q = scaled_num / r.den;
  const std::uint64_t rem = scaled_num % r.den;
  if (2 * rem > r.den || (2 * rem == r.den && q % 2 == 1)) ++q;
  std::string digits = std::to_string(q);
  if (places == 0) return digits;
  if (digits.size() <= static_cast<std::size_t>(places)) {
    digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
  }
  digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  return digits;
}

struct TextStats {
  std::size_t char_count = 0;
  std::size_t word_count = 0;
  std::string normalized_text;
  CountingConvention convention = CountingConvention::kNormalizedSpaces;
  std::string text_sha256;
};

inline std::string normalize_text(std::string_view text, CountingConvention convention) {
  if (convention == CountingConvention::kRaw) return std::string(text);
  const std::u32string cps = utf8::decode(text);
  std::u32string out;
  std::size_t i = 0;
  while (i < cps.size()) {
    if (!utf8::is_whitespace(cps[i])) {
      out.push_back(cps[i++]);
      continue;
    }
    std::size_t j = i;
    bool has_break = false;
    while (j < cps.size() && utf8::is_whitespace(cps[j])) has_break |= utf8::is_line_break(cps[j++]);
    if (has_break) {
      out.push_back(U' ');
    } else {
      out.append(cps, i, j - i);
    }
    i = j;
  }
  std::size_t b = 0;
  std::size_t e = out.size();
  while (b < e && utf8::is_whitespace(out[b])) ++b;
  while (e > b && utf8::is_whitespace(out[e - 1])) --e;
  return utf8::encode(std::u32string_view(out).substr(b, e - b));
}

inline TextStats text_stats(std::string_view text,
                            CountingConvention convention = CountingConvention::kNormalizedSpaces) {
  TextStats st;
  st.convention = convention;
  st.normalized_text = normalize_text(text, convention);
  bool in_word = false;
  for (char32_t cp : utf8::decode(st.normalized_text)) {
    const bool ws = utf8::is_whitespace(cp);
    if (!ws && !in_word) ++st.word_count;
    in_word = !ws;
    if (!ws || convention != CountingConvention::kNormalizedNoSpaces) ++st.char_count;
  }
  st.text_sha256 = sha256_hex(st.normalized_text);
  return st;
}

/// Anything that can report how many tokens it spends on a text.
template <typename T>
concept TokenCounter = requires(const T& t, std::string_view text) {
  { t.name() } -> std::convertible_to<std::string>;
  { t.vocab_size() } -> std::convertible_to<std::size_t>;
  { t.count_tokens(text) } -> std::convertible_to<std::size_t>;
};

struct MetricsReport {
  std::string tokenizer_name;
  std::size_t vocab_size = 0;
  std::size_t token_count = 0;
  std::size_t char_count = 0;
  std::size_t word_count = 0;
  std::string text_sha256;
  CountingConvention convention = CountingConvention::kNormalizedSpaces;

  Ratio cpt() const { return Ratio::of(char_count, token_count); }
  Ratio tpw() const { return Ratio::of(token_count, word_count); }
};

inline MetricsReport make_report(std::string name, std::size_t vocab_size, std::size_t token_count,
                                 const TextStats& stats) {
  if (stats.word_count == 0 || stats.char_count == 0) {
    throw Error(ErrorKind::kEmptyText, "ratios are undefined for empty text");
  }
  if (token_count == 0) throw Error(ErrorKind::kEmptyText, "tokenizer produced no tokens");
  return {std::move(name), vocab_size,          token_count, stats.char_count,
          stats.word_count, stats.text_sha256, stats.convention};
}

/// Tokens are counted on the normalized text so every figure refers to one string.
template <TokenCounter T>
MetricsReport evaluate(const T& tokenizer, const TextStats& stats) {
  if (stats.word_count == 0) throw Error(ErrorKind::kEmptyText, "ratios are undefined for empty text");
  return make_report(std::string(tokenizer.name()), tokenizer.vocab_size(),
                     tokenizer.count_tokens(stats.normalized_text), stats);
}

template <TokenCounter T>
MetricsReport evaluate(const T& tokenizer, std::string_view text,
                       CountingConvention convention = CountingConvention::kNormalizedSpaces) {
  return evaluate(tokenizer, text_stats(text, convention));
}

enum class SortKey { kNone, kName, kVocabSize, kTokens, kCpt, kTpw };

inline SortKey parse_sort_key(std::string_view s) {
  if (s == "none") return SortKey::kNone;
  if (s == "name") return SortKey::kName;
  if (s == "vocab_size") return SortKey::kVocabSize;
  if (s == "tokens") return SortKey::kTokens;
  if (s == "cpt") return SortKey::kCpt;
  if (s == "tpw") return SortKey::kTpw;
  throw Error(ErrorKind::kInvalidArgument, "unknown sort key '" + std::string(s) + "'");
}

struct ComparisonRow {
  MetricsReport report;
  std::string cpt_display;
  std::string tpw_display;
  /// tokens x displayed CpT and tokens / displayed TpW: what a reader of the
  /// rounded table would infer about the shared text.
  double implied_chars = 0.0;
  double implied_words = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t char_count = 0;
  std::size_t word_count = 0;
  std::string text_sha256;
  CountingConvention convention = CountingConvention::kNormalizedSpaces;
};

inline ComparisonTable compare(std::vector<MetricsReport> reports, SortKey key = SortKey::kNone) {
  ComparisonTable table;
  if (reports.empty()) return table;
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.text_sha256 != first.text_sha256 || r.convention != first.convention) {
      throw Error(ErrorKind::kMixedTexts, "report '" + r.tokenizer_name +
                                              "' was computed on a different text than '" +
                                              first.tokenizer_name + "'");
    }
  }
  table.char_count = first.char_count;
  table.word_count = first.word_count;
  table.text_sha256 = first.text_sha256;
  table.convention = first.convention;

  auto cmp_ratio = [](Ratio a, Ratio b) { return a.num * b.den < b.num * a.den; };
  switch (key) {
    case SortKey::kNone: break;
    case SortKey::kName:
      std::stable_sort(reports.begin(), reports.end(),
                       [](const auto& a, const auto& b) { return a.tokenizer_name < b.tokenizer_name; });
      break;
    case SortKey::kVocabSize:
      std::stable_sort(reports.begin(), reports.end(),
                       [](const auto& a, const auto& b) { return a.vocab_size < b.vocab_size; });
      break;
    case SortKey::kTokens:
      std::stable_sort(reports.begin(), reports.end(),
                       [](const auto& a, const auto& b) { return a.token_count < b.token_count; });
      break;
    case SortKey::kCpt:
      std::stable_sort(reports.begin(), reports.end(),
                       [&](const auto& a, const auto& b) { return cmp_ratio(a.cpt(), b.cpt()); });
      break;
    case SortKey::kTpw:
      std::stable_sort(reports.begin(), reports.end(),
                       [&](const auto& a, const auto& b) { return cmp_ratio(a.tpw(), b.tpw()); });
      break;
  }

  for (auto& r : reports) {
    ComparisonRow row;
    row.cpt_display = round_half_even(r.cpt());
    row.tpw_display = round_half_even(r.tpw());
    row.implied_chars = static_cast<double>(r.token_count) * std::stod(row.cpt_display);
    row.implied_words = static_cast<double>(r.token_count) / std::stod(row.tpw_display);
    row.report = std::move(r);
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// One published (tokens, CpT, TpW) triple where CpT and TpW were rounded to
/// `places` decimals before printing.
struct PublishedRow {
  std::string tokenizer;
  std::size_t vocab_size = 0;
  std::size_t tokens = 0;
  double cpt = 0.0;
  double tpw = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Character counts consistent with a row: tokens * CpT, widened by the
/// rounding half-width times tokens.
inline Interval implied_chars(const PublishedRow& row, double half_width = 0.005) {
  const double t = static_cast<double>(row.tokens);
  return {t * (row.cpt - half_width), t * (row.cpt + half_width)};
}

inline Interval implied_words(const PublishedRow& row, double half_width = 0.005) {
  const double t = static_cast<double>(row.tokens);
  return {t / (row.tpw + half_width), t / (row.tpw - half_width)};
}

/// Intersection of intervals; empty when lo > hi.
inline Interval intersect(const std::vector<Interval>& xs) {
  Interval out{-1e300, 1e300};
  for (const auto& x : xs) {
    out.lo = std::max(out.lo, x.lo);
    out.hi = std::min(out.hi, x.hi);
  }
  return out;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {
      {"tokenizer", r.tokenizer_name},
      {"vocab_size", r.vocab_size},
      {"tokens", r.token_count},
      {"cpt", r.cpt().value()},
      {"tpw", r.tpw().value()},
      {"chars", r.char_count},
      {"words", r.word_count},
      {"text_sha256", r.text_sha256},
      {"convention", std::string(to_string(r.convention))},
  };
}

inline nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) rows.push_back(to_json(row.report));
  return rows;
}

/// Comma-separated with every column padded to a common width. CpT and TpW
/// carry the two-decimal display values.
inline std::string to_csv(const ComparisonTable& t) {
  const std::vector<std::string> header = {"tokenizer", "vocab_size", "tokens", "cpt",        "tpw",
                                           "chars",     "words",      "text_sha256", "convention"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& row : t.rows) {
    const auto& r = row.report;
    cells.push_back({r.tokenizer_name, std::to_string(r.vocab_size), std::to_string(r.token_count),
                     row.cpt_display, row.tpw_display, std::to_string(r.char_count),
                     std::to_string(r.word_count), r.text_sha256, std::string(to_string(r.convention))});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      width[c] = std::max(width[c], utf8::count_scalars(line[c]));
    }
  }
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out += line[c];
      if (c + 1 < line.size()) {
        out.append(width[c] - utf8::count_scalars(line[c]), ' ');
        out += ", ";
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace tokswap
