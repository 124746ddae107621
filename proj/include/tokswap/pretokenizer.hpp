#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tokswap/utf8.hpp"

namespace tokswap {

/// U+2581, written in place of a space that starts a fragment.
inline constexpr char32_t kSpaceMarker = 0x2581;
inline constexpr std::string_view kSpaceMarkerUtf8 = "\xE2\x96\x81";

enum class WhitespacePolicy { kAttachLeadingSpace, kStandalone };

struct PreTokenizerConfig {
  bool split_digits = false;
  bool isolate_punctuation = false;
  WhitespacePolicy whitespace_policy = WhitespacePolicy::kAttachLeadingSpace;
  bool lowercase = false;
  bool byte_fallback = false;

  friend bool operator==(const PreTokenizerConfig&, const PreTokenizerConfig&) = default;
};

inline std::string_view to_string(WhitespacePolicy p) {
  return p == WhitespacePolicy::kStandalone ? "standalone" : "attach-leading-space";
}

inline WhitespacePolicy parse_whitespace_policy(std::string_view s) {
  if (s == "attach-leading-space") return WhitespacePolicy::kAttachLeadingSpace;
  if (s == "standalone") return WhitespacePolicy::kStandalone;
  throw Error(ErrorKind::kFormat, "unknown whitespace policy '" + std::string(s) + "'");
}

/// A pre-token. `space_marker` stands for one consumed U+0020; `body` holds the
/// remaining characters verbatim, so a literal U+2581 in the input can never be
/// confused with the marker.
struct Fragment {
  bool space_marker = false;
  std::u32string body;

  std::string str() const {
    std::string out;
    if (space_marker) out += kSpaceMarkerUtf8;
    out += utf8::encode(body);
    return out;
  }

  /// The text this fragment was cut from.
  std::string text() const {
    std::string out;
    if (space_marker) out.push_back(' ');
    out += utf8::encode(body);
    return out;
  }

  friend bool operator==(const Fragment&, const Fragment&) = default;
  friend auto operator<=>(const Fragment&, const Fragment&) = default;
};

namespace detail {

enum class CharClass { kLetter, kDigit, kPunct, kSpace, kOtherSpace };

inline CharClass classify(char32_t cp, const PreTokenizerConfig& cfg) {
  if (cp == U' ') return CharClass::kSpace;
  if (utf8::is_whitespace(cp)) return CharClass::kOtherSpace;
  if (cfg.split_digits && utf8::is_digit(cp)) return CharClass::kDigit;
  if (cfg.isolate_punctuation && utf8::is_punctuation(cp)) return CharClass::kPunct;
  return CharClass::kLetter;
}

}  // namespace detail

inline std::vector<Fragment> pretokenize_fragments(std::string_view text,
                                                   const PreTokenizerConfig& cfg) {
  std::u32string cps = utf8::decode(text);
  if (cfg.lowercase) {
    for (auto& cp : cps) cp = utf8::to_lower(cp);
  }

  std::vector<Fragment> out;
  std::size_t i = 0;
  const std::size_t n = cps.size();
  while (i < n) {
    Fragment frag;
    if (cps[i] == U' ') {
      frag.space_marker = true;
      ++i;
      const bool attach = cfg.whitespace_policy == WhitespacePolicy::kAttachLeadingSpace && i < n &&
                          cps[i] != U' ' && !utf8::is_whitespace(cps[i]);
      if (!attach) {
        out.push_back(std::move(frag));
        continue;
      }
    }
    const auto cls = detail::classify(cps[i], cfg);
    if (cls == detail::CharClass::kDigit) {
      frag.body.push_back(cps[i++]);
    } else {
      while (i < n && cps[i] != U' ' && detail::classify(cps[i], cfg) == cls) {
        frag.body.push_back(cps[i++]);
      }
    }
    out.push_back(std::move(frag));
  }
  return out;
}

/// Fragment strings with a leading-space marker where a space was consumed.
inline std::vector<std::string> pretokenize(std::string_view text, const PreTokenizerConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& f : pretokenize_fragments(text, cfg)) out.push_back(f.str());
  return out;
}

inline std::string join_fragments(const std::vector<Fragment>& fragments) {
  std::string out;
  for (const auto& f : fragments) out += f.text();
  return out;
}

}  // namespace tokswap
