// Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on
// any failure. Tolerances and runtime limits are fixed below.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "oracles/simplex_projection.hpp"
#include "published_table.hpp"
#include "test_util.hpp"
#include "tokswap/cli.hpp"
#include "tokswap/tokswap.hpp"

using namespace tokswap;
namespace fs = std::filesystem;

namespace {

constexpr double kRoundingHalfWidth = 0.005;  // published values carry two decimals
constexpr double kWordSlack = 1.0;
constexpr double kPreambleWordSlack = 2.0;
constexpr double kPreambleCharRelTol = 0.005;
constexpr double kSparsemaxTol = 1e-9;
constexpr double kWeightSumTol = 1e-9;
constexpr double kNormBoundRelTol = 1e-6;
constexpr double kPerturbationSlack = 1e-12;

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

// Collects the first few failure messages of a criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) msg_ << (msg_.tellp() > 0 ? "; " : "") << what;
  }
  Outcome done(const std::string& summary) const {
    if (failures_ == 0) return {Status::kPass, summary};
    std::ostringstream s;
    s << failures_ << " failure(s): " << msg_.str();
    return {Status::kFail, s.str()};
  }

 private:
  int failures_ = 0;
  std::ostringstream msg_;
};

std::string fmt(double x, int prec = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << x;
  return s.str();
}

struct Consensus {
  Interval chars;
  Interval words;
  std::optional<double> word_value;  // integer word count inside every row's interval
};

Consensus consensus(const std::vector<PublishedRow>& rows) {
  std::vector<Interval> c;
  std::vector<Interval> w;
  for (const auto& r : rows) {
    c.push_back(implied_chars(r, kRoundingHalfWidth));
    w.push_back(implied_words(r, kRoundingHalfWidth));
  }
  Consensus out{intersect(c), intersect(w), std::nullopt};
  const double k = std::ceil(out.words.lo);
  if (k <= out.words.hi) out.word_value = k;
  return out;
}

Outcome table_consistency() {
  Check check;
  std::ostringstream summary;
  struct Lang {
    const char* name;
    std::vector<PublishedRow> rows;
    double word_lo, word_hi, char_lo, char_hi;
  };
  const std::vector<Lang> langs = {{"pl", published::polish_rows(), 231, 233, 1792, 1796},
                                   {"en", published::english_rows(), 317, 320, 1934, 1938}};
  for (const auto& l : langs) {
    const auto c = consensus(l.rows);
    check.expect(c.chars.lo <= c.chars.hi, std::string(l.name) + " implied char intervals do not overlap");
    const double common = 0.5 * (c.chars.lo + c.chars.hi);
    for (const auto& r : l.rows) {
      const double point = static_cast<double>(r.tokens) * r.cpt;
      check.expect(std::abs(point - common) <= kRoundingHalfWidth * static_cast<double>(r.tokens),
                   std::string(l.name) + " " + r.tokenizer + " chars " + fmt(point) + " vs " + fmt(common));
    }
    check.expect(common >= l.char_lo && common <= l.char_hi, std::string(l.name) + " common chars " + fmt(common));
    check.expect(c.word_value.has_value(), std::string(l.name) + " no integer word count fits every row");
    if (c.word_value) {
      for (const auto& r : l.rows) {
        const auto iv = implied_words(r, kRoundingHalfWidth);
        check.expect(iv.lo - kWordSlack <= *c.word_value && *c.word_value <= iv.hi + kWordSlack,
                     std::string(l.name) + " " + r.tokenizer + " words");
      }
      check.expect(*c.word_value >= l.word_lo && *c.word_value <= l.word_hi,
                   std::string(l.name) + " common words " + fmt(*c.word_value, 0));
      summary << l.name << ": chars [" << fmt(c.chars.lo) << ", " << fmt(c.chars.hi) << "] words "
              << fmt(*c.word_value, 0) << "  ";
    }
  }
  return check.done(summary.str());
}

Outcome preamble_oracle() {
  Check check;
  std::ostringstream summary;
  const std::vector<std::tuple<const char*, std::string, std::vector<PublishedRow>>> langs = {
      {"pl", testutil::preamble_pl(), published::polish_rows()},
      {"en", testutil::preamble_en(), published::english_rows()}};
  for (const auto& [name, text, rows] : langs) {
    const auto c = consensus(rows);
    const auto st = text_stats(text, CountingConvention::kNormalizedSpaces);
    const double implied_c = 0.5 * (c.chars.lo + c.chars.hi);
    const double implied_w = c.word_value.value_or(0.5 * (c.words.lo + c.words.hi));
    check.expect(std::abs(static_cast<double>(st.word_count) - implied_w) <= kPreambleWordSlack,
                 std::string(name) + " words " + std::to_string(st.word_count) + " vs implied " + fmt(implied_w, 0));
    check.expect(std::abs(static_cast<double>(st.char_count) - implied_c) <= kPreambleCharRelTol * implied_c,
                 std::string(name) + " chars " + std::to_string(st.char_count) + " vs implied " + fmt(implied_c));
    summary << name << ": " << st.word_count << " words, " << st.char_count << " chars  ";
  }
  return check.done(summary.str());
}

Outcome sparsemax_oracle() {
  Check check;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> len(2, 6);
  std::normal_distribution<double> normal(0.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> z(static_cast<std::size_t>(len(rng)));
    for (auto& x : z) x = normal(rng);
    const auto got = sparsemax(z);
    const auto want = oracle::project_to_simplex(z);
    for (std::size_t k = 0; k < z.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  }
  check.expect(worst <= kSparsemaxTol, "max deviation " + std::to_string(worst));
  const auto a = sparsemax(std::vector<double>{2, 0});
  check.expect(a[0] == 1.0 && a[1] == 0.0, "[2,0]");
  const auto b = sparsemax(std::vector<double>{0.9, 0.5, 0.1});
  check.expect(std::abs(b[0] - 0.7) <= kSparsemaxTol && std::abs(b[1] - 0.3) <= kSparsemaxTol && b[2] == 0.0,
               "[0.9,0.5,0.1]");
  return check.done("1000 vectors, max deviation " + std::to_string(worst));
}

Outcome focus_invariants() {
  Check check;
  std::size_t combos = 0;
  std::size_t copies = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = fixtures::random_instance(seed);
    const auto r = focus_initialize(inst.source_emb, inst.source, inst.target, inst.aux, {seed, {}});
    const std::string tag = "seed " + std::to_string(seed);
    bool complete = r.plan.entries.size() == inst.target.size();
    for (std::size_t i = 0; complete && i < r.plan.entries.size(); ++i) complete = r.plan.entries[i].target == i;
    check.expect(complete, tag + " plan incomplete");
    if (!complete) continue;

    double max_norm = 0.0;
    std::set<TokenId> overlap_src;
    for (auto [t, s] : compute_overlap(inst.source, inst.target).pairs) {
      overlap_src.insert(s);
      const auto src = inst.source_emb.row(s);
      double n = 0.0;
      for (float x : src) n += static_cast<double>(x) * x;
      max_norm = std::max(max_norm, std::sqrt(n));
      const auto dst = r.matrix.row(t);
      check.expect(std::memcmp(src.data(), dst.data(), src.size_bytes()) == 0, tag + " overlap row not bitwise copy");
      ++copies;
    }
    for (const auto& e : r.plan.entries) {
      if (e.provenance != Provenance::kFocusCombination) continue;
      ++combos;
      double sum = 0.0;
      for (auto [s, w] : e.sources) {
        check.expect(w > 0.0 && overlap_src.contains(s), tag + " bad weight");
        sum += w;
      }
      check.expect(std::abs(sum - 1.0) <= kWeightSumTol, tag + " weights sum " + std::to_string(sum));
      double n = 0.0;
      for (float x : r.matrix.row(e.target)) n += static_cast<double>(x) * x;
      check.expect(std::sqrt(n) <= max_norm * (1 + kNormBoundRelTol), tag + " row outside norm bound");
    }
  }
  check.expect(combos > 0, "no combination rows exercised");
  return check.done("200 instances, " + std::to_string(copies) + " copies, " + std::to_string(combos) +
                    " combinations");
}

Outcome fvt_and_linear() {
  Check check;
  {
    PreTokenizerConfig lower;
    lower.lowercase = true;
    Vocabulary src({"q", "r"}, {}, lower, {});
    const auto emb = fixtures::matrix_for(src, {{0.1f, 0.2f}, {0.3f, 0.4f}});
    const auto r = fvt_initialize(emb, src, fixtures::plain_vocab({"Q", "r"}));
    check.expect(r.plan.entries[0].provenance == Provenance::kFvtDecomposition, "single piece not decomposed");
    check.expect(std::memcmp(r.matrix.row(0).data(), emb.row(0).data(), 8) == 0, "single piece not exact copy");
  }
  {
    Eigen::MatrixXd x(2, 1);
    Eigen::MatrixXd y(2, 1);
    x << 1, 2;
    y << 3, 5;
    const auto fit = fit_linear_map(x, y);
    check.expect(fit.a(0, 0) == 2.0 && fit.b(0) == 1.0,
                 "two-point fit A=" + std::to_string(fit.a(0, 0)) + " b=" + std::to_string(fit.b(0)));
    auto src = fixtures::plain_vocab({"p", "q"});
    const auto emb = fixtures::matrix_for(src, {{3}, {5}});
    AuxiliaryEmbeddings aux(1);
    aux.add("p", {1});
    aux.add("q", {2});
    aux.add("n", {4});
    const auto r = linear_initialize(emb, src, fixtures::plain_vocab({"p", "q", "n"}), aux);
    check.expect(r.matrix.at(2, 0) == 9.0f, "aux 4 maps to " + std::to_string(r.matrix.at(2, 0)));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index n = 12;
    const Eigen::Index din = 1 + static_cast<Eigen::Index>(seed % 4);
    const Eigen::Index dout = 1 + static_cast<Eigen::Index>(seed % 3);
    Eigen::MatrixXd x(n, din);
    Eigen::MatrixXd y(n, dout);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    const auto fit = fit_linear_map(x, y);
    auto residual = [&](const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
      return ((x * a.transpose()).rowwise() + b.transpose() - y).squaredNorm();
    };
    const double best = residual(fit.a, fit.b);
    for (int k = 0; k < 50; ++k) {
      const double scale = std::pow(10.0, -(k % 6));
      Eigen::MatrixXd da(dout, din);
      Eigen::VectorXd db(dout);
      for (Eigen::Index i = 0; i < da.size(); ++i) da.data()[i] = scale * normal(rng);
      for (Eigen::Index i = 0; i < db.size(); ++i) db(i) = scale * normal(rng);
      check.expect(best <= residual(fit.a + da, fit.b + db) + kPerturbationSlack,
                   "seed " + std::to_string(seed) + " perturbation improved the fit");
    }
  }
  return check.done("exact single-piece copy, A=2 b=1, 20 instances x 50 perturbations");
}

Outcome bpe_determinism() {
  Check check;
  PreTokenizerConfig cfg;
  cfg.split_digits = true;
  cfg.isolate_punctuation = true;
  cfg.byte_fallback = true;
  const std::vector<std::string> corpus = {testutil::preamble_pl(), testutil::preamble_en()};
  const auto a = serialize_vocabulary(train_bpe(corpus, 600, cfg).vocab);
  const auto b = serialize_vocabulary(train_bpe(corpus, 600, cfg).vocab);
  check.expect(a == b, "vocabulary files differ");
  const auto v = parse_vocabulary(a);
  std::mt19937_64 rng(7);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto text = testutil::random_text(rng);
    if (decode(v, encode(v, text).ids) != text) ++mismatches;
  }
  check.expect(mismatches == 0, std::to_string(mismatches) + " round-trip mismatches");
  return check.done("vocab sha256 " + sha256_hex(a).substr(0, 12) + ", 1000/1000 round trips");
}

Outcome freeze_plan() {
  Check check;
  const auto p = make_freeze_plan(50, Stage::kBoundaryAdaptation);
  const std::vector<std::string> want = {"input_embedding", "0", "1", "48", "49", "lm_head"};
  check.expect(p.trainable() == want, "boundary trainable set");
  const auto m = pipeline_manifest(50);
  check.expect(m.size() == 2 && m[0].token_budget == 4'000'000'000ULL && m[1].token_budget == 16'000'000'000ULL,
               "stage budgets");
  check.expect(m[0].token_budget + m[1].token_budget == 20'000'000'000ULL, "budget sum");
  return check.done("trainable {input_embedding, 0, 1, 48, 49, lm_head}; 4e9 + 16e9 = 2e10");
}

// Looks for <slug>.json vocabulary files converted from the genuine tokenizers
// and runs the metrics command on both preambles for each one found.
Outcome external_tokenizers(const std::string& dir) {
  if (dir.empty() || !fs::is_directory(dir)) return {Status::kSkip, "no external tokenizer directory"};
  Check check;
  int found = 0;
  const std::vector<std::pair<std::string, bool>> texts = {{testutil::data_path("preamble_pl.txt"), true},
                                                           {testutil::data_path("preamble_en.txt"), false}};
  for (const auto& e : published::entries()) {
    const auto path = (fs::path(dir) / (e.slug + ".json")).string();
    if (!fs::exists(path)) continue;
    ++found;
    for (const auto& [text, polish] : texts) {
      const auto prefix = (fs::temp_directory_path() / ("tokswap_acceptance_" + e.slug)).string();
      std::vector<std::string> args = {"tokswap", "metrics", "--vocab", e.slug + "=" + path, "--text", text,
                                       "--out", prefix};
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out;
      std::ostringstream err;
      const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
      check.expect(code == 0, e.slug + ": metrics exited " + std::to_string(code) + " " + err.str());
      if (code != 0) continue;
      const auto report = nlohmann::json::parse(read_file(prefix + ".json")).at("reports").at(0);
      const auto& row = polish ? e.polish : e.english;
      const std::string lang = polish ? " pl" : " en";
      const auto tokens = report.at("tokens").get<std::size_t>();
      check.expect(tokens == row.tokens,
                   e.slug + lang + " tokens " + std::to_string(tokens) + " vs " + std::to_string(row.tokens));
      const auto cpt = round_half_even(Ratio{report.at("chars").get<std::uint64_t>(), tokens}, 2);
      const auto tpw = round_half_even(Ratio{tokens, report.at("words").get<std::uint64_t>()}, 2);
      check.expect(cpt == fmt(row.cpt, 2), e.slug + lang + " CpT " + cpt);
      check.expect(tpw == fmt(row.tpw, 2), e.slug + lang + " TpW " + tpw);
      fs::remove(prefix + ".json");
      fs::remove(prefix + ".csv");
    }
  }
  if (found == 0) return {Status::kSkip, "no tokenizer files in " + dir};
  return check.done(std::to_string(found) + " tokenizer(s) reproduced");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tokswap acceptance suite"};
  std::string external_dir;
  app.add_option("--external-dir", external_dir, "Directory with <slug>.json tokenizer vocabularies");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "published table internal consistency", 1.0, table_consistency},
      {2, "preamble count oracle", 1.0, preamble_oracle},
      {3, "sparsemax oracle equivalence", 5.0, sparsemax_oracle},
      {4, "FOCUS invariants", 5.0, focus_invariants},
      {5, "FVT and linear laws", 5.0, fvt_and_linear},
      {6, "BPE determinism and round trip", 10.0, bpe_determinism},
      {7, "freeze-plan exactness", 1.0, freeze_plan},
      {8, "external tokenizer integration", 600.0, [&] { return external_tokenizers(external_dir); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::kPass && secs >= c.limit_s) {
      o = {Status::kFail, "runtime " + fmt(secs) + " s exceeds " + fmt(c.limit_s, 1) + " s"};
    }
    const char* label = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    if (o.status == Status::kFail) ++failed;
    std::cout << label << " [" << c.id << "] " << c.name << " (" << fmt(secs) << " s): " << o.detail << "\n";
  }
  return failed == 0 ? 0 : 1;
}
