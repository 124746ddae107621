#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tokswap/aux_embeddings.hpp"
#include "tokswap/bpe.hpp"
#include "tokswap/embedding.hpp"
#include "tokswap/error.hpp"
#include "tokswap/io.hpp"
#include "tokswap/metrics.hpp"
#include "tokswap/trainplan.hpp"
#include "tokswap/transfer.hpp"
#include "tokswap/version.hpp"

namespace tokswap::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataError = 3,
  kPrecondition = 4,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNoOverlap:
    case ErrorKind::kMissingAuxVector:
    case ErrorKind::kUndecomposableToken:
      return kPrecondition;
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kZeroLayers:
    case ErrorKind::kTargetTooSmall:
      return kUsage;
    default:
      return kDataError;
  }
}

/// Provenance block embedded in every JSON artifact.
inline nlohmann::json provenance(const std::string& command, const nlohmann::json& params) {
  nlohmann::json cfg = {{"command", command}, {"params", params}};
  return {{"tool_version", std::string(kToolVersion)}, {"config_hash", sha256_hex(cfg.dump())}};
}

inline std::vector<std::string> read_lines(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

inline std::vector<std::string> read_corpus(const std::vector<std::string>& paths, bool line_documents) {
  std::vector<std::string> docs;
  for (const auto& p : paths) {
    if (line_documents) {
      for (auto& l : read_lines(p)) docs.push_back(std::move(l));
    } else {
      docs.push_back(read_file(p));
    }
  }
  return docs;
}

inline Vocabulary load_vocabulary(const std::string& path) {
  try {
    return parse_vocabulary(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), "'" + path + "': " + e.message());
  }
}

struct TrainTokenizerArgs {
  std::vector<std::string> corpus;
  std::size_t vocab_size = 0;
  bool split_digits = false;
  bool isolate_punct = false;
  bool byte_fallback = false;
  bool lowercase = false;
  std::string whitespace = "attach-leading-space";
  std::vector<std::string> specials;
  bool line_documents = false;
  std::string out;
};

inline int cmd_train_tokenizer(const TrainTokenizerArgs& a, std::ostream& out, std::ostream& err) {
  PreTokenizerConfig cfg;
  cfg.split_digits = a.split_digits;
  cfg.isolate_punctuation = a.isolate_punct;
  cfg.byte_fallback = a.byte_fallback;
  cfg.lowercase = a.lowercase;
  cfg.whitespace_policy = parse_whitespace_policy(a.whitespace);
  const auto corpus = read_corpus(a.corpus, a.line_documents);
  auto result = train_bpe(corpus, a.vocab_size, cfg, a.specials);

  nlohmann::json params = {{"corpus", a.corpus},         {"vocab_size", a.vocab_size},
                           {"pretok", pretok_to_json(cfg)}, {"specials", a.specials},
                           {"line_documents", a.line_documents}};
  write_file(a.out, serialize_vocabulary(result.vocab, provenance("train-tokenizer", params)));
  out << "tokens=" << result.vocab.size() << " merges=" << result.vocab.merges().size()
      << " saturated=" << (result.saturated ? "true" : "false") << " out=" << a.out << "\n";
  if (result.saturated) {
    err << "CorpusSaturated: no pair occurs twice; stopped at " << result.vocab.size() << " of "
        << a.vocab_size << " tokens (partial vocabulary written to " << a.out << ")\n";
    return kDataError;
  }
  return kOk;
}

struct MetricsArgs {
  std::vector<std::string> vocabs;
  std::string text;
  std::string convention = "normalized-spaces";
  std::string sort = "none";
  std::string out;
};

/// Vocabulary arguments are "path" or "name=path"; the name defaults to the file stem.
inline std::pair<std::string, std::string> split_named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  return {std::filesystem::path(arg).stem().string(), arg};
}

inline int cmd_metrics(const MetricsArgs& a, std::ostream& out, std::ostream& err) {
  const auto convention = parse_convention(a.convention);
  const auto sort_key = parse_sort_key(a.sort);
  const auto stats = text_stats(read_file(a.text), convention);
  if (stats.word_count == 0) throw Error(ErrorKind::kEmptyText, "'" + a.text + "' has no words");

  int status = kOk;
  std::vector<MetricsReport> reports;
  for (const auto& arg : a.vocabs) {
    const auto [name, path] = split_named_path(arg);
    try {
      BpeTokenizer tok(name, load_vocabulary(path));
      reports.push_back(evaluate(tok, stats));
    } catch (const Error& e) {
      err << "TokenizerLoadError: " << name << ": " << e.what() << "\n";
      status = kDataError;
    }
  }
  const auto table = compare(std::move(reports), sort_key);

  nlohmann::json params = {{"vocabs", a.vocabs}, {"text", a.text}, {"convention", a.convention},
                           {"sort", a.sort}};
  nlohmann::json doc = {{"format_version", 1},
                        {"provenance", provenance("metrics", params)},
                        {"text_sha256", stats.text_sha256},
                        {"convention", std::string(to_string(convention))},
                        {"chars", stats.char_count},
                        {"words", stats.word_count},
                        {"reports", to_json(table)}};
  const std::string csv = to_csv(table);
  if (!a.out.empty()) {
    write_file(a.out + ".json", doc.dump(2) + "\n");
    write_file(a.out + ".csv", csv);
  }
  out << csv;
  return status;
}

struct TransferArgs {
  std::string method;
  std::string src_vocab;
  std::string src_emb;
  std::string src_out_emb;
  std::string tgt_vocab;
  std::string aux;
  std::string freq;
  std::uint64_t seed = 0;
  std::string out;
};

inline std::unordered_map<std::string, double> read_frequencies(const std::string& path) {
  std::unordered_map<std::string, double> freq;
  std::size_t ln = 0;
  for (const auto& line : read_lines(path)) {
    ++ln;
    const auto fields = detail::split_fields(line);
    std::optional<double> v;
    if (fields.size() == 2) v = detail::parse_double(fields[1]);
    if (!v) throw Error(ErrorKind::kFormat, "'" + path + "' line " + std::to_string(ln) + ": expected 'token count'");
    freq[unescape_aux_token(fields[0])] = *v;
  }
  return freq;
}

inline int cmd_transfer(const TransferArgs& a, std::ostream& out, std::ostream&) {
  const auto src_vocab = load_vocabulary(a.src_vocab);
  const auto tgt_vocab = load_vocabulary(a.tgt_vocab);
  const auto src_emb = load_embeddings(a.src_emb);
  std::optional<EmbeddingMatrix> src_out;
  if (!a.src_out_emb.empty()) src_out = load_embeddings(a.src_out_emb);

  TransferOptions opts;
  opts.seed = a.seed;
  if (!a.freq.empty()) opts.frequencies = read_frequencies(a.freq);
  auto need_aux = [&]() {
    if (a.aux.empty()) throw Error(ErrorKind::kInvalidArgument, "--aux is required for method " + a.method);
    return parse_aux(read_file(a.aux));
  };

  TransferResult result;
  if (a.method == "focus") {
    result = focus_initialize(src_emb, src_vocab, tgt_vocab, need_aux(), opts);
  } else if (a.method == "linear") {
    result = linear_initialize(src_emb, src_vocab, tgt_vocab, need_aux(), opts);
  } else if (a.method == "fvt") {
    result = fvt_initialize(src_emb, src_vocab, tgt_vocab, opts);
  } else if (a.method == "random") {
    result = random_initialize(src_emb, src_vocab, tgt_vocab, a.seed);
  } else {
    throw Error(ErrorKind::kInvalidArgument, "unknown method '" + a.method + "'");
  }

  nlohmann::json files = nlohmann::json::object();
  const std::string emb_bytes = serialize_embeddings(result.matrix);
  write_file(a.out + ".emb", emb_bytes);
  files[a.out + ".emb"] = sha256_hex(emb_bytes);
  if (src_out) {
    const auto [in_m, out_m] = apply_transfer(src_emb, *src_out, result.plan);
    const std::string head_bytes = serialize_embeddings(out_m);
    write_file(a.out + ".lm_head.emb", head_bytes);
    files[a.out + ".lm_head.emb"] = sha256_hex(head_bytes);
  }
  const std::string plan_text = serialize_plan_jsonl(result.plan, &tgt_vocab);
  write_file(a.out + ".plan.jsonl", plan_text);
  files[a.out + ".plan.jsonl"] = sha256_hex(plan_text);

  nlohmann::json params = {{"method", a.method}, {"src_vocab", a.src_vocab}, {"src_emb", a.src_emb},
                           {"src_out_emb", a.src_out_emb}, {"tgt_vocab", a.tgt_vocab},
                           {"aux", a.aux}, {"freq", a.freq}, {"seed", a.seed}};
  nlohmann::json summary = {{"format_version", 1},
                            {"provenance", provenance("transfer", params)},
                            {"plan", plan_header_json(result.plan)},
                            {"files", files}};
  write_file(a.out + ".summary.json", summary.dump(2) + "\n");

  out << "method=" << a.method << " rows=" << result.matrix.rows() << " dim=" << result.matrix.dim();
  for (const auto& [k, v] : result.plan.provenance_counts()) out << " " << k << "=" << v;
  if (result.plan.rank_deficient) out << " rank_deficient=true";
  out << "\n";
  return kOk;
}

struct FreezePlanArgs {
  std::size_t n_layers = 0;
  std::string stage = "pipeline";
  std::optional<std::uint64_t> budget;
  std::optional<std::uint64_t> boundary_budget;
  std::optional<std::uint64_t> full_budget;
  std::string name_template;
  std::string out;
};

inline int cmd_freeze_plan(const FreezePlanArgs& a, std::ostream& out, std::ostream&) {
  std::vector<FreezePlan> plans;
  if (a.stage == "pipeline") {
    plans = pipeline_manifest(a.n_layers, a.boundary_budget, a.full_budget);
  } else {
    plans.push_back(make_freeze_plan(a.n_layers, parse_stage(a.stage), a.budget));
  }
  auto j = manifest_to_json(plans, a.name_template);
  nlohmann::json params = {{"n_layers", a.n_layers}, {"stage", a.stage}, {"name_template", a.name_template},
                           {"budget", a.budget ? nlohmann::json(*a.budget) : nlohmann::json()},
                           {"boundary_budget", a.boundary_budget ? nlohmann::json(*a.boundary_budget) : nlohmann::json()},
                           {"full_budget", a.full_budget ? nlohmann::json(*a.full_budget) : nlohmann::json()}};
  j["provenance"] = provenance("freeze-plan", params);
  write_file(a.out, j.dump(2) + "\n");
  std::uint64_t total = 0;
  for (const auto& p : plans) {
    out << to_string(p.stage) << " budget=" << p.token_budget << " trainable=" << p.trainable().size()
        << " frozen=" << p.frozen().size() << (p.non_default_budget ? " (non-default budget)" : "") << "\n";
    total += p.token_budget;
  }
  out << "total_budget=" << total << "\n";
  return kOk;
}

struct AuxArgs {
  std::vector<std::string> corpus;
  std::string vocab;
  std::size_t dim = 0;
  std::size_t window = 2;
  std::uint64_t seed = 0;
  std::string in;
  std::string out;
};

inline int cmd_aux_train(const AuxArgs& a, std::ostream& out, std::ostream&) {
  const auto vocab = load_vocabulary(a.vocab);
  const auto corpus = read_corpus(a.corpus, true);
  const auto aux = train_aux_embeddings(corpus, vocab, a.dim, a.window, a.seed);
  write_file(a.out, serialize_aux(aux));
  out << "entries=" << aux.size() << " dim=" << aux.dim() << "\n";
  return kOk;
}

inline int cmd_aux_import(const AuxArgs& a, std::ostream& out, std::ostream&) {
  AuxiliaryEmbeddings aux;
  try {
    aux = parse_aux(read_file(a.in));
  } catch (const Error& e) {
    throw Error(e.kind(), "'" + a.in + "': " + e.message());
  }
  if (!a.out.empty()) write_file(a.out, serialize_aux(aux));
  out << "entries=" << aux.size() << " dim=" << aux.dim() << "\n";
  return kOk;
}

struct SynthArgs {
  std::string vocab;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  double scale = 0.02;
  std::string out;
};

/// Random N(0, scale^2) matrix bound to a vocabulary; stands in for a real
/// model's embeddings in demos and tests.
inline int cmd_synth_embeddings(const SynthArgs& a, std::ostream& out, std::ostream&) {
  if (a.dim == 0) throw Error(ErrorKind::kInvalidArgument, "--dim must be positive");
  const auto vocab = load_vocabulary(a.vocab);
  EmbeddingMatrix m(vocab.size(), a.dim, vocab.hash());
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> normal(0.0, a.scale);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (auto& v : m.row(i)) v = static_cast<float>(normal(rng));
  }
  save_embeddings(a.out, m);
  out << "rows=" << m.rows() << " dim=" << m.dim() << "\n";
  return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"tokswap: tokenizer replacement toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  TrainTokenizerArgs train;
  auto* c_train = app.add_subcommand("train-tokenizer", "Train a BPE vocabulary");
  c_train->add_option("--corpus", train.corpus, "Corpus text files")->required();
  c_train->add_option("--vocab-size", train.vocab_size, "Target vocabulary size")->required();
  c_train->add_flag("--split-digits", train.split_digits, "One pre-token per digit");
  c_train->add_flag("--isolate-punct", train.isolate_punct, "Split punctuation runs from letters");
  c_train->add_flag("--byte-fallback", train.byte_fallback, "Add 256 byte tokens");
  c_train->add_flag("--lowercase", train.lowercase, "Lowercase before pre-tokenization");
  c_train->add_option("--whitespace-policy", train.whitespace)
      ->check(CLI::IsMember({"attach-leading-space", "standalone"}));
  c_train->add_option("--special", train.specials, "Reserved tokens (repeatable)");
  c_train->add_flag("--line-documents", train.line_documents, "Treat each line as a document");
  c_train->add_option("--out", train.out)->required();

  MetricsArgs metrics;
  auto* c_metrics = app.add_subcommand("metrics", "Token count, CpT and TpW for one text");
  c_metrics->add_option("--vocab", metrics.vocabs, "Vocabulary files, optionally name=path")->required();
  c_metrics->add_option("--text", metrics.text)->required();
  c_metrics->add_option("--convention", metrics.convention)
      ->check(CLI::IsMember({"normalized-spaces", "normalized-nospaces", "raw"}));
  c_metrics->add_option("--sort", metrics.sort)
      ->check(CLI::IsMember({"none", "name", "vocab_size", "tokens", "cpt", "tpw"}));
  c_metrics->add_option("--out", metrics.out, "Output prefix for .json and .csv");

  TransferArgs transfer;
  auto* c_transfer = app.add_subcommand("transfer", "Initialize target embeddings from source embeddings");
  c_transfer->add_option("--method", transfer.method)->required()->check(CLI::IsMember({"focus", "fvt", "linear", "random"}));
  c_transfer->add_option("--src-vocab", transfer.src_vocab)->required();
  c_transfer->add_option("--src-emb", transfer.src_emb)->required();
  c_transfer->add_option("--src-out-emb", transfer.src_out_emb, "Untied lm_head matrix");
  c_transfer->add_option("--tgt-vocab", transfer.tgt_vocab)->required();
  c_transfer->add_option("--aux", transfer.aux, "Auxiliary vectors (focus, linear)");
  c_transfer->add_option("--freq", transfer.freq, "Source token frequencies for FVT");
  c_transfer->add_option("--seed", transfer.seed);
  c_transfer->add_option("--out", transfer.out, "Output prefix")->required();

  FreezePlanArgs freeze;
  auto* c_freeze = app.add_subcommand("freeze-plan", "Emit a staged freeze manifest");
  c_freeze->add_option("--n-layers", freeze.n_layers)->required();
  c_freeze->add_option("--stage", freeze.stage)
      ->check(CLI::IsMember({"pipeline", "boundary-adaptation", "full-adaptation"}));
  c_freeze->add_option("--budget", freeze.budget, "Token budget for a single stage");
  c_freeze->add_option("--boundary-budget", freeze.boundary_budget);
  c_freeze->add_option("--full-budget", freeze.full_budget);
  c_freeze->add_option("--name-template", freeze.name_template, "e.g. model.layers.{}");
  c_freeze->add_option("--out", freeze.out)->required();

  AuxArgs aux;
  auto* c_aux = app.add_subcommand("aux", "Auxiliary embeddings");
  c_aux->require_subcommand(1);
  auto* c_aux_train = c_aux->add_subcommand("train", "PPMI co-occurrence vectors");
  c_aux_train->add_option("--corpus", aux.corpus, "One document per line")->required();
  c_aux_train->add_option("--vocab", aux.vocab)->required();
  c_aux_train->add_option("--dim", aux.dim)->required();
  c_aux_train->add_option("--window", aux.window);
  c_aux_train->add_option("--seed", aux.seed);
  c_aux_train->add_option("--out", aux.out)->required();
  auto* c_aux_import = c_aux->add_subcommand("import", "Validate a text vector file");
  c_aux_import->add_option("--in", aux.in)->required();
  c_aux_import->add_option("--out", aux.out);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-embeddings", "Random matrix bound to a vocabulary");
  c_synth->add_option("--vocab", synth.vocab)->required();
  c_synth->add_option("--dim", synth.dim)->required();
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--scale", synth.scale);
  c_synth->add_option("--out", synth.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_train) return cmd_train_tokenizer(train, out, err);
    if (*c_metrics) return cmd_metrics(metrics, out, err);
    if (*c_transfer) return cmd_transfer(transfer, out, err);
    if (*c_freeze) return cmd_freeze_plan(freeze, out, err);
    if (*c_aux_train) return cmd_aux_train(aux, out, err);
    if (*c_aux_import) return cmd_aux_import(aux, out, err);
    if (*c_synth) return cmd_synth_embeddings(synth, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
  return kUsage;
}

}  // namespace tokswap::cli
