// Trains two small tokenizers, compares them on one text, then moves a
// (synthetic) embedding matrix from one vocabulary to the other with FOCUS.

#include <iostream>
#include <random>

#include "tokswap/tokswap.hpp"

int main() {
  using namespace tokswap;

  const std::vector<std::string> corpus = {
      "the quick brown fox jumps over the lazy dog",
      "the lazy dog sleeps while the quick fox runs",
      "a quick brown dog and a lazy brown fox",
  };

  PreTokenizerConfig cfg;
  cfg.byte_fallback = true;
  const auto source = train_bpe(corpus, 290, cfg).vocab;
  const auto target = train_bpe(corpus, 60, PreTokenizerConfig{}).vocab;

  const std::string text = "the quick brown fox";
  const auto stats = text_stats(text);
  const auto table = compare({evaluate(BpeTokenizer("source", source), stats),
                              evaluate(BpeTokenizer("target", target), stats)},
                             SortKey::kTokens);
  std::cout << to_csv(table);

  // Stand-in for a real model's input embeddings.
  EmbeddingMatrix emb(source.size(), 8, source.hash());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    for (auto& x : emb.row(i)) x = static_cast<float>(normal(rng));
  }

  const auto aux = train_aux_embeddings(corpus, target, 4, 2, 7);
  const auto result = focus_initialize(emb, source, target, aux, {7, {}});
  std::cout << "target rows: " << result.matrix.rows() << "\n";
  for (const auto& [kind, n] : result.plan.provenance_counts()) std::cout << "  " << kind << ": " << n << "\n";

  for (const auto& stage : pipeline_manifest(24)) {
    std::cout << to_string(stage.stage) << ": " << stage.trainable().size() << " trainable groups, "
              << stage.token_budget << " tokens\n";
  }
}
