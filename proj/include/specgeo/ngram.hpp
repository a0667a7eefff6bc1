#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace specgeo::ngram {

using Token = std::uint32_t;

/// Token stream plus the exclusive end offsets of its documents. An empty
/// boundary list means one document; trailing tokens after the last boundary
/// form a final document.
struct TokenCorpus {
  std::vector<Token> tokens;
  std::vector<std::size_t> doc_boundaries;
  std::size_t vocab_size = 0;

  void validate() const;
};

/// One (next token, occurrence count) pair.
struct Continuation {
  Token token;
  std::size_t count;
};

/// Suffix array over a corpus in which every suffix is cut at the end of its
/// own document, so no match can straddle a document boundary. Immutable after
/// construction and safe for concurrent readers.
class SuffixIndex {
 public:
  explicit SuffixIndex(TokenCorpus corpus);

  const TokenCorpus& corpus() const noexcept { return corpus_; }
  const std::vector<std::size_t>& sa() const noexcept { return sa_; }
  std::size_t built_at() const noexcept { return built_at_; }
  std::size_t size() const noexcept { return corpus_.tokens.size(); }
  /// Exclusive end of the document that contains position `pos`.
  std::size_t doc_end(std::size_t pos) const noexcept { return doc_end_[pos]; }

  /// Half-open range of suffix-array rows whose suffix starts with `pattern`.
  std::pair<std::size_t, std::size_t> find(std::span<const Token> pattern) const;

  std::size_t count(std::span<const Token> pattern) const;

  /// Tokens that follow occurrences of `pattern` inside the same document,
  /// ascending by token id.
  std::vector<Continuation> continuations(std::span<const Token> pattern) const;

  const std::vector<std::size_t>& unigram_counts() const noexcept { return unigram_; }

 private:
  int compare_at(std::size_t pos, std::span<const Token> pattern) const;

  TokenCorpus corpus_;
  std::vector<std::size_t> doc_end_;
  std::vector<std::size_t> sa_;
  std::vector<std::size_t> unigram_;
  std::size_t built_at_ = 0;
};

SuffixIndex build_index(TokenCorpus corpus);

/// Exact occurrence count; an unseen pattern counts 0. Empty patterns are
/// rejected.
std::size_t pattern_count(const SuffixIndex& index, std::span<const Token> pattern);

struct NgramPrediction {
  std::vector<double> token_probs;  // dense, vocab_size entries
  std::size_t suffix_len_used = 0;
  std::size_t context_count = 0;
};

/// Infinity-gram next-token distribution: the longest context suffix with at
/// least one in-document continuation decides; with none, corpus unigram
/// frequencies (suffix_len_used = 0, context_count = corpus length).
NgramPrediction infty_gram_next(const SuffixIndex& index, std::span<const Token> context);

inline constexpr double kLogFloor = 1e-12;

struct JointLikelihood {
  double loglik = 0.0;
  std::vector<double> token_probs;  // raw, zeros preserved
};

JointLikelihood joint_loglik(const SuffixIndex& index, std::span<const Token> prefix,
                             std::span<const Token> target);

/// Aligned per-token probabilities from the reference (infinity-gram) and the
/// model under study.
struct ProbTrace {
  std::vector<double> ref;
  std::vector<double> model;

  void validate() const;
};

/// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double spearman_rho(std::span<const double> x, std::span<const double> y);
double spearman_rho(const ProbTrace& trace);

/// Token range [offset, offset + length) of one target sequence.
struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;
};

enum class MemorizationUnit { per_example, per_token };

/// Spearman correlation between reference and model likelihoods. Per example,
/// each side is the joint log-likelihood of its span (probabilities floored at
/// kLogFloor inside the log); per token, the raw probabilities.
double distributional_memorization(const ProbTrace& trace, std::span<const Span> spans,
                                   MemorizationUnit unit = MemorizationUnit::per_example);

}  // namespace specgeo::ngram
