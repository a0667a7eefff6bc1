#include <algorithm>
#include <numeric>
#include <tuple>

#include "specgeo/error.hpp"
#include "specgeo/ngram.hpp"

namespace specgeo::ngram {

void TokenCorpus::validate() const {
  if (tokens.empty()) fail(Errc::invalid_argument, "corpus is empty");
  for (Token t : tokens)
    if (t >= vocab_size) fail(Errc::invalid_argument, "token id outside vocabulary");
  for (std::size_t i = 0; i < doc_boundaries.size(); ++i) {
    if (i > 0 && doc_boundaries[i] <= doc_boundaries[i - 1])
      fail(Errc::invalid_argument, "document boundaries must be strictly increasing");
    if (doc_boundaries[i] > tokens.size())
      fail(Errc::invalid_argument, "document boundary beyond corpus end");
  }
}

SuffixIndex::SuffixIndex(TokenCorpus corpus) : corpus_(std::move(corpus)) {
  corpus_.validate();
  const std::size_t n = corpus_.tokens.size();
  built_at_ = n;

  doc_end_.resize(n);
  {
    std::size_t start = 0;
    auto fill_doc = [&](std::size_t end) {
      for (std::size_t p = start; p < end; ++p) doc_end_[p] = end;
      start = end;
    };
    for (std::size_t b : corpus_.doc_boundaries) fill_doc(b);
    if (start < n) fill_doc(n);
  }

  unigram_.assign(corpus_.vocab_size, 0);
  for (Token t : corpus_.tokens) ++unigram_[t];

  // Prefix doubling. A suffix ends at its document end, which ranks below any
  // token; equal truncated suffixes keep equal ranks and are finally ordered
  // by position.
  std::size_t longest_doc = 0;
  for (std::size_t p = 0; p < n; ++p) longest_doc = std::max(longest_doc, doc_end_[p] - p);

  std::vector<long long> rank(n);
  for (std::size_t p = 0; p < n; ++p) rank[p] = corpus_.tokens[p];
  sa_.resize(n);
  std::iota(sa_.begin(), sa_.end(), std::size_t{0});

  std::vector<long long> next_rank(n);
  for (std::size_t k = 1;; k <<= 1) {
    auto key = [&](std::size_t p) {
      const long long second = p + k < doc_end_[p] ? rank[p + k] : -1;
      return std::make_tuple(rank[p], second, p);
    };
    std::sort(sa_.begin(), sa_.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    next_rank[sa_[0]] = 0;
    bool all_distinct = true;
    for (std::size_t i = 1; i < n; ++i) {
      const auto [r0, s0, p0] = key(sa_[i - 1]);
      const auto [r1, s1, p1] = key(sa_[i]);
      const bool same = r0 == r1 && s0 == s1;
      all_distinct = all_distinct && !same;
      next_rank[sa_[i]] = next_rank[sa_[i - 1]] + (same ? 0 : 1);
    }
    rank.swap(next_rank);
    if (all_distinct || 2 * k >= longest_doc) break;
  }
}

int SuffixIndex::compare_at(std::size_t pos, std::span<const Token> pattern) const {
  const std::size_t end = doc_end_[pos];
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pos + i >= end) return -1;  // suffix exhausted first: suffix < pattern
    const Token t = corpus_.tokens[pos + i];
    if (t != pattern[i]) return t < pattern[i] ? -1 : 1;
  }
  return 0;
}

std::pair<std::size_t, std::size_t> SuffixIndex::find(std::span<const Token> pattern) const {
  const auto first = std::partition_point(sa_.begin(), sa_.end(), [&](std::size_t pos) {
    return compare_at(pos, pattern) < 0;
  });
  const auto last = std::partition_point(first, sa_.end(), [&](std::size_t pos) {
    return compare_at(pos, pattern) == 0;
  });
  return {static_cast<std::size_t>(first - sa_.begin()), static_cast<std::size_t>(last - sa_.begin())};
}

std::size_t SuffixIndex::count(std::span<const Token> pattern) const {
  if (pattern.empty()) fail(Errc::invalid_argument, "pattern must be nonempty");
  const auto [lo, hi] = find(pattern);
  return hi - lo;
}

std::vector<Continuation> SuffixIndex::continuations(std::span<const Token> pattern) const {
  std::vector<Continuation> out;
  if (pattern.empty()) {
    for (Token t = 0; t < unigram_.size(); ++t)
      if (unigram_[t] > 0) out.push_back({t, unigram_[t]});
    return out;
  }
  const auto [lo, hi] = find(pattern);
  const std::size_t m = pattern.size();
  // Within [lo, hi) the rows are sorted by the token at offset m, with the
  // document-end rows first.
  auto next_token = [&](std::size_t row) -> long long {
    const std::size_t p = sa_[row] + m;
    return p < doc_end_[sa_[row]] ? static_cast<long long>(corpus_.tokens[p]) : -1;
  };
  std::size_t row = lo;
  while (row < hi) {
    const long long t = next_token(row);
    std::size_t a = row + 1;
    std::size_t b = hi;
    while (a < b) {
      const std::size_t mid = a + (b - a) / 2;
      if (next_token(mid) == t) a = mid + 1;
      else b = mid;
    }
    if (t >= 0) out.push_back({static_cast<Token>(t), a - row});
    row = a;
  }
  return out;
}

SuffixIndex build_index(TokenCorpus corpus) { return SuffixIndex(std::move(corpus)); }

std::size_t pattern_count(const SuffixIndex& index, std::span<const Token> pattern) {
  return index.count(pattern);
}

}  // namespace specgeo::ngram
