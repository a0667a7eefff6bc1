#include <algorithm>
#include <cmath>
#include <numeric>

#include "specgeo/error.hpp"
#include "specgeo/ngram.hpp"

namespace specgeo::ngram {

NgramPrediction infty_gram_next(const SuffixIndex& index, std::span<const Token> context) {
  const std::size_t vocab = index.corpus().vocab_size;

  // Having a continuation is monotone in suffix length: every occurrence of a
  // longer suffix is also an occurrence of the shorter one. Extend until the
  // first miss.
  std::vector<Continuation> best;
  std::size_t best_len = 0;
  for (std::size_t len = 1; len <= context.size(); ++len) {
    auto next = index.continuations(context.last(len));
    if (next.empty()) break;
    best = std::move(next);
    best_len = len;
  }

  NgramPrediction out;
  out.token_probs.assign(vocab, 0.0);
  out.suffix_len_used = best_len;
  if (best_len == 0) {
    const auto& uni = index.unigram_counts();
    const double n = static_cast<double>(index.size());
    for (std::size_t t = 0; t < vocab; ++t) out.token_probs[t] = static_cast<double>(uni[t]) / n;
    out.context_count = index.size();
    return out;
  }

  std::size_t total = 0;
  for (const auto& c : best) total += c.count;
  for (const auto& c : best)
    out.token_probs[c.token] = static_cast<double>(c.count) / static_cast<double>(total);
  out.context_count = index.count(context.last(best_len));
  return out;
}

JointLikelihood joint_loglik(const SuffixIndex& index, std::span<const Token> prefix,
                             std::span<const Token> target) {
  if (target.empty()) fail(Errc::invalid_argument, "target must be nonempty");
  std::vector<Token> context(prefix.begin(), prefix.end());
  context.reserve(prefix.size() + target.size());

  JointLikelihood out;
  out.token_probs.reserve(target.size());
  for (Token t : target) {
    const NgramPrediction pred = infty_gram_next(index, context);
    const double p = t < pred.token_probs.size() ? pred.token_probs[t] : 0.0;
    out.token_probs.push_back(p);
    out.loglik += std::log(std::max(p, kLogFloor));
    context.push_back(t);
  }
  return out;
}

void ProbTrace::validate() const {
  if (ref.size() != model.size()) fail(Errc::size_mismatch, "trace sides differ in length");
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!std::all_of(ref.begin(), ref.end(), in_unit) || !std::all_of(model.begin(), model.end(), in_unit))
    fail(Errc::invalid_argument, "trace probabilities must lie in [0, 1]");
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(Errc::size_mismatch, "spearman inputs differ in length");
  if (x.size() < 2) fail(Errc::invalid_argument, "spearman needs at least 2 pairs");
  for (double v : x) if (std::isnan(v)) fail(Errc::non_finite, "NaN in spearman input");
  for (double v : y) if (std::isnan(v)) fail(Errc::non_finite, "NaN in spearman input");

  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // average ranks always sum to n(n+1)/2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean;
    const double b = ry[i] - mean;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) fail(Errc::degenerate, "spearman undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(const ProbTrace& trace) {
  trace.validate();
  return spearman_rho(trace.ref, trace.model);
}

double distributional_memorization(const ProbTrace& trace, std::span<const Span> spans,
                                   MemorizationUnit unit) {
  trace.validate();
  if (unit == MemorizationUnit::per_token) return spearman_rho(trace.ref, trace.model);

  if (spans.size() < 2) fail(Errc::invalid_argument, "per-example memorization needs at least 2 examples");
  std::vector<double> ref_ll;
  std::vector<double> model_ll;
  ref_ll.reserve(spans.size());
  model_ll.reserve(spans.size());
  for (const Span& s : spans) {
    if (s.length == 0 || s.offset + s.length > trace.ref.size())
      fail(Errc::size_mismatch, "example span does not fit the trace");
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = s.offset; i < s.offset + s.length; ++i) {
      a += std::log(std::max(trace.ref[i], kLogFloor));
      b += std::log(std::max(trace.model[i], kLogFloor));
    }
    ref_ll.push_back(a);
    model_ll.push_back(b);
  }
  return spearman_rho(ref_ll, model_ll);
}

}  // namespace specgeo::ngram
