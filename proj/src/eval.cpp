#include "specgeo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "specgeo/error.hpp"

namespace specgeo::eval {
namespace {

void validate(PassAtKProblem p, std::int64_t k) {
  if (p.samples < 1 || p.correct < 0 || p.correct > p.samples)
    fail(Errc::invalid_argument, "pass@k needs 0 <= c <= N and N >= 1");
  if (k < 1 || k > p.samples) fail(Errc::invalid_argument, "pass@k needs 1 <= k <= N");
}

}  // namespace

double pass_at_k(PassAtKProblem p, std::int64_t k) {
  validate(p, k);
  const std::int64_t wrong = p.samples - p.correct;
  if (wrong < k) return 1.0;
  double miss = 1.0;
  for (std::int64_t j = 0; j < k; ++j)
    miss *= static_cast<double>(wrong - j) / static_cast<double>(p.samples - j);
  return 1.0 - miss;
}

double pass_at_k(std::span<const PassAtKProblem> problems, std::int64_t k) {
  if (problems.empty()) fail(Errc::invalid_argument, "pass@k needs at least one problem");
  double sum = 0.0;
  for (const auto& p : problems) sum += pass_at_k(p, k);
  return sum / static_cast<double>(problems.size());
}

Fraction pass_at_k_exact(PassAtKProblem p, std::int64_t k) {
  validate(p, k);
  if (p.samples > 60) fail(Errc::invalid_argument, "exact pass@k limited to N <= 60");
  const std::int64_t wrong = p.samples - p.correct;
  if (wrong < k) return {1, 1};
  std::int64_t num = 1;
  std::int64_t den = 1;
  for (std::int64_t j = 0; j < k; ++j) {
    std::int64_t a = wrong - j;
    std::int64_t b = p.samples - j;
    const std::int64_t g1 = std::gcd(a, den);
    const std::int64_t g2 = std::gcd(b, num);
    a /= g1;
    den /= g1;
    b /= g2;
    num /= g2;
    num *= a;
    den *= b;
  }
  const std::int64_t g = std::gcd(num, den);
  num /= g;
  den /= g;
  return {den - num, den};
}

double implicit_reward(double beta, double logp_policy, double logp_reference) {
  if (!(beta > 0.0)) fail(Errc::invalid_argument, "beta must be positive");
  return beta * (logp_policy - logp_reference);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double dpo_loss_single(const PreferenceTriple& t) {
  return softplus(-(t.reward_chosen - t.reward_rejected));
}

double nce_loss(const PreferenceTriple& t) {
  const double hi = std::max(t.reward_chosen, t.reward_rejected);
  const double lse = hi + std::log1p(std::exp(-std::abs(t.reward_chosen - t.reward_rejected)));
  return lse - t.reward_chosen;
}

double dpo_loss(std::span<const PreferenceTriple> triples) {
  if (triples.empty()) fail(Errc::invalid_argument, "dpo loss needs at least one triple");
  double sum = 0.0;
  for (const auto& t : triples) {
    if (!std::isfinite(t.reward_chosen) || !std::isfinite(t.reward_rejected))
      fail(Errc::non_finite, "non-finite reward");
    sum += dpo_loss_single(t);
  }
  return sum / static_cast<double>(triples.size());
}

double dpo_nce_identity(std::span<const PreferenceTriple> triples) {
  double worst = 0.0;
  for (const auto& t : triples) {
    if (!std::isfinite(t.reward_chosen) || !std::isfinite(t.reward_rejected))
      fail(Errc::non_finite, "non-finite reward");
    worst = std::max(worst, std::abs(dpo_loss_single(t) - nce_loss(t)));
  }
  return worst;
}

}  // namespace specgeo::eval
