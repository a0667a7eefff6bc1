#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace specgeo::eval {

struct PassAtKProblem {
  std::int64_t samples = 0;  // N
  std::int64_t correct = 0;  // c
};

/// Mean over problems of 1 - C(N-c, k) / C(N, k), evaluated as the product
/// prod_{j<k} (N-c-j)/(N-j) so that N in the hundreds never overflows.
double pass_at_k(std::span<const PassAtKProblem> problems, std::int64_t k);
double pass_at_k(PassAtKProblem problem, std::int64_t k);

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
  friend bool operator==(const Fraction&, const Fraction&) = default;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Same estimator for a single problem in exact rational arithmetic. Limited
/// to N <= 60 so intermediate products fit in 64 bits after reduction.
Fraction pass_at_k_exact(PassAtKProblem problem, std::int64_t k);

/// beta * (log pi(y|x) - log pi_ref(y|x)).
double implicit_reward(double beta, double logp_policy, double logp_reference);

struct PreferenceTriple {
  double reward_chosen = 0.0;    // r_w
  double reward_rejected = 0.0;  // r_l
};

/// softplus(x) = ln(1 + e^x), stable for any finite x.
double softplus(double x);

/// Mean of -ln sigmoid(r_w - r_l).
double dpo_loss(std::span<const PreferenceTriple> triples);

/// -ln( e^{r_w} / (e^{r_w} + e^{r_l}) ), the two-candidate softmax form.
double nce_loss(const PreferenceTriple& t);
double dpo_loss_single(const PreferenceTriple& t);

/// Largest |dpo - nce| over the triples.
double dpo_nce_identity(std::span<const PreferenceTriple> triples);

}  // namespace specgeo::eval
