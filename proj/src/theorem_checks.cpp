#include <algorithm>
#include <cmath>
#include <numeric>

#include "specgeo/dynamics.hpp"
#include "specgeo/error.hpp"

namespace specgeo::dynamics {
namespace {

std::size_t argmin(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo; i <= hi; ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

std::size_t argmax(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  for (std::size_t i = lo; i <= hi; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double drift_after(ToyConfig cfg, double lr, std::size_t steps) {
  cfg.lr = lr;
  cfg.steps = steps;
  ToyModelState state = init_balanced(cfg);
  for (std::size_t t = 0; t < steps; ++t) state = gd_step(state, cfg);
  const Matrix f = state.features();
  return (f.transpose() * f - state.W * state.W.transpose()).norm();
}

}  // namespace

std::vector<double> moving_average(const std::vector<double>& series, std::size_t window) {
  if (window == 0) fail(Errc::invalid_argument, "moving average window must be positive");
  const std::size_t n = series.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series[i];
  const std::size_t back = (window - 1) / 2;
  const std::size_t ahead = window - 1 - back;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= back ? i - back : 0;
    const std::size_t hi = std::min(n - 1, i + ahead);
    out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi + 1 - lo);
  }
  return out;
}

std::size_t count_prominent_maxima(const std::vector<double>& series, std::size_t from,
                                   double tolerance) {
  if (from >= series.size()) return 0;
  std::size_t count = 0;
  double base = series[from];
  double peak = series[from];
  bool armed = false;  // risen by at least tolerance since the last trough
  for (std::size_t t = from + 1; t < series.size(); ++t) {
    const double v = series[t];
    if (!armed) {
      if (v < base) {
        base = v;
        peak = v;
      } else if (v > peak) {
        peak = v;
        armed = peak - base >= tolerance;
      }
    } else if (v > peak) {
      peak = v;
    } else if (peak - v >= tolerance) {
      ++count;
      armed = false;
      base = v;
      peak = v;
    }
  }
  return count;
}

PhaseReport analyze_phases(const TrajectoryRecord& traj, double tolerance) {
  const std::size_t n = traj.steps.size();
  if (n < 3) fail(Errc::invalid_argument, "phase analysis needs at least 3 recorded steps");
  PhaseReport rep;
  rep.tolerance = tolerance;
  rep.window = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(kPhaseWindowFraction * static_cast<double>(n - 1))));

  std::vector<double> rank(n);
  for (std::size_t t = 0; t < n; ++t) rank[t] = traj.steps[t].rankme;
  const auto smooth = moving_average(rank, rep.window);

  const std::size_t last = n - 1;
  rep.warmup_end = argmin(smooth, 0, last / 2);
  rep.peak = argmax(smooth, rep.warmup_end, last);
  rep.warmup_value = smooth[rep.warmup_end];
  rep.peak_value = smooth[rep.peak];
  rep.final_value = smooth[last];
  rep.drop_after_peak = rep.peak_value - rep.final_value;

  double running = smooth[rep.warmup_end];
  for (std::size_t t = rep.warmup_end; t < n; ++t) {
    running = std::max(running, smooth[t]);
    rep.max_drawdown = std::max(rep.max_drawdown, running - smooth[t]);
  }
  rep.prominent_maxima = count_prominent_maxima(smooth, rep.warmup_end, tolerance);
  rep.interior_max = rep.peak + rep.window < last && rep.drop_after_peak > tolerance;
  if (rep.interior_max) rep.compression_start = rep.peak;

  rep.late_start = rep.interior_max ? rep.peak : last - last / 4;
  const auto& first = traj.steps[rep.late_start].sigma_f;
  const auto& final = traj.steps[last].sigma_f;
  const double span = static_cast<double>(last - rep.late_start);
  for (std::size_t i = 0; i < final.size(); ++i) {
    const double a = first[i];
    const double b = final[i];
    rep.late_growth_abs.push_back(span > 0 ? (b - a) / span : 0.0);
    rep.late_growth_log.push_back(span > 0 && a > 0 && b > 0 ? std::log(b / a) / span : 0.0);
  }
  return rep;
}

Theorem1Report check_theorem1(const TrajectoryRecord& traj) {
  if (traj.steps.empty()) fail(Errc::invalid_argument, "empty trajectory");
  Theorem1Report rep;
  const auto& s0 = traj.steps.front();
  rep.initial_residual = s0.conserve_err;
  rep.initial_relative_residual = s0.gram_norm > 0.0 ? s0.conserve_err / s0.gram_norm : 0.0;
  rep.initial_alignment = s0.align_err;
  for (const auto& s : traj.steps) {
    rep.max_residual = std::max(rep.max_residual, s.conserve_err);
    if (s.gram_norm > 0.0)
      rep.max_relative_residual = std::max(rep.max_relative_residual, s.conserve_err / s.gram_norm);
    if (s.align_err > rep.max_alignment) {
      rep.max_alignment = s.align_err;
      rep.max_alignment_step = s.step;
    }
    if (s.align_degenerate) ++rep.degenerate_steps;
  }
  rep.final_residual = traj.steps.back().conserve_err;
  rep.final_alignment = traj.steps.back().align_err;
  const double lr = traj.config.lr;
  const double steps = static_cast<double>(traj.steps.size() - 1);
  if (lr > 0.0 && steps > 0.0) rep.drift_constant = rep.final_residual / (lr * lr * steps);
  return rep;
}

DriftOrderReport conservation_order_test(const ToyConfig& cfg) {
  cfg.validate();
  if (cfg.steps == 0 || !(cfg.lr > 0.0))
    fail(Errc::invalid_argument, "drift order test needs lr > 0 and steps > 0");
  DriftOrderReport rep;
  rep.drift_full = drift_after(cfg, cfg.lr, cfg.steps);
  rep.drift_half = drift_after(cfg, cfg.lr / 2, cfg.steps);
  rep.drift_half_matched = drift_after(cfg, cfg.lr / 2, 2 * cfg.steps);
  if (rep.drift_half > 0.0) rep.same_steps_ratio = rep.drift_full / (4.0 * rep.drift_half);
  if (rep.drift_half_matched > 0.0) rep.per_step_rate_ratio = 2.0 * rep.drift_full / rep.drift_half_matched;
  return rep;
}

Theorem2Report check_theorem2(const TrajectoryRecord& traj, double sigma_threshold) {
  Theorem2Report rep;
  rep.sigma_threshold = sigma_threshold;
  const double lr = traj.config.lr;
  for (auto c : traj.config.class_counts) rep.dominant_class_count = std::max(rep.dominant_class_count, c);
  if (!traj.steps.empty()) rep.g_init = traj.steps.front().g;
  if (traj.steps.size() < 3) return rep;

  auto worse = [](double& slot, double v) { slot = std::max(slot, v); };
  for (std::size_t t = 1; t + 1 < traj.steps.size(); ++t) {
    const auto& prev = traj.steps[t - 1];
    const auto& cur = traj.steps[t];
    const auto& next = traj.steps[t + 1];
    const std::size_t k = std::min({cur.sigma_f.size(), cur.sigma_w.size(), cur.g.size()});
    const double top = cur.sigma_f.empty() ? 0.0 : cur.sigma_f.front();
    for (std::size_t i = 0; i < k; ++i) {
      const double sf = cur.sigma_f[i];
      const double sw = cur.sigma_w[i];
      const double scale_f = lr * cur.a_spectral * sf;
      const double scale_w = lr * cur.a_spectral * sw;
      if (sf <= sigma_threshold * top || scale_f <= 0.0 || scale_w <= 0.0) {
        ++rep.skipped;
        continue;
      }
      ++rep.compared;
      const double fd_f = 0.5 * (next.sigma_f[i] - prev.sigma_f[i]);
      const double fd_w = 0.5 * (next.sigma_w[i] - prev.sigma_w[i]);
      const double formula_f = -lr * cur.g[i] * sw;
      const double formula_w = -lr * cur.g[i] * sf;

      worse(rep.max_fd_vs_lemma_f, std::abs(fd_f - cur.lemma_f[i]) / scale_f);
      worse(rep.max_fd_vs_lemma_w, std::abs(fd_w - cur.lemma_w[i]) / scale_w);
      worse(rep.max_lemma_vs_formula_f, std::abs(cur.lemma_f[i] - formula_f) / scale_f);
      worse(rep.max_lemma_vs_formula_w, std::abs(cur.lemma_w[i] - formula_w) / scale_w);
      worse(rep.max_rate_collapse,
            std::abs(std::abs(fd_f) / sf - lr * std::abs(cur.g[i])) / (lr * cur.a_spectral));

      if (std::abs(cur.lemma_f[i]) >= 0.1 * scale_f)
        worse(rep.max_pointwise_fd_vs_lemma, std::abs(fd_f - cur.lemma_f[i]) / std::abs(cur.lemma_f[i]));
      if (std::abs(formula_f) >= 0.1 * scale_f)
        worse(rep.max_pointwise_lemma_vs_formula,
              std::abs(cur.lemma_f[i] - formula_f) / std::abs(formula_f));
    }
  }
  return rep;
}

PrimacyReport primacy_selection_probe(const TrajectoryRecord& traj, double margin_threshold) {
  if (traj.steps.empty()) fail(Errc::invalid_argument, "empty trajectory");
  PrimacyReport rep;
  rep.margin_threshold = margin_threshold;
  rep.class_counts = traj.config.class_counts;
  const std::size_t classes = rep.class_counts.size();
  rep.crossing_step.assign(classes, std::nullopt);

  for (std::size_t c = 0; c < classes; ++c) {
    if (rep.class_counts[c] == 0) continue;
    std::optional<std::size_t> from;
    for (std::size_t t = traj.steps.size(); t-- > 0;) {
      if (traj.steps[t].class_margin[c] > margin_threshold) from = traj.steps[t].step;
      else break;
    }
    rep.crossing_step[c] = from;
  }

  rep.frequent_first = true;
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = 0; b < classes; ++b) {
      if (rep.class_counts[a] <= rep.class_counts[b] || rep.class_counts[b] == 0) continue;
      const auto& ca = rep.crossing_step[a];
      const auto& cb = rep.crossing_step[b];
      if (!ca || (cb && *ca >= *cb)) rep.frequent_first = false;
    }

  if (traj.steps.size() >= 3) {
    const PhaseReport phases = analyze_phases(traj);
    rep.window_start = phases.compression_start.value_or(phases.late_start);
  }
  std::vector<double> delta;
  std::vector<double> level;
  for (std::size_t t = rep.window_start; t + 1 < traj.steps.size(); ++t) {
    const auto& cur = traj.steps[t].sigma_f;
    const auto& next = traj.steps[t + 1].sigma_f;
    const double n = static_cast<double>(cur.size());
    double mean_d = 0.0, mean_s = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      mean_d += (next[i] - cur[i]) / n;
      mean_s += cur[i] / n;
    }
    for (std::size_t i = 0; i < cur.size(); ++i) {
      delta.push_back(next[i] - cur[i] - mean_d);
      level.push_back(cur[i] - mean_s);
    }
  }
  rep.selection_correlation = pearson(delta, level);
  return rep;
}

}  // namespace specgeo::dynamics
