#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace specgeo::dynamics {

using Matrix = Eigen::MatrixXd;

enum class LossKind { xent_exact, xent_linearized, mse };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Linear feature extractor f = S theta followed by a linear readout W, with
/// one orthonormal input row per training example.
struct ToyConfig {
  std::size_t d_in = 8;
  std::size_t d = 2;       // feature (bottleneck) dimension
  std::size_t vocab = 4;   // number of classes
  std::vector<std::size_t> class_counts{4, 2, 1, 1};
  double lr = 1e-2;
  std::size_t steps = 2000;
  LossKind loss = LossKind::xent_exact;
  std::uint64_t seed = 0;
  double init_scale = 1e-2;
  // xent_linearized only: the softmax slope alpha is refreshed every this
  // many steps and held fixed in between. 1 follows the exact gradient.
  std::size_t relinearize_every = 1;

  std::size_t batch_size() const;
  bool bottleneck() const { return d < vocab; }
  void validate() const;
};

struct ToyModelState {
  Matrix theta;   // d_in x d
  Matrix W;       // d x vocab
  Matrix inputs;  // b x d_in, orthonormal rows
  std::vector<std::size_t> labels;
  Matrix alpha_anchor;  // expansion point of the linearized loss (b x vocab)
  std::size_t step = 0;
  double init_balance_residual = 0.0;
  bool degenerate_init = false;  // theta == 0 (hence W == 0)

  Matrix features() const { return inputs * theta; }
  Matrix logits() const { return features() * W; }
};

ToyModelState init_balanced(const ToyConfig& cfg);

/// Row-wise softmax with max subtraction.
Matrix softmax_alpha(const Matrix& logits);

/// alpha - onehot(labels): the gradient of summed cross-entropy w.r.t. logits.
Matrix a_matrix(const Matrix& alpha, const std::vector<std::size_t>& labels);

Matrix onehot(const std::vector<std::size_t>& labels, std::size_t vocab);

double xent_loss(const Matrix& logits, const std::vector<std::size_t>& labels);
/// Tangent-plane surrogate -y_c + alpha^T y + H(alpha), summed over rows, with
/// alpha the slope at the expansion point.
double linearized_xent_loss(const Matrix& logits, const std::vector<std::size_t>& labels,
                            const Matrix& alpha);
double mse_loss(const Matrix& logits, const std::vector<std::size_t>& labels);

/// The matrix A driving both updates for the configured loss.
Matrix residual_matrix(const ToyModelState& state, const ToyConfig& cfg);
double loss_value(const ToyModelState& state, const ToyConfig& cfg);

/// theta <- theta - lr S^T (A W^T);  W <- W - lr f^T A. Throws
/// Errc::divergence if the update is not finite.
ToyModelState gd_step(const ToyModelState& state, const ToyConfig& cfg);

/// Thin SVD with descending singular values; each left singular vector has its
/// largest-magnitude entry positive.
struct Svd {
  Matrix U;
  Eigen::VectorXd s;
  Matrix V;
};
Svd canonical_svd(const Matrix& m);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double rankme = 0.0;  // centered feature covariance; 0 when features vanish
  std::vector<double> sigma_f;
  std::vector<double> sigma_w;
  double align_err = 0.0;
  bool align_degenerate = false;  // subspace comparison was used
  double conserve_err = 0.0;      // ||f^T f - W W^T||_F
  double gram_norm = 0.0;         // ||f^T f||_F
  double a_norm = 0.0;            // Frobenius
  double a_spectral = 0.0;
  // Lemma predictions u_k^T (dX) v_k for one step, with dX the update.
  std::vector<double> lemma_f;
  std::vector<double> lemma_w;
  // g_i = u_{1i}^T A v_{2i}, with (u2, v2) paired so that v_{1i}.u_{2i} >= 0.
  std::vector<double> g;
  std::vector<double> class_margin;  // mean (z_c - max_{j != c} z_j) per class
};

struct TrajectoryRecord {
  ToyConfig config;
  double init_balance_residual = 0.0;
  bool degenerate_init = false;
  std::vector<StepRecord> steps;  // steps 0..cfg.steps inclusive
  ToyModelState final_state;
};

TrajectoryRecord run_trajectory(const ToyConfig& cfg);

/// Summary quantities for one state; also used to build trajectory records.
StepRecord measure(const ToyModelState& state, const ToyConfig& cfg);

// --- phase analysis -------------------------------------------------------

/// Centered moving average; the window shrinks at the edges.
std::vector<double> moving_average(const std::vector<double>& series, std::size_t window);

inline constexpr double kPhaseWindowFraction = 0.05;
inline constexpr double kPhaseTolerance = 1e-2;

struct PhaseReport {
  std::size_t window = 1;
  double tolerance = kPhaseTolerance;
  std::size_t warmup_end = 0;  // trough of smoothed RankMe in the first half
  std::size_t peak = 0;        // max of smoothed RankMe after warmup_end
  double warmup_value = 0.0;
  double peak_value = 0.0;
  double final_value = 0.0;
  double drop_after_peak = 0.0;
  double max_drawdown = 0.0;     // after warmup_end
  std::size_t prominent_maxima = 0;  // after warmup_end, hysteresis = tolerance
  bool interior_max = false;     // entropy-seeking followed by compression
  std::optional<std::size_t> compression_start;
  // Growth of sigma_f over the late window [late_start, end].
  std::size_t late_start = 0;
  std::vector<double> late_growth_abs;  // per step
  std::vector<double> late_growth_log;  // per step
};

PhaseReport analyze_phases(const TrajectoryRecord& traj, double tolerance = kPhaseTolerance);

/// Maxima that rise and then fall by at least `tolerance` (hysteresis count).
std::size_t count_prominent_maxima(const std::vector<double>& series, std::size_t from,
                                   double tolerance);

// --- theorem checks -------------------------------------------------------

struct Theorem1Report {
  double initial_residual = 0.0;
  double initial_relative_residual = 0.0;
  double max_residual = 0.0;
  double final_residual = 0.0;
  double max_relative_residual = 0.0;
  double initial_alignment = 0.0;
  double max_alignment = 0.0;
  std::size_t max_alignment_step = 0;
  double final_alignment = 0.0;
  std::size_t degenerate_steps = 0;
  double drift_constant = 0.0;  // final_residual / (lr^2 * steps)
};

Theorem1Report check_theorem1(const TrajectoryRecord& traj);

/// Halving-step test for the Euler conservation drift: runs cfg at lr and at
/// lr/2, both for cfg.steps steps and, for matched physical time, lr/2 for
/// 2*cfg.steps steps.
struct DriftOrderReport {
  double drift_full = 0.0;          // lr, steps
  double drift_half = 0.0;          // lr/2, steps
  double drift_half_matched = 0.0;  // lr/2, 2*steps
  double same_steps_ratio = 0.0;    // drift_full / (4 drift_half)
  double per_step_rate_ratio = 0.0; // (drift_full/steps) / (drift_half_matched/(2 steps))
};

DriftOrderReport conservation_order_test(const ToyConfig& cfg);

inline constexpr double kSigmaSkipFraction = 1e-8;

struct Theorem2Report {
  double sigma_threshold = kSigmaSkipFraction;
  std::size_t compared = 0;
  std::size_t skipped = 0;
  // Errors below are scaled by lr * ||A||_2 * sigma_i, the largest rate any
  // singular value can have at that step.
  double max_fd_vs_lemma_f = 0.0;
  double max_fd_vs_lemma_w = 0.0;
  double max_lemma_vs_formula_f = 0.0;
  double max_lemma_vs_formula_w = 0.0;
  double max_rate_collapse = 0.0;  // | |dsigma|/sigma - lr |g| | / (lr ||A||_2)
  // Pointwise relative errors where |lemma| >= 0.1 of the scale above.
  double max_pointwise_fd_vs_lemma = 0.0;
  double max_pointwise_lemma_vs_formula = 0.0;
  std::vector<double> g_init;
  std::size_t dominant_class_count = 0;
};

Theorem2Report check_theorem2(const TrajectoryRecord& traj,
                              double sigma_threshold = kSigmaSkipFraction);

struct PrimacyReport {
  double margin_threshold = 0.0;
  // First step from which each class margin stays above the threshold.
  std::vector<std::optional<std::size_t>> crossing_step;
  std::vector<std::size_t> class_counts;
  bool frequent_first = false;  // strictly more frequent => strictly earlier
  std::size_t window_start = 0;
  // Pearson(dsigma_i, sigma_i) over the window, both centered across i within
  // each step so the shared time trend drops out. The window opens at the
  // compression phase, or at the late window when there is none.
  double selection_correlation = 0.0;
};

PrimacyReport primacy_selection_probe(const TrajectoryRecord& traj, double margin_threshold = 0.0);

}  // namespace specgeo::dynamics
