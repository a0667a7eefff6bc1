#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "specgeo/dynamics.hpp"
#include "specgeo/error.hpp"
#include "specgeo/spectral.hpp"

namespace specgeo::dynamics {
namespace {

constexpr double kDegenerateGap = 1e-6;   // relative singular-value gap
constexpr double kNullSingular = 1e-12;   // relative to the largest

Matrix gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Column-major fill order is part of the seed contract.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * normal(rng);
  return m;
}

Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
  const Matrix g = gaussian(rng, n, n, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ();
}

std::vector<std::size_t> expand_labels(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], k);
  return labels;
}

Matrix alpha_for_step(const ToyModelState& state, const ToyConfig& cfg, const Matrix& logits) {
  if (cfg.loss == LossKind::xent_linearized && state.step % cfg.relinearize_every != 0)
    return state.alpha_anchor;
  return softmax_alpha(logits);
}

// Groups consecutive singular values that are numerically tied, plus all
// (near-)zero ones, into clusters of indices.
std::vector<std::vector<Eigen::Index>> singular_clusters(const Eigen::VectorXd& s, Eigen::Index k) {
  std::vector<std::vector<Eigen::Index>> clusters;
  const double top = k > 0 ? s(0) : 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const bool tied = !clusters.empty() &&
                      (top <= 0.0 || s(i) <= kNullSingular * top ||
                       s(i - 1) - s(i) <= kDegenerateGap * top);
    if (tied) clusters.back().push_back(i);
    else clusters.push_back({i});
  }
  return clusters;
}

std::pair<double, bool> alignment_error(const Svd& f, const Svd& w) {
  const Eigen::Index k = std::min(f.V.cols(), w.U.cols());
  if (k == 0) return {0.0, false};
  const Matrix v1 = f.V.leftCols(k);
  const Matrix u2 = w.U.leftCols(k);
  const auto clusters = singular_clusters(f.s, k);
  const bool degenerate = static_cast<Eigen::Index>(clusters.size()) != k;
  if (!degenerate) {
    const Matrix m = (v1.transpose() * u2).cwiseAbs() - Matrix::Identity(k, k);
    return {m.norm(), false};
  }
  double sq = 0.0;
  for (const auto& c : clusters) {
    Matrix a(v1.rows(), static_cast<Eigen::Index>(c.size()));
    Matrix b(u2.rows(), static_cast<Eigen::Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) {
      a.col(static_cast<Eigen::Index>(j)) = v1.col(c[j]);
      b.col(static_cast<Eigen::Index>(j)) = u2.col(c[j]);
    }
    sq += 0.5 * (a * a.transpose() - b * b.transpose()).squaredNorm();
  }
  return {std::sqrt(sq), true};
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::xent_exact: return "xent_exact";
    case LossKind::xent_linearized: return "xent_linearized";
    case LossKind::mse: return "mse";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "xent_exact") return LossKind::xent_exact;
  if (name == "xent_linearized") return LossKind::xent_linearized;
  if (name == "mse") return LossKind::mse;
  fail(Errc::parse_failure, "unknown loss kind '" + name + "'");
}

std::size_t ToyConfig::batch_size() const {
  std::size_t b = 0;
  for (auto c : class_counts) b += c;
  return b;
}

void ToyConfig::validate() const {
  if (d_in < 1 || d < 1) fail(Errc::invalid_argument, "d_in and d must be positive");
  if (vocab < 2) fail(Errc::invalid_argument, "vocab must be at least 2");
  if (class_counts.size() != vocab) fail(Errc::invalid_argument, "class_counts needs one entry per class");
  const std::size_t b = batch_size();
  if (b < 2) fail(Errc::invalid_argument, "batch needs at least 2 examples");
  if (b > d_in) fail(Errc::invalid_argument, "batch size exceeds d_in: orthonormal inputs impossible");
  if (!std::isfinite(lr) || lr < 0.0) fail(Errc::invalid_argument, "lr must be finite and nonnegative");
  if (!std::isfinite(init_scale) || init_scale < 0.0) fail(Errc::invalid_argument, "init_scale must be nonnegative");
  if (relinearize_every < 1) fail(Errc::invalid_argument, "relinearize_every must be >= 1");
}

Svd canonical_svd(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Svd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  for (Eigen::Index j = 0; j < out.U.cols(); ++j) {
    Eigen::Index arg = 0;
    out.U.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.U(arg, j) < 0.0) {
      out.U.col(j) *= -1.0;
      out.V.col(j) *= -1.0;
    }
  }
  return out;
}

ToyModelState init_balanced(const ToyConfig& cfg) {
  cfg.validate();
  const auto b = static_cast<Eigen::Index>(cfg.batch_size());
  const auto d_in = static_cast<Eigen::Index>(cfg.d_in);
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const auto vocab = static_cast<Eigen::Index>(cfg.vocab);

  std::mt19937_64 rng(cfg.seed);
  ToyModelState state;
  state.labels = expand_labels(cfg.class_counts);
  state.inputs = random_orthogonal(rng, d_in).leftCols(b).transpose();
  state.theta = gaussian(rng, d_in, d, cfg.init_scale);
  const Matrix right = random_orthogonal(rng, vocab);

  Matrix f = state.inputs * state.theta;
  Svd svd = canonical_svd(f);
  // W has rank at most |V|; keep only that many feature directions so that
  // f^T f = W W^T can hold exactly.
  const Eigen::Index keep = std::min<Eigen::Index>(svd.s.size(), vocab);
  if (keep < svd.s.size()) {
    const Matrix kept = svd.U.leftCols(keep) * svd.s.head(keep).asDiagonal() *
                        svd.V.leftCols(keep).transpose();
    state.theta += state.inputs.transpose() * (kept - f);
    f = state.inputs * state.theta;
  }
  state.W = svd.V.leftCols(keep) * svd.s.head(keep).asDiagonal() *
            right.leftCols(keep).transpose();

  state.degenerate_init = svd.s.size() == 0 || svd.s(0) == 0.0;
  state.init_balance_residual = (f.transpose() * f - state.W * state.W.transpose()).norm();
  state.alpha_anchor = softmax_alpha(f * state.W);
  return state;
}

Matrix softmax_alpha(const Matrix& logits) {
  if (!logits.allFinite()) fail(Errc::non_finite, "non-finite logits");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double hi = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - hi).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix onehot(const std::vector<std::size_t>& labels, std::size_t vocab) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(vocab));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= vocab) fail(Errc::invalid_argument, "label out of range");
    y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) = 1.0;
  }
  return y;
}

Matrix a_matrix(const Matrix& alpha, const std::vector<std::size_t>& labels) {
  if (static_cast<std::size_t>(alpha.rows()) != labels.size())
    fail(Errc::size_mismatch, "one label per alpha row required");
  return alpha - onehot(labels, static_cast<std::size_t>(alpha.cols()));
}

double xent_loss(const Matrix& logits, const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double hi = logits.row(i).maxCoeff();
    const double lse = hi + std::log((logits.row(i).array() - hi).exp().sum());
    total += lse - logits(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]));
  }
  return total;
}

double linearized_xent_loss(const Matrix& logits, const std::vector<std::size_t>& labels,
                            const Matrix& alpha) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double entropy = 0.0;
    for (Eigen::Index j = 0; j < alpha.cols(); ++j) {
      const double a = alpha(i, j);
      if (a > 0.0) entropy -= a * std::log(a);
    }
    total += -logits(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) +
             alpha.row(i).dot(logits.row(i)) + entropy;
  }
  return total;
}

double mse_loss(const Matrix& logits, const std::vector<std::size_t>& labels) {
  return 0.5 * (logits - onehot(labels, static_cast<std::size_t>(logits.cols()))).squaredNorm();
}

Matrix residual_matrix(const ToyModelState& state, const ToyConfig& cfg) {
  const Matrix z = state.logits();
  if (cfg.loss == LossKind::mse) return z - onehot(state.labels, cfg.vocab);
  return a_matrix(alpha_for_step(state, cfg, z), state.labels);
}

double loss_value(const ToyModelState& state, const ToyConfig& cfg) {
  const Matrix z = state.logits();
  switch (cfg.loss) {
    case LossKind::xent_exact: return xent_loss(z, state.labels);
    case LossKind::xent_linearized:
      return linearized_xent_loss(z, state.labels, alpha_for_step(state, cfg, z));
    case LossKind::mse: return mse_loss(z, state.labels);
  }
  return 0.0;
}

ToyModelState gd_step(const ToyModelState& state, const ToyConfig& cfg) {
  const Matrix f = state.features();
  const Matrix z = f * state.W;
  ToyModelState next = state;
  Matrix a;
  if (cfg.loss == LossKind::mse) {
    a = z - onehot(state.labels, cfg.vocab);
  } else {
    next.alpha_anchor = alpha_for_step(state, cfg, z);
    a = a_matrix(next.alpha_anchor, state.labels);
  }
  next.theta = state.theta - cfg.lr * state.inputs.transpose() * (a * state.W.transpose());
  next.W = state.W - cfg.lr * f.transpose() * a;
  next.step = state.step + 1;
  if (!next.theta.allFinite() || !next.W.allFinite()) {
    fail(Errc::divergence, "update diverged at step " + std::to_string(state.step) +
                               " (|theta|=" + std::to_string(state.theta.norm()) +
                               ", |W|=" + std::to_string(state.W.norm()) +
                               ", lr=" + std::to_string(cfg.lr) + ")");
  }
  return next;
}

StepRecord measure(const ToyModelState& state, const ToyConfig& cfg) {
  StepRecord rec;
  rec.step = state.step;
  const Matrix f = state.features();
  const Matrix z = f * state.W;
  const Matrix a = residual_matrix(state, cfg);
  rec.loss = loss_value(state, cfg);

  {
    spectral::Matrix rows = f;
    const auto centered = spectral::center_features(spectral::FeatureMatrix(std::move(rows)));
    const auto spec = spectral::covariance_spectrum(centered, false);
    double total = 0.0;
    for (double v : spec.values) total += v;
    rec.rankme = total > 0.0 ? spectral::rankme(spec) : 0.0;
  }

  const Svd fs = canonical_svd(f);
  const Svd ws = canonical_svd(state.W);
  rec.sigma_f.assign(fs.s.data(), fs.s.data() + fs.s.size());
  rec.sigma_w.assign(ws.s.data(), ws.s.data() + ws.s.size());

  const Matrix gram = f.transpose() * f;
  rec.conserve_err = (gram - state.W * state.W.transpose()).norm();
  rec.gram_norm = gram.norm();
  rec.a_norm = a.norm();
  rec.a_spectral = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);

  const auto [align, degenerate] = alignment_error(fs, ws);
  rec.align_err = align;
  rec.align_degenerate = degenerate;

  const Matrix df = -cfg.lr * a * state.W.transpose();
  const Matrix dw = -cfg.lr * f.transpose() * a;
  for (Eigen::Index i = 0; i < fs.s.size(); ++i)
    rec.lemma_f.push_back(fs.U.col(i).dot(df * fs.V.col(i)));
  for (Eigen::Index i = 0; i < ws.s.size(); ++i)
    rec.lemma_w.push_back(ws.U.col(i).dot(dw * ws.V.col(i)));

  const Eigen::Index k = std::min(fs.V.cols(), ws.U.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const double sign = fs.V.col(i).dot(ws.U.col(i)) < 0.0 ? -1.0 : 1.0;
    rec.g.push_back(sign * fs.U.col(i).dot(a * ws.V.col(i)));
  }

  rec.class_margin.assign(cfg.vocab, 0.0);
  std::vector<std::size_t> seen(cfg.vocab, 0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>(state.labels[static_cast<std::size_t>(i)]);
    double other = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      if (j != c) other = std::max(other, z(i, j));
    rec.class_margin[static_cast<std::size_t>(c)] += z(i, c) - other;
    ++seen[static_cast<std::size_t>(c)];
  }
  for (std::size_t c = 0; c < cfg.vocab; ++c)
    if (seen[c] > 0) rec.class_margin[c] /= static_cast<double>(seen[c]);
  return rec;
}

TrajectoryRecord run_trajectory(const ToyConfig& cfg) {
  TrajectoryRecord traj;
  traj.config = cfg;
  ToyModelState state = init_balanced(cfg);
  traj.init_balance_residual = state.init_balance_residual;
  traj.degenerate_init = state.degenerate_init;
  traj.steps.reserve(cfg.steps + 1);
  for (std::size_t t = 0; t <= cfg.steps; ++t) {
    traj.steps.push_back(measure(state, cfg));
    if (t < cfg.steps) state = gd_step(state, cfg);
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace specgeo::dynamics
