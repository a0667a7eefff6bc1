#include "specgeo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "specgeo/error.hpp"

namespace specgeo::spectral {
namespace {

constexpr double kClampTolerance = 1e-10;
constexpr double kAlphaFloor = 1e-12;

void require_finite(const Matrix& m) {
  if (!m.allFinite()) fail(Errc::non_finite, "feature matrix has non-finite entries");
}

// Largest-magnitude component positive, so that the same input always yields
// the same vectors regardless of solver sign choices.
void canonicalize_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

std::vector<double> descending_clamped(const Eigen::VectorXd& ascending) {
  std::vector<double> values(ascending.data(), ascending.data() + ascending.size());
  std::reverse(values.begin(), values.end());
  const double top = values.empty() ? 0.0 : values.front();
  for (double& v : values) {
    if (v >= 0.0) continue;
    if (top <= 0.0 || v >= -kClampTolerance * top) {
      v = 0.0;
    } else {
      fail(Errc::non_finite, "covariance eigenvalue " + std::to_string(v) +
                                 " is negative beyond round-off");
    }
  }
  return values;
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix data, bool centered)
    : data_(std::move(data)), centered_(centered) {
  if (data_.rows() < 2) fail(Errc::invalid_argument, "feature matrix needs at least 2 rows");
  if (data_.cols() < 1) fail(Errc::invalid_argument, "feature matrix needs at least 1 column");
}

EigenSpectrum EigenSpectrum::scaled(double factor) const {
  EigenSpectrum out = *this;
  for (double& v : out.values) v *= factor;
  return out;
}

FeatureMatrix center_features(const FeatureMatrix& features) {
  require_finite(features.data());
  Matrix centered = features.data();
  const Eigen::RowVectorXd means = centered.colwise().mean();
  centered.rowwise() -= means;
  return FeatureMatrix(std::move(centered), true);
}

EigenSpectrum covariance_spectrum(const FeatureMatrix& features, bool want_vectors) {
  const Matrix& f = features.data();
  require_finite(f);
  const auto m = static_cast<double>(features.rows());
  const auto d = features.cols();

  EigenSpectrum out;
  out.source_dims = {features.rows(), d};

  if (!want_vectors && features.rows() < d) {
    // Same nonzero spectrum as the covariance, on the smaller M x M Gram.
    const Eigen::MatrixXd gram = (f * f.transpose()) / m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) fail(Errc::degenerate, "eigen-solver did not converge");
    out.values = descending_clamped(solver.eigenvalues());
    out.values.resize(d, 0.0);
    return out;
  }

  const Eigen::MatrixXd cov = (f.transpose() * f) / m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      cov, want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) fail(Errc::degenerate, "eigen-solver did not converge");
  out.values = descending_clamped(solver.eigenvalues());
  if (want_vectors) {
    Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
    canonicalize_signs(vectors);
    out.vectors = std::move(vectors);
  }
  return out;
}

double rankme(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) fail(Errc::invalid_argument, "rankme needs finite nonnegative eigenvalues");
    total += v;
  }
  if (!(total > 0.0)) fail(Errc::degenerate, "rankme of an all-zero spectrum is undefined");
  double entropy = 0.0;
  for (double v : values) {
    if (v == 0.0) continue;
    const double p = v / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double rankme(const EigenSpectrum& spectrum) { return rankme(spectrum.values); }

AlphaFit alpha_req(const std::vector<double>& values, std::optional<IndexWindow> window) {
  if (values.empty()) fail(Errc::invalid_argument, "empty spectrum");
  const double top = values.front();

  std::size_t first = 1;
  std::size_t last = values.size();
  if (window) {
    if (window->first < 1 || window->first > window->last || window->last > values.size())
      fail(Errc::invalid_argument, "alpha window out of range");
    first = window->first;
    last = window->last;
  }

  std::vector<double> xs;
  std::vector<double> ys;
  std::size_t used_first = 0;
  std::size_t used_last = 0;
  for (std::size_t i = first; i <= last; ++i) {
    const double v = values[i - 1];
    const bool usable = window ? v > 0.0 : v > kAlphaFloor * top;
    if (!usable) continue;
    if (xs.empty()) used_first = i;
    used_last = i;
    xs.push_back(std::log(static_cast<double>(i)));
    ys.push_back(std::log(v));
  }
  if (xs.size() < 3) fail(Errc::degenerate, "alpha fit needs at least 3 positive eigenvalues");

  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) fail(Errc::degenerate, "zero variance in log index");

  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    ss_res += r * r;
  }

  AlphaFit fit;
  fit.alpha = -slope;
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  fit.first = used_first - 1;
  fit.last = used_last - 1;
  return fit;
}

AlphaFit alpha_req(const EigenSpectrum& spectrum, std::optional<IndexWindow> window) {
  return alpha_req(spectrum.values, window);
}

FeatureMatrix ablate_spectrum(const FeatureMatrix& features, std::size_t k, AblationMode mode) {
  const std::size_t d = features.cols();
  if (k < 1 || k > d) fail(Errc::invalid_argument, "ablation k must lie in [1, d]");

  return ablate_with(features, covariance_spectrum(features, true), k, mode);
}

FeatureMatrix ablate_with(const FeatureMatrix& features, const EigenSpectrum& basis,
                          std::size_t k, AblationMode mode) {
  const std::size_t d = features.cols();
  if (k < 1 || k > d) fail(Errc::invalid_argument, "ablation k must lie in [1, d]");
  if (!basis.vectors || static_cast<std::size_t>(basis.vectors->rows()) != d)
    fail(Errc::invalid_argument, "ablation basis must carry d-dimensional eigenvectors");
  const Eigen::MatrixXd top = basis.vectors->leftCols(static_cast<Eigen::Index>(k));
  const Matrix projected = (features.data() * top) * top.transpose();

  if (mode == AblationMode::retain_top) return FeatureMatrix(projected, features.centered());
  return FeatureMatrix(features.data() - projected, features.centered());
}

double retained_energy(const EigenSpectrum& spectrum, std::size_t k) {
  double head = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
    total += spectrum.values[i];
    if (i < k) head += spectrum.values[i];
  }
  if (!(total > 0.0)) fail(Errc::degenerate, "retained energy of an all-zero spectrum");
  return head / total;
}

SpectralMetrics compute_metrics(const EigenSpectrum& spectrum, std::optional<IndexWindow> window) {
  SpectralMetrics out;
  out.rankme = rankme(spectrum);
  const AlphaFit fit = alpha_req(spectrum, window);
  out.alpha_req = fit.alpha;
  out.fit_r2 = fit.r2;
  out.fit_window = {fit.first + 1, fit.last + 1};
  out.m = spectrum.source_dims.first;
  out.d = spectrum.source_dims.second;
  return out;
}

}  // namespace specgeo::spectral
