#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace specgeo::spectral {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// M x d matrix of activations, one row per sequence. Construction enforces
/// M >= 2 and d >= 1.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix data, bool centered = false);

  std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(data_.cols()); }
  const Matrix& data() const noexcept { return data_; }
  bool centered() const noexcept { return centered_; }

 private:
  Matrix data_;
  bool centered_;
};

/// Descending covariance eigenvalues. `vectors`, when present, holds the
/// matching unit eigenvectors as columns (d x d).
struct EigenSpectrum {
  std::vector<double> values;
  std::optional<Eigen::MatrixXd> vectors;
  std::pair<std::size_t, std::size_t> source_dims{0, 0};

  EigenSpectrum scaled(double factor) const;
};

struct AlphaFit {
  double alpha = 0.0;
  double r2 = 0.0;
  std::size_t first = 0;  // 0-based, inclusive
  std::size_t last = 0;   // 0-based, inclusive
};

struct SpectralMetrics {
  double rankme = 0.0;
  double alpha_req = 0.0;
  std::pair<std::size_t, std::size_t> fit_window{0, 0};  // 1-based, inclusive
  double fit_r2 = 0.0;
  std::size_t m = 0;
  std::size_t d = 0;
};

/// Inclusive 1-based eigen-index range, matching the i in sigma_i ~ i^-alpha.
struct IndexWindow {
  std::size_t first = 1;
  std::size_t last = 1;
};

enum class AblationMode { retain_top, remove_top };

FeatureMatrix center_features(const FeatureMatrix& features);

/// Eigenvalues of (1/M) F^T F in descending order. Values only: solved on
/// whichever of F^T F and F F^T is smaller. With vectors: always on F^T F.
EigenSpectrum covariance_spectrum(const FeatureMatrix& features, bool want_vectors);

/// exp of the Shannon entropy of the normalized eigenvalues (0 ln 0 = 0).
double rankme(const EigenSpectrum& spectrum);
double rankme(const std::vector<double>& values);

/// Power-law exponent from an unweighted least-squares fit of ln sigma_i
/// against ln i. Default window: every index with sigma_i > 1e-12 sigma_1.
AlphaFit alpha_req(const EigenSpectrum& spectrum,
                   std::optional<IndexWindow> window = std::nullopt);
AlphaFit alpha_req(const std::vector<double>& values,
                   std::optional<IndexWindow> window = std::nullopt);

/// Projects rows onto the span of the top-k eigenvectors (retain_top) or onto
/// its orthogonal complement (remove_top). Shape is preserved. Ties at the
/// k-boundary resolve toward the lower index of the descending listing.
FeatureMatrix ablate_spectrum(const FeatureMatrix& features, std::size_t k,
                              AblationMode mode);

/// Same projection, with the basis taken from an existing spectrum that
/// carries vectors. Reapplying the projector of F to ablate_spectrum(F) is a
/// no-op; recomputing the basis from the ablated matrix is not for remove_top.
FeatureMatrix ablate_with(const FeatureMatrix& features, const EigenSpectrum& basis,
                          std::size_t k, AblationMode mode);

/// Fraction of total variance carried by the first k eigenvalues.
double retained_energy(const EigenSpectrum& spectrum, std::size_t k);

SpectralMetrics compute_metrics(const EigenSpectrum& spectrum,
                                std::optional<IndexWindow> window = std::nullopt);

}  // namespace specgeo::spectral
