#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "oracles.hpp"
#include "specgeo/error.hpp"
#include "specgeo/spectral.hpp"

using namespace specgeo;
using namespace specgeo::spectral;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::io_failure;
}

FeatureMatrix random_centered(gen::Rng& r, std::size_t m, std::size_t d) {
  return center_features(FeatureMatrix(gen::matrix(r, m, d)));
}

}  // namespace

TEST_CASE("center_features subtracts column means") {
  const auto c = center_features(FeatureMatrix(mat({{1, 3}, {3, 5}})));
  CHECK(c.centered());
  CHECK(c.data().isApprox(mat({{-1, -1}, {1, 1}})));
}

TEST_CASE("center_features is idempotent") {
  gen::Rng r(1);
  const auto once = center_features(FeatureMatrix(gen::matrix(r, 7, 3)));
  const auto twice = center_features(once);
  CHECK((twice.data() - once.data()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("centered columns sum to zero by independent summation") {
  gen::Rng r(2);
  const auto c = center_features(FeatureMatrix(gen::matrix(r, 5, 3)));
  for (Eigen::Index j = 0; j < 3; ++j) {
    long double s = 0;
    for (Eigen::Index i = 0; i < 5; ++i) s += c.data()(i, j);
    CHECK(std::abs(static_cast<double>(s)) <= 1e-10);
  }
}

TEST_CASE("feature matrices need two rows and one column") {
  CHECK(code_of([] { FeatureMatrix f(Matrix::Zero(1, 3)); }) == Errc::invalid_argument);
  CHECK(code_of([] { FeatureMatrix f(Matrix::Zero(3, 0)); }) == Errc::invalid_argument);
}

TEST_CASE("covariance_spectrum small cases") {
  SUBCASE("rank one") {
    const auto s = covariance_spectrum(FeatureMatrix(mat({{1, 0}, {-1, 0}}), true), false);
    REQUIRE(s.values.size() == 2);
    CHECK(s.values[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.values[1] == 0.0);
    CHECK(s.source_dims == std::pair<std::size_t, std::size_t>{2, 2});
  }
  SUBCASE("isotropic") {
    const double r2 = std::sqrt(2.0);
    const auto s = covariance_spectrum(
        FeatureMatrix(mat({{r2, 0}, {0, r2}, {-r2, 0}, {0, -r2}}), true), true);
    CHECK(std::abs(s.values[0] - 1.0) <= 1e-14);
    CHECK(std::abs(s.values[1] - 1.0) <= 1e-14);
  }
}

TEST_CASE("covariance_spectrum matches a Jacobi eigen-solver") {
  gen::Rng r(3);
  for (auto [m, d] : {std::pair{6, 4}, std::pair{3, 7}, std::pair{20, 20}, std::pair{2, 5}}) {
    const auto f = random_centered(r, m, d);
    const auto expect = oracle::jacobi_eigenvalues(oracle::covariance(gen::dense(f.data())));
    for (bool vectors : {false, true}) {
      const auto s = covariance_spectrum(f, vectors);
      REQUIRE(s.values.size() == static_cast<std::size_t>(d));
      for (std::size_t i = 0; i < s.values.size(); ++i)
        CHECK(std::abs(s.values[i] - std::max(0.0, expect[i])) <= 1e-8);
    }
  }
}

TEST_CASE("when M < d at most M values are nonzero") {
  gen::Rng r(4);
  const auto f = random_centered(r, 4, 9);
  const auto s = covariance_spectrum(f, false);
  std::size_t nonzero = 0;
  for (double v : s.values) nonzero += v > 1e-10 * s.values[0];
  CHECK(nonzero <= 4);
  for (std::size_t i = 1; i < s.values.size(); ++i) CHECK(s.values[i] <= s.values[i - 1]);
  for (double v : s.values) CHECK(v >= 0.0);
}

TEST_CASE("property: eigen-decomposition reconstructs the covariance") {
  gen::Rng r(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = r.index(2, 50);
    const std::size_t d = r.index(1, 50);
    const auto f = random_centered(r, m, d);
    const auto s = covariance_spectrum(f, true);
    REQUIRE(s.vectors.has_value());
    const Eigen::MatrixXd& v = *s.vectors;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(v.cols(), v.cols());
    CHECK((v.transpose() * v - eye).cwiseAbs().maxCoeff() <= 1e-8);
    Eigen::VectorXd lam(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) lam(static_cast<Eigen::Index>(i)) = s.values[i];
    const Eigen::MatrixXd rebuilt = v * lam.asDiagonal() * v.transpose();
    const auto cov = oracle::covariance(gen::dense(f.data()));
    double err = 0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        const double diff = rebuilt(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) - cov[a][b];
        err += diff * diff;
      }
    CHECK(std::sqrt(err) <= 1e-8);
  }
}

TEST_CASE("eigenvector signs are canonical") {
  gen::Rng r(6);
  const auto s = covariance_spectrum(random_centered(r, 10, 4), true);
  for (Eigen::Index j = 0; j < 4; ++j) {
    Eigen::Index arg = 0;
    s.vectors->col(j).cwiseAbs().maxCoeff(&arg);
    CHECK((*s.vectors)(arg, j) > 0.0);
  }
}

TEST_CASE("non-finite features are rejected") {
  Matrix m = Matrix::Zero(3, 2);
  m(1, 1) = std::nan("");
  CHECK(code_of([&] { covariance_spectrum(FeatureMatrix(m, true), false); }) == Errc::non_finite);
  m(1, 1) = INFINITY;
  CHECK(code_of([&] { covariance_spectrum(FeatureMatrix(m, true), true); }) == Errc::non_finite);
}

TEST_CASE("rankme examples") {
  CHECK(rankme(std::vector<double>{1, 1, 1, 1}) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(rankme(std::vector<double>{5, 0, 0}) == 1.0);
  // exp(-(0.75 ln 0.75 + 0.25 ln 0.25)), 20 digits in arbitrary precision.
  CHECK(std::abs(rankme(std::vector<double>{0.75, 0.25}) - 1.75476535060332328109) <= 1e-14);
  CHECK(code_of([] { rankme(std::vector<double>{0, 0}); }) == Errc::degenerate);
}

TEST_CASE("property: rankme bounds, uniform maximum and entropy oracle") {
  gen::Rng r(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = r.index(1, 40);
    std::vector<double> v(d);
    std::size_t nonzero = 0;
    for (auto& x : v) {
      x = r.uniform(0, 1) < 0.3 ? 0.0 : r.uniform(0, 5);
      nonzero += x > 0;
    }
    if (nonzero == 0) v[0] = 1.0, nonzero = 1;
    const double rk = rankme(v);
    CHECK(rk >= 1.0 - 1e-12);
    CHECK(rk <= static_cast<double>(nonzero) + 1e-12);
    CHECK(std::abs(rk - oracle::effective_rank(v)) <= 1e-12 * rk);
  }
  for (std::size_t d = 1; d <= 64; ++d)
    CHECK(std::abs(rankme(std::vector<double>(d, 0.37)) - static_cast<double>(d)) <= 1e-10);
}

TEST_CASE("property: rankme and alpha are scale invariant") {
  gen::Rng r(8);
  for (int trial = 0; trial < 50; ++trial) {
    EigenSpectrum s;
    for (std::size_t i = 1; i <= 30; ++i) s.values.push_back(std::pow(i, -1.2) * std::exp(0.1 * r.normal()));
    std::sort(s.values.rbegin(), s.values.rend());
    const double c = std::exp(r.uniform(-10, 10));
    const auto scaled = s.scaled(c);
    CHECK(std::abs(rankme(scaled) - rankme(s)) <= 1e-10);
    CHECK(std::abs(alpha_req(scaled).alpha - alpha_req(s).alpha) <= 1e-10);
  }
}

TEST_CASE("property: two-eigenvalue rankme rises strictly from 1 to 2") {
  double prev = rankme(std::vector<double>{1.0, 0.0});
  CHECK(prev == 1.0);
  for (int i = 1; i <= 1000; ++i) {
    const double now = rankme(std::vector<double>{1.0, i / 1000.0});
    CHECK(now > prev);
    prev = now;
  }
  CHECK(std::abs(prev - 2.0) <= 1e-15);
}

TEST_CASE("alpha_req recovers exact power laws") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(std::pow(i, -1.5));
  const auto fit = alpha_req(v);
  CHECK(std::abs(fit.alpha - 1.5) <= 1e-9);
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fit.first == 0);
  CHECK(fit.last == 99);

  std::vector<double> w;
  for (int i = 1; i <= 50; ++i) w.push_back(7.3 * std::pow(i, -0.8));
  CHECK(std::abs(alpha_req(w).alpha - 0.8) <= 1e-9);
}

TEST_CASE("alpha_req equals the closed-form least-squares slope") {
  gen::Rng r(9);
  std::vector<double> v, lx, ly;
  for (int i = 1; i <= 60; ++i) {
    v.push_back(std::pow(i, -2.0) * std::exp(0.05 * r.normal()));
    lx.push_back(std::log(i));
    ly.push_back(std::log(v.back()));
  }
  const auto [slope, icpt] = oracle::ols(lx, ly);
  CHECK(std::abs(alpha_req(v).alpha + slope) <= 1e-10);
}

TEST_CASE("alpha_req windows and failures") {
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i <= 10 ? std::pow(i, -1.0) : std::pow(10, -1.0) * std::pow(i / 10.0, -3.0));
  const auto head = alpha_req(v, IndexWindow{1, 10});
  CHECK(std::abs(head.alpha - 1.0) <= 1e-12);
  const auto tail = alpha_req(v, IndexWindow{10, 20});
  CHECK(std::abs(tail.alpha - 3.0) <= 1e-12);

  CHECK(code_of([] { alpha_req(std::vector<double>{1.0, 0.5}); }) == Errc::degenerate);
  CHECK(code_of([] { alpha_req(std::vector<double>{1.0, 0.5, 0.0, 0.0}); }) == Errc::degenerate);
  CHECK(code_of([&] { alpha_req(v, IndexWindow{5, 25}); }) == Errc::invalid_argument);
  // the default window drops values below 1e-12 of the largest
  const auto fit = alpha_req(std::vector<double>{1.0, 0.25, 1.0 / 9, 1e-20});
  CHECK(fit.last == 2);
  CHECK(std::abs(fit.alpha - 2.0) <= 1e-12);
}

TEST_CASE("ablation at k = d") {
  gen::Rng r(10);
  const auto f = random_centered(r, 12, 5);
  CHECK((ablate_spectrum(f, 5, AblationMode::retain_top).data() - f.data()).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(ablate_spectrum(f, 5, AblationMode::remove_top).data().cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(code_of([&] { ablate_spectrum(f, 0, AblationMode::retain_top); }) == Errc::invalid_argument);
  CHECK(code_of([&] { ablate_spectrum(f, 6, AblationMode::remove_top); }) == Errc::invalid_argument);
}

TEST_CASE("property: ablation idempotence, complementarity, retained energy") {
  gen::Rng r(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = r.index(2, 40);
    const std::size_t d = r.index(1, 12);
    const std::size_t k = r.index(1, d);
    const auto f = random_centered(r, m, d);
    const auto keep = ablate_spectrum(f, k, AblationMode::retain_top);
    const auto drop = ablate_spectrum(f, k, AblationMode::remove_top);
    CHECK(keep.cols() == d);
    CHECK((keep.data() + drop.data() - f.data()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((ablate_spectrum(keep, k, AblationMode::retain_top).data() - keep.data()).cwiseAbs().maxCoeff() <= 1e-10);
    const auto basis = covariance_spectrum(f, true);
    CHECK((ablate_with(keep, basis, k, AblationMode::retain_top).data() - keep.data()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((ablate_with(drop, basis, k, AblationMode::remove_top).data() - drop.data()).cwiseAbs().maxCoeff() <= 1e-10);

    const auto orig = covariance_spectrum(f, false);
    const auto kept = oracle::jacobi_eigenvalues(oracle::covariance(gen::dense(keep.data())));
    double kept_sum = 0, total = 0;
    for (double v : kept) kept_sum += v;
    for (double v : orig.values) total += v;
    CHECK(std::abs(kept_sum / total - retained_energy(orig, k)) <= 1e-10);
  }
}

TEST_CASE("ablation with tied eigenvalues is deterministic") {
  const double r2 = std::sqrt(2.0);
  const FeatureMatrix f(mat({{r2, 0, 0}, {0, r2, 0}, {-r2, 0, 0}, {0, -r2, 0}}), true);
  const auto a = ablate_spectrum(f, 1, AblationMode::retain_top);
  const auto b = ablate_spectrum(f, 1, AblationMode::retain_top);
  CHECK(a.data() == b.data());
  const auto s = covariance_spectrum(a, false);
  CHECK(std::abs(s.values[0] - 1.0) <= 1e-12);
  CHECK(std::abs(s.values[1]) <= 1e-12);
}

TEST_CASE("compute_metrics reports one-based windows and dimensions") {
  gen::Rng r(12);
  std::vector<double> spec;
  for (int i = 1; i <= 6; ++i) spec.push_back(std::pow(i, -1.0));
  const auto f = FeatureMatrix(gen::with_spectrum(r, 40, spec), true);
  const auto m = compute_metrics(covariance_spectrum(f, false));
  CHECK(m.m == 40);
  CHECK(m.d == 6);
  CHECK(m.fit_window == std::pair<std::size_t, std::size_t>{1, 6});
  CHECK(std::abs(m.alpha_req - 1.0) <= 1e-9);
  CHECK(std::abs(m.rankme - oracle::effective_rank(spec)) <= 1e-9);
}
