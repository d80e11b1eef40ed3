#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "medboot/dataset.hpp"
#include "medboot/errors.hpp"
#include "medboot/math.hpp"

namespace medboot {

/// Parameter names in reporting order.
inline constexpr std::array<std::string_view, 8> kParamNames = {
    "a", "b", "c_prime", "ab", "i_y", "i_m", "var_e_y", "var_e_m"};
inline constexpr std::size_t kIndexAb = 3;

/// Full parameter vector of the two-equation mediation model
///   M = i_m + a X + e_m,   Y = i_y + b M + c' X + e_y,
/// with the mediated effect ab = a * b.
struct ThetaVector {
  double i_m = 0, i_y = 0;
  double a = 0, b = 0, c_prime = 0;
  double var_e_m = 0, var_e_y = 0;
  double ab = 0;
  bool pooled = false;  // true when averaged over imputations

  /// Values in kParamNames order.
  std::array<double, 8> report_values() const {
    return {a, b, c_prime, ab, i_y, i_m, var_e_y, var_e_m};
  }
};

/// First and second sample moments of (X, M, Y); variances and covariances
/// use the n-1 denominator.
struct SampleMoments {
  std::size_t n = 0;
  double mean_x = 0, mean_m = 0, mean_y = 0;
  double var_x = 0, var_m = 0, var_y = 0;
  double cov_xm = 0, cov_xy = 0, cov_my = 0;
};

inline SampleMoments sample_moments(std::span<const double> x,
                                    std::span<const double> m,
                                    std::span<const double> y) {
  const std::size_t n = x.size();
  if (m.size() != n || y.size() != n)
    throw InvalidArgument("sample_moments: column lengths differ");
  if (n < 2) throw TooFewRows("sample_moments: need at least 2 rows");
  SampleMoments s;
  s.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    s.mean_x += x[i];
    s.mean_m += m[i];
    s.mean_y += y[i];
  }
  const double dn = static_cast<double>(n);
  s.mean_x /= dn;
  s.mean_m /= dn;
  s.mean_y /= dn;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - s.mean_x;
    const double dm = m[i] - s.mean_m;
    const double dy = y[i] - s.mean_y;
    s.var_x += dx * dx;
    s.var_m += dm * dm;
    s.var_y += dy * dy;
    s.cov_xm += dx * dm;
    s.cov_xy += dx * dy;
    s.cov_my += dm * dy;
  }
  const double dn1 = dn - 1.0;
  s.var_x /= dn1;
  s.var_m /= dn1;
  s.var_y /= dn1;
  s.cov_xm /= dn1;
  s.cov_xy /= dn1;
  s.cov_my /= dn1;
  return s;
}

/// Closed-form least-squares solution of both model equations from the
/// sample moments.
inline ThetaVector mediation_coefficients(const SampleMoments& s) {
  if (s.n < 4) throw TooFewRows("mediation fit: need at least 4 rows");
  if (!(s.var_x > 0.0)) throw SingularDesign("mediation fit: X is constant");
  const double den = s.var_x * s.var_m - s.cov_xm * s.cov_xm;
  if (!(den > 1e-12 * s.var_x * s.var_m))
    throw SingularDesign("mediation fit: X and M are collinear");

  ThetaVector t;
  t.a = s.cov_xm / s.var_x;
  t.b = (s.cov_my * s.var_x - s.cov_xm * s.cov_xy) / den;
  t.c_prime = (s.cov_xy * s.var_m - s.cov_xm * s.cov_my) / den;
  t.i_m = s.mean_m - t.a * s.mean_x;
  t.i_y = s.mean_y - t.b * s.mean_m - t.c_prime * s.mean_x;
  const double dn1 = static_cast<double>(s.n) - 1.0;
  const double sse_m = dn1 * (s.var_m - s.cov_xm * s.cov_xm / s.var_x);
  const double sse_y =
      dn1 * (s.var_y - t.b * s.cov_my - t.c_prime * s.cov_xy);
  t.var_e_m = std::max(0.0, sse_m) / (static_cast<double>(s.n) - 2.0);
  t.var_e_y = std::max(0.0, sse_y) / (static_cast<double>(s.n) - 3.0);
  t.ab = t.a * t.b;
  return t;
}

inline ThetaVector fit_complete(std::span<const double> x,
                                std::span<const double> m,
                                std::span<const double> y) {
  return mediation_coefficients(sample_moments(x, m, y));
}

/// Fits the model to the dataset's X, M, Y columns, which must be fully
/// observed.  Other columns (auxiliary or not) are ignored.
inline ThetaVector fit_complete(const Dataset& data) {
  const std::size_t cx = data.column_index(Role::X);
  const std::size_t cm = data.column_index(Role::M);
  const std::size_t cy = data.column_index(Role::Y);
  const std::size_t n = data.n_rows();
  std::vector<double> x(n), m(n), y(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (data.is_missing(r, cx) || data.is_missing(r, cm) ||
        data.is_missing(r, cy))
      throw InvalidArgument("fit_complete: model columns contain missing values");
    x[r] = data.value(r, cx);
    m[r] = data.value(r, cm);
    y[r] = data.value(r, cy);
  }
  return fit_complete(x, m, y);
}

/// First-order delta-method standard error of the product a*b.
inline double sobel_se(double a, double b, double se_a, double se_b,
                       double cov_ab = 0.0) {
  const double v =
      b * b * se_a * se_a + a * a * se_b * se_b + 2.0 * a * b * cov_ab;
  if (v < 0.0) throw NegativeOperand("sobel_se: negative variance");
  return std::sqrt(v);
}

/// Componentwise mean over per-imputation fits.  The mediated effect is the
/// mean of the per-imputation products, not the product of the pooled a and
/// b.  With identical inputs the result equals the input exactly.
inline ThetaVector pool_point_estimates(std::span<const ThetaVector> fits) {
  if (fits.empty()) throw EmptyInput("pool_point_estimates: no fits");
  std::vector<double> buf(fits.size());
  auto pool = [&](double ThetaVector::* member) {
    for (std::size_t i = 0; i < fits.size(); ++i) buf[i] = fits[i].*member;
    return anchored_mean(buf);
  };
  ThetaVector t;
  t.i_m = pool(&ThetaVector::i_m);
  t.i_y = pool(&ThetaVector::i_y);
  t.a = pool(&ThetaVector::a);
  t.b = pool(&ThetaVector::b);
  t.c_prime = pool(&ThetaVector::c_prime);
  t.var_e_m = pool(&ThetaVector::var_e_m);
  t.var_e_y = pool(&ThetaVector::var_e_y);
  t.ab = pool(&ThetaVector::ab);
  t.pooled = true;
  return t;
}

}  // namespace medboot
