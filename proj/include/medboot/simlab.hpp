#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medboot/bootstrap.hpp"
#include "medboot/dataset.hpp"
#include "medboot/errors.hpp"
#include "medboot/estimator.hpp"
#include "medboot/parallel.hpp"
#include "medboot/rng.hpp"

namespace medboot {

enum class Mechanism { Mcar, Mar, Mnar };

inline std::string_view mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::Mcar: return "mcar";
    case Mechanism::Mar: return "mar";
    case Mechanism::Mnar: return "mnar";
  }
  throw InvalidArgument("unknown mechanism");
}

/// True model used to generate data.  Defaults give a medium mediated
/// effect (a = b = 0.39), no direct effect, unit error variances, and two
/// auxiliary variables correlated 0.5 with M and Y respectively.
struct GenParams {
  double a = 0.39, b = 0.39, c_prime = 0.0;
  double i_m = 0.0, i_y = 0.0;
  double var_e_x = 1.0, var_e_m = 1.0, var_e_y = 1.0;
  double aux_corr = 0.5;
  std::size_t n_aux = 2;
};

struct StudyConfig {
  GenParams gen;
  std::size_t n = 100;
  Mechanism mechanism = Mechanism::Mcar;
  double proportion = 0.1;
  bool use_aux = true;
  std::size_t replications = 200;
  std::size_t n_boot = 400;
  std::size_t n_imputations = 30;
  double level = 0.95;
  std::uint64_t seed = 1;
};

struct StudyRow {
  std::string_view name;
  double truth = 0;
  double bias = 0;             // percent scale
  double coverage = 0;
  double power_or_type1 = 0;   // Type I error when truth == 0
};

struct StudyReport {
  std::array<StudyRow, 8> rows{};
  std::size_t replications_requested = 0;
  std::size_t replications_used = 0;
  std::size_t dropped_replicates = 0;  // bootstrap drops summed over reps
  double wall_seconds = 0;
};

/// Draws a complete dataset from the mediation model: X centered normal,
/// then M and Y by the two structural equations, then each auxiliary as a
/// unit-variance mix of its anchor (M for a1, Y for a2, alternating) and
/// fresh noise, standardized with the model-implied moments so the
/// population correlation equals aux_corr exactly.
inline Dataset generate_mediation_data(const GenParams& gp, std::size_t n,
                                       RngKey seed) {
  if (n < 1) throw InvalidArgument("generate_mediation_data: n must be >= 1");
  if (!(gp.var_e_x > 0 && gp.var_e_m > 0 && gp.var_e_y > 0))
    throw InvalidArgument("generate_mediation_data: variances must be positive");
  if (!(std::fabs(gp.aux_corr) < 1.0))
    throw InvalidArgument("generate_mediation_data: |aux_corr| must be < 1");

  std::vector<std::string> names = {"x", "m", "y"};
  std::vector<Role> roles = {Role::X, Role::M, Role::Y};
  for (std::size_t k = 0; k < gp.n_aux; ++k) {
    names.push_back("a" + std::to_string(k + 1));
    roles.push_back(Role::Aux);
  }
  const std::size_t d = names.size();

  const double sd_x = std::sqrt(gp.var_e_x);
  const double sd_em = std::sqrt(gp.var_e_m);
  const double sd_ey = std::sqrt(gp.var_e_y);
  const double mean_m = gp.i_m;
  const double mean_y = gp.i_y + gp.b * gp.i_m;
  const double var_m = gp.a * gp.a * gp.var_e_x + gp.var_e_m;
  const double var_y = gp.b * gp.b * var_m +
                       gp.c_prime * gp.c_prime * gp.var_e_x +
                       2.0 * gp.a * gp.b * gp.c_prime * gp.var_e_x +
                       gp.var_e_y;
  const double sd_m = std::sqrt(var_m);
  const double sd_y = std::sqrt(var_y);
  const double noise = std::sqrt(1.0 - gp.aux_corr * gp.aux_corr);

  Rng rng(seed);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    const double x = sd_x * rng.next_normal();
    const double m = gp.i_m + gp.a * x + sd_em * rng.next_normal();
    const double y =
        gp.i_y + gp.b * m + gp.c_prime * x + sd_ey * rng.next_normal();
    const auto ri = static_cast<Eigen::Index>(r);
    values(ri, 0) = x;
    values(ri, 1) = m;
    values(ri, 2) = y;
    for (std::size_t k = 0; k < gp.n_aux; ++k) {
      const bool anchor_m = k % 2 == 0;
      const double std_anchor = anchor_m ? (m - mean_m) / sd_m
                                         : (y - mean_y) / sd_y;
      values(ri, static_cast<Eigen::Index>(3 + k)) =
          gp.aux_corr * std_anchor + noise * rng.next_normal();
    }
  }
  return Dataset(std::move(names), std::move(roles), std::move(values),
                 std::vector<std::uint8_t>(n * d, 0));
}

namespace detail {

/// First `quota` positions of a uniform random permutation of 0..n-1.
inline std::vector<std::size_t> random_subset(std::size_t n, std::size_t quota,
                                              Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < quota; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(quota);
  return idx;
}

/// Row indices of the `quota` largest (or smallest) values of a column;
/// ties broken by row index.
inline std::vector<std::size_t> extreme_rows(const Dataset& ds,
                                             std::size_t col,
                                             std::size_t quota, bool largest) {
  std::vector<std::size_t> idx(ds.n_rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     return largest ? ds.value(a, col) > ds.value(b, col)
                                    : ds.value(a, col) < ds.value(b, col);
                   });
  idx.resize(quota);
  return idx;
}

}  // namespace detail

/// Masks exactly floor(q*N) cells in M and in Y (chosen independently),
/// never touching X or auxiliary columns.  MCAR picks uniform random rows;
/// MAR cuts on X (largest X lose M, smallest X lose Y); MNAR cuts on the
/// first two auxiliaries (smallest a1 lose M, smallest a2 lose Y).
inline Dataset impose_missingness(const Dataset& ds, Mechanism mechanism,
                                  double proportion, RngKey seed) {
  if (!(proportion >= 0.0 && proportion < 1.0))
    throw InvalidArgument("impose_missingness: proportion must lie in [0,1)");
  const std::size_t n = ds.n_rows();
  const std::size_t cm = ds.column_index(Role::M);
  const std::size_t cy = ds.column_index(Role::Y);
  for (std::size_t r = 0; r < n; ++r)
    if (ds.is_missing(r, cm) || ds.is_missing(r, cy))
      throw InvalidArgument("impose_missingness: M and Y must start complete");

  const std::size_t quota =
      static_cast<std::size_t>(proportion * static_cast<double>(n));
  std::vector<std::size_t> rows_m, rows_y;
  if (quota > 0) {
    switch (mechanism) {
      case Mechanism::Mcar: {
        Rng rng(seed);
        rows_m = detail::random_subset(n, quota, rng);
        rows_y = detail::random_subset(n, quota, rng);
        break;
      }
      case Mechanism::Mar: {
        const std::size_t cx = ds.column_index(Role::X);
        for (std::size_t r = 0; r < n; ++r)
          if (ds.is_missing(r, cx))
            throw InvalidArgument("impose_missingness: MAR cut needs complete X");
        rows_m = detail::extreme_rows(ds, cx, quota, true);
        rows_y = detail::extreme_rows(ds, cx, quota, false);
        break;
      }
      case Mechanism::Mnar: {
        std::vector<std::size_t> aux;
        for (std::size_t c = 0; c < ds.roles().size(); ++c)
          if (ds.roles()[c] == Role::Aux) aux.push_back(c);
        if (aux.size() < 2)
          throw InvalidArgument(
              "impose_missingness: MNAR cut needs two auxiliary columns");
        for (std::size_t r = 0; r < n; ++r)
          if (ds.is_missing(r, aux[0]) || ds.is_missing(r, aux[1]))
            throw InvalidArgument(
                "impose_missingness: MNAR cut needs complete auxiliaries");
        rows_m = detail::extreme_rows(ds, aux[0], quota, false);
        rows_y = detail::extreme_rows(ds, aux[1], quota, false);
        break;
      }
    }
  }

  std::vector<std::uint8_t> mask = ds.missing_mask();
  const std::size_t width = ds.n_cols();
  for (const std::size_t r : rows_m) mask[r * width + cm] = 1;
  for (const std::size_t r : rows_y) mask[r * width + cy] = 1;
  return Dataset(ds.names(), ds.roles(), ds.values(), std::move(mask));
}

/// Percent bias of the mean estimate: relative to the truth when it is
/// nonzero, absolute (x100) when the truth is zero.
inline double evaluate_bias(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw EmptyInput("evaluate_bias: no estimates");
  const double mean = anchored_mean(estimates);
  return truth != 0.0 ? 100.0 * (mean / truth - 1.0) : 100.0 * mean;
}

/// Fraction of intervals with lo < truth < hi (strict).
inline double evaluate_coverage(std::span<const Interval> intervals,
                                double truth) {
  if (intervals.empty()) throw EmptyInput("evaluate_coverage: no intervals");
  std::size_t hits = 0;
  for (const auto& iv : intervals) hits += iv.lo < truth && truth < iv.hi;
  return static_cast<double>(hits) / static_cast<double>(intervals.size());
}

/// Fraction of intervals excluding zero (on either side).  Reads as power
/// when the truth is nonzero and as Type I error when it is zero.
inline double evaluate_power(std::span<const Interval> intervals) {
  if (intervals.empty()) throw EmptyInput("evaluate_power: no intervals");
  std::size_t rejections = 0;
  for (const auto& iv : intervals) rejections += iv.lo > 0.0 || iv.hi < 0.0;
  return static_cast<double>(rejections) / static_cast<double>(intervals.size());
}

/// The (generated, masked, aux-filtered) dataset replication r of the study
/// would analyze.  Generation and masking keys do not depend on use_aux, so
/// toggling it changes only what the analysis sees.
inline Dataset study_replication_dataset(const StudyConfig& cfg,
                                         std::size_t r) {
  const RngKey key = RngKey{cfg.seed}.child(r);
  Dataset complete = generate_mediation_data(cfg.gen, cfg.n, key.child(0));
  Dataset masked = impose_missingness(complete, cfg.mechanism, cfg.proportion,
                                      key.child(1));
  return cfg.use_aux ? masked : masked.without_aux();
}

inline std::array<double, 8> study_truths(const GenParams& gp) {
  // kParamNames order
  return {gp.a, gp.b, gp.c_prime, gp.a * gp.b,
          gp.i_y, gp.i_m, gp.var_e_y, gp.var_e_m};
}

/// Runs R generate/mask/analyze replications and aggregates bias, coverage,
/// and rejection rate per parameter.  Replications parallelize across
/// workers; each inner analyze runs single-threaded so results match the
/// sequential run bit for bit.
inline StudyReport run_study(const StudyConfig& cfg, std::size_t workers = 0) {
  if (cfg.replications < 1)
    throw InvalidArgument("run_study: need at least 1 replication");
  const auto t0 = std::chrono::steady_clock::now();

  struct RepResult {
    std::array<double, 8> estimates;
    std::array<Interval, 8> intervals;
    std::size_t dropped;
  };
  std::vector<std::optional<RepResult>> slots(cfg.replications);
  parallel_for(cfg.replications, workers, [&](std::size_t r) {
    try {
      const Dataset ds = study_replication_dataset(cfg, r);
      AnalyzeOptions opts;
      opts.workers = 1;
      const BootstrapReport rep =
          analyze(ds, cfg.n_boot, cfg.n_imputations, cfg.level,
                  RngKey{cfg.seed}.child(r).child(2), opts);
      slots[r] = RepResult{rep.point.report_values(), rep.intervals,
                           rep.b_requested - rep.b_effective};
    } catch (const Error&) {
      // replication dropped; reported in the aggregate counts
    }
  });

  StudyReport report;
  report.replications_requested = cfg.replications;
  std::array<std::vector<double>, 8> estimates;
  std::array<std::vector<Interval>, 8> intervals;
  for (const auto& slot : slots) {
    if (!slot) continue;
    ++report.replications_used;
    report.dropped_replicates += slot->dropped;
    for (std::size_t j = 0; j < 8; ++j) {
      estimates[j].push_back(slot->estimates[j]);
      intervals[j].push_back(slot->intervals[j]);
    }
  }
  if (report.replications_used == 0)
    throw AllReplicatesFailed("run_study: every replication failed");

  const std::array<double, 8> truths = study_truths(cfg.gen);
  for (std::size_t j = 0; j < 8; ++j) {
    report.rows[j] = StudyRow{kParamNames[j], truths[j],
                              evaluate_bias(estimates[j], truths[j]),
                              evaluate_coverage(intervals[j], truths[j]),
                              evaluate_power(intervals[j])};
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

struct SensitivityRow {
  std::size_t k = 0;
  double dev_estimate = 0;
  double dev_se = 0;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  std::size_t k_ref = 0;
  double ref_estimate = 0;
  double ref_se = 0;
};

/// Relative deviance of the mediated-effect estimate and its bootstrap SE
/// as the imputation count varies on one fixed dataset (replication 0 of
/// the study seed).  Every run reuses the same analysis key, so only K
/// changes between runs.
inline SensitivityReport imputation_sensitivity(
    const StudyConfig& cfg, std::span<const std::size_t> k_grid,
    std::size_t k_ref, std::size_t workers = 0) {
  if (k_grid.empty())
    throw InvalidArgument("imputation_sensitivity: empty K grid");
  for (const std::size_t k : k_grid)
    if (k < 1) throw InvalidArgument("imputation_sensitivity: K must be >= 1");
  const std::size_t k_max = *std::max_element(k_grid.begin(), k_grid.end());
  if (k_ref < k_max)
    throw InvalidArgument(
        "imputation_sensitivity: k_ref must be at least the largest grid K");

  const Dataset ds = study_replication_dataset(cfg, 0);
  const RngKey key = RngKey{cfg.seed}.child(0).child(2);
  AnalyzeOptions opts;
  opts.workers = workers;

  const BootstrapReport ref =
      analyze(ds, cfg.n_boot, k_ref, cfg.level, key, opts);
  SensitivityReport out;
  out.k_ref = k_ref;
  out.ref_estimate = ref.point.ab;
  out.ref_se = ref.se[kIndexAb];
  if (out.ref_estimate == 0.0 || out.ref_se == 0.0)
    throw UndefinedDeviance("imputation_sensitivity: reference value is zero");

  for (const std::size_t k : k_grid) {
    const BootstrapReport run =
        analyze(ds, cfg.n_boot, k, cfg.level, key, opts);
    out.rows.push_back(SensitivityRow{
        k, (run.point.ab - out.ref_estimate) / out.ref_estimate,
        (run.se[kIndexAb] - out.ref_se) / out.ref_se});
  }
  return out;
}

}  // namespace medboot
