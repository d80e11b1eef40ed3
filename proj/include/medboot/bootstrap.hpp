#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "medboot/dataset.hpp"
#include "medboot/errors.hpp"
#include "medboot/estimator.hpp"
#include "medboot/imputer.hpp"
#include "medboot/math.hpp"
#include "medboot/parallel.hpp"
#include "medboot/rng.hpp"

namespace medboot {

struct Interval {
  double lo = 0;
  double hi = 0;
  bool operator==(const Interval&) const = default;
};

/// Everything analyze produces: the pooled point estimate on the original
/// data, the per-replicate pooled estimates (successful replicates only, in
/// replicate order, columns in kParamNames order), and per-parameter
/// bootstrap SEs and bias-corrected intervals.
struct BootstrapReport {
  ThetaVector point;
  std::vector<std::array<double, 8>> replicate_estimates;
  std::array<double, 8> se{};
  std::array<Interval, 8> intervals{};
  double level = 0.95;
  std::size_t b_requested = 0;
  std::size_t b_effective = 0;
};

/// Uniform with-replacement row resample of the same size; masks travel with
/// their rows.
inline Dataset bootstrap_resample(const Dataset& ds, RngKey seed) {
  const std::size_t n = ds.n_rows();
  if (n == 0) throw EmptyInput("bootstrap_resample: empty dataset");
  Rng rng(seed);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.next_below(n));
  return ds.resampled(rows);
}

/// Sample standard deviation with denominator B-1.
inline double bootstrap_se(std::span<const double> estimates) {
  const std::size_t b = estimates.size();
  if (b < 2) throw TooFewReplicates("bootstrap_se: need at least 2 replicates");
  const double mean = anchored_mean(estimates);
  double ss = 0.0;
  for (const double e : estimates) ss += (e - mean) * (e - mean);
  return std::sqrt(ss / static_cast<double>(b - 1));
}

/// Bias-corrected percentile interval.  The bias correction z0 comes from
/// the fraction of replicates strictly below the point estimate (clamped
/// away from 0 and 1); the adjusted percentile points pick 1-based order
/// statistics by the truncated-index rule lo = int(alpha * (B + 1)).
inline Interval bc_interval(std::span<const double> estimates, double point,
                            double level) {
  const std::size_t b = estimates.size();
  if (b < 2) throw TooFewReplicates("bc_interval: need at least 2 replicates");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidLevel("bc_interval: level must lie in (0,1)");

  std::size_t below = 0;
  for (const double e : estimates) below += e < point;
  const double db = static_cast<double>(b);
  double p = static_cast<double>(below) / db;
  p = std::clamp(p, 1.0 / (2.0 * db), 1.0 - 1.0 / (2.0 * db));
  const double z0 = normal_quantile(p);

  const double alpha = (1.0 - level) / 2.0;
  const double a_lo = normal_cdf(2.0 * z0 + normal_quantile(alpha));
  const double a_hi = normal_cdf(2.0 * z0 + normal_quantile(1.0 - alpha));

  std::vector<double> sorted(estimates.begin(), estimates.end());
  std::stable_sort(sorted.begin(), sorted.end());
  auto pick = [&](double q) {
    long long idx = static_cast<long long>(q * (db + 1.0));
    idx = std::clamp<long long>(idx, 1, static_cast<long long>(b));
    return sorted[static_cast<std::size_t>(idx - 1)];
  };
  return Interval{pick(a_lo), pick(a_hi)};
}

struct AnalyzeOptions {
  ImputationConfig chain;       // n_imputations inside is overridden
  std::size_t workers = 0;      // 0 = all hardware threads
  std::size_t max_retries = 100;
};

/// Point estimate via multiple imputation on the original data, then B
/// bootstrap replicates each running its own imputation chain; SEs and BC
/// intervals per parameter from the replicate estimates.  Output depends
/// only on (ds, n_boot, n_imputations, level, seed), never on worker count.
inline BootstrapReport analyze(const Dataset& ds, std::size_t n_boot,
                               std::size_t n_imputations, double level,
                               RngKey seed, const AnalyzeOptions& opts = {}) {
  if (n_boot < 2)
    throw TooFewReplicates("analyze: need at least 2 bootstrap replicates");
  if (n_imputations < 1)
    throw InvalidArgument("analyze: need at least 1 imputation");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidLevel("analyze: level must lie in (0,1)");

  ImputationConfig cfg = opts.chain;
  cfg.n_imputations = n_imputations;

  auto pooled_fit = [&](const Dataset& d, RngKey key) {
    const std::vector<Dataset> filled = impute(d, cfg, key);
    std::vector<ThetaVector> fits;
    fits.reserve(filled.size());
    for (const Dataset& f : filled) fits.push_back(fit_complete(f));
    return pool_point_estimates(fits);
  };

  BootstrapReport report;
  report.level = level;
  report.b_requested = n_boot;
  report.point = pooled_fit(ds, seed.child(0));

  std::vector<std::optional<std::array<double, 8>>> slots(n_boot);
  parallel_for(n_boot, opts.workers, [&](std::size_t b) {
    const RngKey rep_key = seed.child(b + 1);
    for (std::size_t attempt = 0; attempt <= opts.max_retries; ++attempt) {
      const RngKey try_key = rep_key.child(attempt);
      try {
        const Dataset sample = bootstrap_resample(ds, try_key.child(0));
        slots[b] = pooled_fit(sample, try_key.child(1)).report_values();
        return;
      } catch (const Error&) {
        // singular resample or diverged chain; retry on a fresh substream
      }
    }
  });

  for (const auto& s : slots)
    if (s) report.replicate_estimates.push_back(*s);
  report.b_effective = report.replicate_estimates.size();
  if (report.b_effective == 0)
    throw AllReplicatesFailed("analyze: every bootstrap replicate failed");

  const std::array<double, 8> point_vals = report.point.report_values();
  std::vector<double> column(report.b_effective);
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t i = 0; i < report.b_effective; ++i)
      column[i] = report.replicate_estimates[i][j];
    report.se[j] = bootstrap_se(column);
    report.intervals[j] = bc_interval(column, point_vals[j], level);
  }
  return report;
}

}  // namespace medboot
