#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "medboot/dataset.hpp"
#include "medboot/errors.hpp"
#include "medboot/rng.hpp"

namespace medboot {

/// Mean and covariance of the joint normal model over the bound columns.
struct MvnParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

struct ImputationConfig {
  std::size_t n_imputations = 20;
  std::size_t em_max_iter = 500;
  double em_tol = 1e-8;
  std::size_t burn_in = 200;
  std::size_t thin = 100;
  double ridge_rel = 1e-8;
};

struct EmFit {
  MvnParams params;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> loglik;  // observed-data log-likelihood at each iterate
};

namespace detail {

/// Cholesky with an escalating diagonal ridge: the first ridge is
/// ridge_rel * trace/d, each retry multiplies it by 10, and the fourth
/// failure is fatal.
inline void llt_repaired(Eigen::LLT<Eigen::MatrixXd>& llt,
                         const Eigen::MatrixXd& m, double ridge_rel) {
  llt.compute(m);
  if (llt.info() == Eigen::Success) return;
  double lambda = ridge_rel * m.trace() / static_cast<double>(m.cols());
  if (!(lambda > 0.0)) lambda = ridge_rel > 0.0 ? ridge_rel : 1e-12;
  Eigen::MatrixXd repaired(m.rows(), m.cols());
  for (int attempt = 0; attempt < 4; ++attempt, lambda *= 10.0) {
    repaired = m;
    repaired.diagonal().array() += lambda;
    llt.compute(repaired);
    if (llt.info() == Eigen::Success) return;
  }
  throw NonPositiveDefinite("matrix not positive definite after ridge repair");
}

inline Eigen::LLT<Eigen::MatrixXd> llt_with_repair(const Eigen::MatrixXd& m,
                                                   double ridge_rel) {
  Eigen::LLT<Eigen::MatrixXd> llt;
  llt_repaired(llt, m, ridge_rel);
  return llt;
}

/// Rows sharing one missingness pattern over the bound columns, with the
/// group's observed-part raw moments precomputed so EM iterations cost
/// O(groups), not O(rows).
struct PatternGroup {
  std::vector<int> rows;
  std::vector<int> obs;
  std::vector<int> mis;
  Eigen::VectorXd sum_obs;  // sum of x_obs over the group's rows
  Eigen::MatrixXd ss_obs;   // sum of x_obs x_obs^T
};

/// Values of the bound columns as a dense matrix; masked cells read as 0.
inline Eigen::MatrixXd bound_matrix(const Dataset& ds,
                                    const std::vector<std::size_t>& cols) {
  const std::size_t n = ds.n_rows();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < cols.size(); ++j)
      z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          ds.is_missing(r, cols[j]) ? 0.0 : ds.value(r, cols[j]);
  return z;
}

inline void check_missing_structure(const Dataset& ds,
                                    const std::vector<std::size_t>& cols) {
  const std::size_t n = ds.n_rows();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    std::size_t observed = 0;
    for (std::size_t r = 0; r < n; ++r) observed += !ds.is_missing(r, cols[j]);
    if (observed == 0)
      throw AllMissingColumn("column '" + ds.names()[cols[j]] +
                             "' has no observed values");
    if (observed < 2)
      throw InsufficientData("column '" + ds.names()[cols[j]] +
                             "' observed in fewer than 2 rows");
  }
  for (std::size_t r = 0; r < n; ++r) {
    bool any = false;
    for (const std::size_t c : cols) any = any || !ds.is_missing(r, c);
    if (!any)
      throw AllMissingRow("row " + std::to_string(r) +
                          " has no observed model values");
  }
}

inline std::vector<PatternGroup> pattern_groups(
    const Dataset& ds, const std::vector<std::size_t>& cols,
    const Eigen::MatrixXd& z) {
  std::vector<PatternGroup> groups;
  for (const MissingPattern& p : missing_patterns(ds, cols)) {
    PatternGroup g;
    for (const std::size_t r : p.rows) g.rows.push_back(static_cast<int>(r));
    for (std::size_t j = 0; j < p.missing.size(); ++j)
      (p.missing[j] ? g.mis : g.obs).push_back(static_cast<int>(j));
    const int no = static_cast<int>(g.obs.size());
    g.sum_obs = Eigen::VectorXd::Zero(no);
    g.ss_obs = Eigen::MatrixXd::Zero(no, no);
    Eigen::VectorXd xo(no);
    for (const int r : g.rows) {
      for (int i = 0; i < no; ++i) xo(i) = z(r, g.obs[i]);
      g.sum_obs += xo;
      g.ss_obs.noalias() += xo * xo.transpose();
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

inline void gather(const Eigen::VectorXd& v, const std::vector<int>& idx,
                   Eigen::VectorXd& out) {
  out.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(i) = v(idx[i]);
}

inline void gather(const Eigen::MatrixXd& m, const std::vector<int>& ri,
                   const std::vector<int>& ci, Eigen::MatrixXd& out) {
  out.resize(static_cast<Eigen::Index>(ri.size()),
             static_cast<Eigen::Index>(ci.size()));
  for (std::size_t i = 0; i < ri.size(); ++i)
    for (std::size_t j = 0; j < ci.size(); ++j) out(i, j) = m(ri[i], ci[j]);
}

}  // namespace detail

/// ML fit of a multivariate normal to the bound columns of an incomplete
/// dataset (covariance with denominator n).  Each iteration takes the
/// conditional expectation of the complete-data sufficient statistics given
/// the observed cells and re-solves the moment equations.
inline EmFit em_mvn(const Dataset& ds, std::size_t max_iter = 500,
                    double tol = 1e-8, double ridge_rel = 1e-8) {
  const std::vector<std::size_t> cols = ds.bound_columns();
  detail::check_missing_structure(ds, cols);
  const std::size_t n = ds.n_rows();
  const int d = static_cast<int>(cols.size());
  const Eigen::MatrixXd z = detail::bound_matrix(ds, cols);
  const std::vector<detail::PatternGroup> groups =
      detail::pattern_groups(ds, cols, z);

  Eigen::VectorXd mu(d);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    double s = 0, ss = 0;
    std::size_t cnt = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (ds.is_missing(r, cols[j])) continue;
      const double v = z(static_cast<Eigen::Index>(r), j);
      s += v;
      ss += v * v;
      ++cnt;
    }
    mu(j) = s / static_cast<double>(cnt);
    sigma(j, j) =
        std::max(ss / static_cast<double>(cnt) - mu(j) * mu(j), 1e-12);
  }

  EmFit fit;
  fit.loglik.reserve(std::min<std::size_t>(max_iter, 1024));
  Eigen::VectorXd mu_o, mu_m, alpha, t1(d), em_sum;
  Eigen::MatrixXd sigma_oo, sigma_om, sigma_mm, cmat, vcond, scatter, t2(d, d);
  Eigen::LLT<Eigen::MatrixXd> llt;
  const double log2pi = std::log(2.0 * 3.14159265358979323846);

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    t1.setZero();
    t2.setZero();
    double ll = 0.0;
    for (const auto& g : groups) {
      const double ng = static_cast<double>(g.rows.size());
      detail::gather(mu, g.obs, mu_o);
      detail::gather(sigma, g.obs, g.obs, sigma_oo);
      detail::llt_repaired(llt, sigma_oo, ridge_rel);

      double logdet = 0.0;
      const auto& lmat = llt.matrixLLT();
      for (Eigen::Index i = 0; i < lmat.rows(); ++i)
        logdet += 2.0 * std::log(lmat(i, i));
      scatter = g.ss_obs;
      scatter.noalias() -= g.sum_obs * mu_o.transpose();
      scatter.noalias() -= mu_o * g.sum_obs.transpose();
      scatter.noalias() += ng * mu_o * mu_o.transpose();
      const double quad = llt.solve(scatter).trace();
      ll -= 0.5 * (ng * (static_cast<double>(g.obs.size()) * log2pi + logdet) +
                   quad);

      for (std::size_t i = 0; i < g.obs.size(); ++i) {
        t1(g.obs[i]) += g.sum_obs(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < g.obs.size(); ++j)
          t2(g.obs[i], g.obs[j]) +=
              g.ss_obs(static_cast<Eigen::Index>(i),
                       static_cast<Eigen::Index>(j));
      }
      if (g.mis.empty()) continue;

      detail::gather(mu, g.mis, mu_m);
      detail::gather(sigma, g.obs, g.mis, sigma_om);
      detail::gather(sigma, g.mis, g.mis, sigma_mm);
      cmat = llt.solve(sigma_om);
      alpha = mu_m;
      alpha.noalias() -= cmat.transpose() * mu_o;
      vcond = sigma_mm;
      vcond.noalias() -= sigma_om.transpose() * cmat;

      em_sum = ng * alpha;
      em_sum.noalias() += cmat.transpose() * g.sum_obs;
      Eigen::MatrixXd emo = alpha * g.sum_obs.transpose();
      emo.noalias() += cmat.transpose() * g.ss_obs;
      Eigen::VectorXd cs = cmat.transpose() * g.sum_obs;
      Eigen::MatrixXd emm = ng * (alpha * alpha.transpose() + vcond);
      emm.noalias() += alpha * cs.transpose();
      emm.noalias() += cs * alpha.transpose();
      emm.noalias() += cmat.transpose() * g.ss_obs * cmat;

      for (std::size_t i = 0; i < g.mis.size(); ++i) {
        t1(g.mis[i]) += em_sum(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < g.obs.size(); ++j) {
          const double v = emo(static_cast<Eigen::Index>(i),
                               static_cast<Eigen::Index>(j));
          t2(g.mis[i], g.obs[j]) += v;
          t2(g.obs[j], g.mis[i]) += v;
        }
        for (std::size_t j = 0; j < g.mis.size(); ++j)
          t2(g.mis[i], g.mis[j]) += emm(static_cast<Eigen::Index>(i),
                                        static_cast<Eigen::Index>(j));
      }
    }
    fit.loglik.push_back(ll);

    const double dn = static_cast<double>(n);
    Eigen::VectorXd mu_new = t1 / dn;
    Eigen::MatrixXd sigma_new = t2 / dn;
    sigma_new.noalias() -= mu_new * mu_new.transpose();
    sigma_new = 0.5 * (sigma_new + sigma_new.transpose()).eval();

    const double delta =
        std::max((mu_new - mu).cwiseAbs().maxCoeff(),
                 (sigma_new - sigma).cwiseAbs().maxCoeff());
    mu = std::move(mu_new);
    sigma = std::move(sigma_new);
    ++fit.iterations;
    if (delta < tol) {
      fit.converged = true;
      break;
    }
  }
  fit.params = MvnParams{std::move(mu), std::move(sigma)};
  return fit;
}

/// Draws K completed copies of the dataset from a single data-augmentation
/// chain started at the EM solution: each iteration redraws the missing
/// cells from their conditional normal (I-step), then redraws (mu, sigma)
/// from the Jeffreys posterior given the completed data (P-step).  One copy
/// is emitted every `thin` iterations after `burn_in` iterations.
inline std::vector<Dataset> impute(const Dataset& ds,
                                   const ImputationConfig& cfg, RngKey seed) {
  if (cfg.n_imputations < 1)
    throw InvalidArgument("impute: n_imputations must be at least 1");
  if (cfg.thin < 1) throw InvalidArgument("impute: thin must be at least 1");
  if (!(cfg.em_tol > 0.0))
    throw InvalidArgument("impute: em_tol must be positive");
  if (cfg.ridge_rel < 0.0)
    throw InvalidArgument("impute: ridge_rel must be nonnegative");

  const std::vector<std::size_t> cols = ds.bound_columns();
  const std::size_t n = ds.n_rows();
  bool any_missing = false;
  for (std::size_t r = 0; r < n && !any_missing; ++r)
    for (const std::size_t c : cols)
      if (ds.is_missing(r, c)) {
        any_missing = true;
        break;
      }
  if (!any_missing)
    return std::vector<Dataset>(cfg.n_imputations, ds);

  const int d = static_cast<int>(cols.size());
  if (n < static_cast<std::size_t>(d) + 2)
    throw InsufficientData("impute: need at least " + std::to_string(d + 2) +
                           " rows for " + std::to_string(d) +
                           " model variables");

  const EmFit em = em_mvn(ds, cfg.em_max_iter, cfg.em_tol, cfg.ridge_rel);
  Eigen::MatrixXd w = detail::bound_matrix(ds, cols);
  const std::vector<detail::PatternGroup> groups =
      detail::pattern_groups(ds, cols, w);

  // The complete-pattern rows never change, so their share of the completed
  // sum and raw scatter is fixed.
  Eigen::VectorXd sum_fixed = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd ss_fixed = Eigen::MatrixXd::Zero(d, d);
  std::vector<const detail::PatternGroup*> incomplete;
  std::vector<int> varying_rows;
  for (const auto& g : groups) {
    if (g.mis.empty()) {
      for (std::size_t i = 0; i < g.obs.size(); ++i) {
        sum_fixed(g.obs[i]) += g.sum_obs(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < g.obs.size(); ++j)
          ss_fixed(g.obs[i], g.obs[j]) +=
              g.ss_obs(static_cast<Eigen::Index>(i),
                       static_cast<Eigen::Index>(j));
      }
    } else {
      incomplete.push_back(&g);
      varying_rows.insert(varying_rows.end(), g.rows.begin(), g.rows.end());
    }
  }

  Rng rng(seed);
  Eigen::VectorXd mu = em.params.mu;
  Eigen::MatrixXd sigma = em.params.sigma;
  const double nu = static_cast<double>(n) - 1.0;
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  Eigen::VectorXd mu_o, mu_m, mean_m, xo, zvec(d), row(d);
  Eigen::MatrixXd sigma_oo, sigma_om, sigma_mm, cmat, vcond, lv;
  Eigen::MatrixXd scatter(d, d), amat(d, d), tmat(d, d), ls(d, d);
  Eigen::VectorXd xbar(d);
  Eigen::LLT<Eigen::MatrixXd> llt, llt_v;

  auto i_step = [&] {
    for (const auto* gp : incomplete) {
      const auto& g = *gp;
      detail::gather(mu, g.obs, mu_o);
      detail::gather(mu, g.mis, mu_m);
      detail::gather(sigma, g.obs, g.obs, sigma_oo);
      detail::gather(sigma, g.obs, g.mis, sigma_om);
      detail::gather(sigma, g.mis, g.mis, sigma_mm);
      detail::llt_repaired(llt, sigma_oo, cfg.ridge_rel);
      cmat = llt.solve(sigma_om);
      vcond = sigma_mm;
      vcond.noalias() -= sigma_om.transpose() * cmat;
      vcond = 0.5 * (vcond + vcond.transpose()).eval();
      detail::llt_repaired(llt_v, vcond, cfg.ridge_rel);
      lv = llt_v.matrixL();
      const Eigen::Index nm = static_cast<Eigen::Index>(g.mis.size());
      xo.resize(static_cast<Eigen::Index>(g.obs.size()));
      for (const int r : g.rows) {
        for (std::size_t i = 0; i < g.obs.size(); ++i) xo(i) = w(r, g.obs[i]);
        mean_m = mu_m;
        mean_m.noalias() += cmat.transpose() * (xo - mu_o);
        for (Eigen::Index i = 0; i < nm; ++i) zvec(i) = rng.next_normal();
        mean_m.noalias() += lv * zvec.head(nm);
        for (std::size_t i = 0; i < g.mis.size(); ++i)
          w(r, g.mis[i]) = mean_m(static_cast<Eigen::Index>(i));
      }
    }
  };

  auto p_step = [&] {
    xbar = sum_fixed;
    scatter = ss_fixed;
    for (const int r : varying_rows) {
      row = w.row(r);
      xbar += row;
      scatter.noalias() += row * row.transpose();
    }
    xbar /= static_cast<double>(n);
    scatter.noalias() -= static_cast<double>(n) * xbar * xbar.transpose();
    scatter = 0.5 * (scatter + scatter.transpose()).eval();
    detail::llt_repaired(llt, scatter, cfg.ridge_rel);
    ls = llt.matrixL();

    amat.setZero();
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < i; ++j) amat(i, j) = rng.next_normal();
      amat(i, i) = std::sqrt(rng.next_chisq(nu - static_cast<double>(i)));
    }
    tmat = amat.triangularView<Eigen::Lower>().solve(ls.transpose());
    sigma.noalias() = tmat.transpose() * tmat;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    for (int i = 0; i < d; ++i) zvec(i) = rng.next_normal();
    mu = xbar;
    mu.noalias() += tmat.transpose() * zvec / sqrt_n;
  };

  std::vector<Dataset> out;
  out.reserve(cfg.n_imputations);
  try {
    for (std::size_t k = 0; k < cfg.burn_in; ++k) {
      i_step();
      p_step();
    }
    for (std::size_t m = 0; m < cfg.n_imputations; ++m) {
      for (std::size_t k = 0; k < cfg.thin; ++k) {
        i_step();
        p_step();
      }
      out.push_back(ds.with_bound_values(cols, w));
    }
  } catch (const NonPositiveDefinite& e) {
    throw ChainDivergence(std::string("imputation chain: ") + e.what());
  }
  return out;
}

}  // namespace medboot
