#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include <medboot/errors.hpp>
#include <medboot/imputer.hpp>
#include <medboot/rng.hpp>

using namespace medboot;

namespace {

// Trivariate normal sample with nontrivial cross-correlations.
Dataset trivariate(std::size_t n, RngKey key,
                   std::vector<std::uint8_t> mask = {}) {
  Rng rng(key);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), 3);
  for (std::size_t r = 0; r < n; ++r) {
    const double x = rng.next_normal();
    const double m = 0.6 * x + 0.8 * rng.next_normal();
    const double y = 0.5 * m + 0.3 * x + rng.next_normal();
    values(static_cast<Eigen::Index>(r), 0) = x;
    values(static_cast<Eigen::Index>(r), 1) = m;
    values(static_cast<Eigen::Index>(r), 2) = y;
  }
  if (mask.empty()) mask.assign(n * 3, 0);
  return Dataset({"x", "m", "y"}, {Role::X, Role::M, Role::Y},
                 std::move(values), std::move(mask));
}

}  // namespace

TEST_CASE("cholesky repair leaves positive definite input alone") {
  Eigen::MatrixXd pd(2, 2);
  pd << 4, 1, 1, 3;
  const auto llt = detail::llt_with_repair(pd, 1e-8);
  Eigen::MatrixXd l = llt.matrixL();
  REQUIRE_THAT((l * l.transpose() - pd).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("cholesky repair rescues a marginally indefinite matrix") {
  Eigen::MatrixXd nearly(2, 2);
  nearly << 1.0, 1.0 + 1e-12, 1.0 + 1e-12, 1.0;
  REQUIRE_NOTHROW(detail::llt_with_repair(nearly, 1e-8));
}

TEST_CASE("cholesky repair gives up on a far-from-definite matrix") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  REQUIRE_THROWS_AS(detail::llt_with_repair(bad, 1e-8), NonPositiveDefinite);
}

TEST_CASE("em on complete data returns the sample moments") {
  const Dataset ds = trivariate(500, RngKey{21});
  const EmFit fit = em_mvn(ds);
  REQUIRE(fit.converged);

  const Eigen::MatrixXd& v = ds.values();
  const Eigen::VectorXd mean = v.colwise().mean();
  const Eigen::MatrixXd centered = v.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(ds.n_rows());
  REQUIRE_THAT((fit.params.mu - mean).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
  REQUIRE_THAT((fit.params.sigma - cov).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("em recovers the generator from holed data, likelihood ascending") {
  const std::size_t n = 4000;
  std::vector<std::uint8_t> mask(n * 3, 0);
  for (std::size_t r = 0; r < n; ++r) {
    if (r % 5 == 0) mask[r * 3 + 1] = 1;
    if (r % 5 == 1) mask[r * 3 + 2] = 1;
  }
  const Dataset holed = trivariate(n, RngKey{22}, mask);
  const Dataset full = trivariate(n, RngKey{22});

  const EmFit fit = em_mvn(holed);
  REQUIRE(fit.converged);
  for (std::size_t i = 1; i < fit.loglik.size(); ++i)
    REQUIRE(fit.loglik[i] >=
            fit.loglik[i - 1] -
                1e-8 * std::max(1.0, std::fabs(fit.loglik[i - 1])));

  const EmFit complete_fit = em_mvn(full);
  REQUIRE_THAT((fit.params.mu - complete_fit.params.mu).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 0.08));
  REQUIRE_THAT(
      (fit.params.sigma - complete_fit.params.sigma).cwiseAbs().maxCoeff(),
      Catch::Matchers::WithinAbs(0.0, 0.15));
}

TEST_CASE("em rejects unusable missingness structure") {
  std::vector<std::uint8_t> all_col(12, 0);
  for (std::size_t r = 0; r < 4; ++r) all_col[r * 3 + 1] = 1;
  REQUIRE_THROWS_AS(em_mvn(trivariate(4, RngKey{23}, all_col)),
                    AllMissingColumn);

  std::vector<std::uint8_t> one_obs(12, 0);
  for (std::size_t r = 1; r < 4; ++r) one_obs[r * 3 + 1] = 1;
  REQUIRE_THROWS_AS(em_mvn(trivariate(4, RngKey{23}, one_obs)),
                    InsufficientData);

  std::vector<std::uint8_t> all_row(12, 0);
  all_row[3] = all_row[4] = all_row[5] = 1;
  REQUIRE_THROWS_AS(em_mvn(trivariate(4, RngKey{23}, all_row)),
                    AllMissingRow);
}

TEST_CASE("imputing a complete dataset returns identical copies") {
  const Dataset ds = trivariate(30, RngKey{24});
  ImputationConfig cfg;
  cfg.n_imputations = 4;
  const auto copies_a = impute(ds, cfg, RngKey{1});
  const auto copies_b = impute(ds, cfg, RngKey{999});
  REQUIRE(copies_a.size() == 4);
  for (const auto& c : {copies_a, copies_b})
    for (const Dataset& imp : c) {
      REQUIRE(imp.values() == ds.values());
      REQUIRE(imp.missing_mask() == ds.missing_mask());
    }
}

TEST_CASE("imputation is deterministic, preserves observed cells, varies "
          "masked cells") {
  const std::size_t n = 60;
  std::vector<std::uint8_t> mask(n * 3, 0);
  for (std::size_t r = 0; r < n; r += 6) mask[r * 3 + 1] = 1;
  for (std::size_t r = 3; r < n; r += 6) mask[r * 3 + 2] = 1;
  const Dataset ds = trivariate(n, RngKey{25}, mask);

  ImputationConfig cfg;
  cfg.n_imputations = 6;
  cfg.burn_in = 30;
  cfg.thin = 3;
  const auto imps = impute(ds, cfg, RngKey{77});
  const auto again = impute(ds, cfg, RngKey{77});
  REQUIRE(imps.size() == 6);
  for (std::size_t k = 0; k < imps.size(); ++k)
    REQUIRE(imps[k].values() == again[k].values());

  for (const Dataset& imp : imps) {
    REQUIRE(imp.n_missing() == 0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (!ds.is_missing(r, c))
          REQUIRE(imp.value(r, c) == ds.value(r, c));
  }

  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      if (!ds.is_missing(r, c)) continue;
      bool varies = false;
      for (std::size_t k = 1; k < imps.size(); ++k)
        varies = varies || imps[k].value(r, c) != imps[0].value(r, c);
      REQUIRE(varies);
    }
}

TEST_CASE("imputed draws for one masked cell center on its conditional mean") {
  const std::size_t n = 200;
  std::vector<std::uint8_t> mask(n * 3, 0);
  mask[17 * 3 + 1] = 1;  // a lone missing mediator value
  const Dataset ds = trivariate(n, RngKey{26}, mask);

  const EmFit em = em_mvn(ds);
  // conditional mean of column 1 given columns 0 and 2 in row 17
  const Eigen::VectorXd mu = em.params.mu;
  const Eigen::MatrixXd s = em.params.sigma;
  Eigen::Matrix2d soo;
  soo << s(0, 0), s(0, 2), s(2, 0), s(2, 2);
  Eigen::Vector2d som(s(0, 1), s(2, 1));
  Eigen::Vector2d xo(ds.value(17, 0), ds.value(17, 2));
  Eigen::Vector2d muo(mu(0), mu(2));
  const double cond_mean = mu(1) + som.dot(soo.inverse() * (xo - muo));

  ImputationConfig cfg;
  cfg.n_imputations = 2000;
  cfg.burn_in = 100;
  cfg.thin = 2;
  const auto imps = impute(ds, cfg, RngKey{42});

  std::vector<double> draws;
  draws.reserve(imps.size());
  for (const Dataset& imp : imps) draws.push_back(imp.value(17, 1));

  // batch means absorb the chain autocorrelation
  const std::size_t n_batches = 40;
  const std::size_t batch = draws.size() / n_batches;
  std::vector<double> batch_means;
  for (std::size_t i = 0; i < n_batches; ++i) {
    double s_batch = 0;
    for (std::size_t j = 0; j < batch; ++j) s_batch += draws[i * batch + j];
    batch_means.push_back(s_batch / static_cast<double>(batch));
  }
  double grand = 0;
  for (const double b : batch_means) grand += b;
  grand /= static_cast<double>(n_batches);
  double var_b = 0;
  for (const double b : batch_means) var_b += (b - grand) * (b - grand);
  var_b /= static_cast<double>(n_batches - 1);
  const double se = std::sqrt(var_b / static_cast<double>(n_batches));
  REQUIRE(std::fabs(grand - cond_mean) <= 4.0 * se);
}

TEST_CASE("imputer validates its configuration and data size") {
  const std::size_t n = 4;
  std::vector<std::uint8_t> mask(n * 3, 0);
  mask[1 * 3 + 1] = 1;
  const Dataset tiny = trivariate(n, RngKey{27}, mask);

  ImputationConfig cfg;
  REQUIRE_THROWS_AS(impute(tiny, cfg, RngKey{1}), InsufficientData);

  const Dataset ok = trivariate(20, RngKey{27});
  ImputationConfig bad = cfg;
  bad.n_imputations = 0;
  REQUIRE_THROWS_AS(impute(ok, bad, RngKey{1}), InvalidArgument);
  bad = cfg;
  bad.thin = 0;
  REQUIRE_THROWS_AS(impute(ok, bad, RngKey{1}), InvalidArgument);
  bad = cfg;
  bad.em_tol = 0.0;
  REQUIRE_THROWS_AS(impute(ok, bad, RngKey{1}), InvalidArgument);
  bad = cfg;
  bad.ridge_rel = -1.0;
  REQUIRE_THROWS_AS(impute(ok, bad, RngKey{1}), InvalidArgument);
}
