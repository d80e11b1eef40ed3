#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <medboot/errors.hpp>
#include <medboot/math.hpp>
#include <medboot/parallel.hpp>
#include <medboot/rng.hpp>

using namespace medboot;

namespace {

// Reference values computed with 40-digit arithmetic.
struct QuantileCase {
  double p;
  double q;
};
constexpr QuantileCase kQuantileTable[] = {
    {1e-12, -7.03448382530113192981},
    {1e-10, -6.3613409024040562047},
    {0.001, -3.09023230616781354154},
    {0.025, -1.95996398454005423552},
    {0.3, -0.524400512708040784038},
    {0.5, 0.0},
    {0.7, 0.524400512708040784038},
    {0.975, 1.95996398454005423552},
    {0.999, 3.09023230616781354154},
};

struct CdfCase {
  double x;
  double phi;
};
constexpr CdfCase kCdfTable[] = {
    {-1.959963984540054, 0.0250000000000000137653},
    {1.2815515655446004, 0.899999999999999988248},
    {-6.0, 9.86587645037698140701e-10},
    {0.0, 0.5},
    {1.0, 0.841344746068542948585},
};

}  // namespace

TEST_CASE("normal quantile matches the reference table") {
  for (const auto& c : kQuantileTable) {
    CAPTURE(c.p);
    REQUIRE_THAT(normal_quantile(c.p),
                 Catch::Matchers::WithinAbs(c.q, 1e-12));
  }
  // 1.0 - 1e-10 rounds before the call; the 1/phi(q) derivative stretches
  // that half-ulp input error to about 1.3e-8 in the result
  REQUIRE_THAT(normal_quantile(1.0 - 1e-10),
               Catch::Matchers::WithinAbs(6.3613409024040562047, 5e-8));
}

TEST_CASE("normal quantile rejects boundary and out-of-range probabilities") {
  REQUIRE_THROWS_AS(normal_quantile(0.0), InvalidArgument);
  REQUIRE_THROWS_AS(normal_quantile(1.0), InvalidArgument);
  REQUIRE_THROWS_AS(normal_quantile(-0.5), InvalidArgument);
  REQUIRE_THROWS_AS(normal_quantile(1.5), InvalidArgument);
}

TEST_CASE("normal cdf matches the reference table and is symmetric") {
  for (const auto& c : kCdfTable) {
    CAPTURE(c.x);
    REQUIRE_THAT(normal_cdf(c.x),
                 Catch::Matchers::WithinRel(c.phi, 1e-14));
  }
  for (double x : {-3.7, -1.1, 0.4, 2.9})
    REQUIRE_THAT(normal_cdf(x) + normal_cdf(-x),
                 Catch::Matchers::WithinAbs(1.0, 1e-15));
}

TEST_CASE("quantile inverts cdf") {
  for (double x = -4.0; x <= 4.0; x += 0.25)
    REQUIRE_THAT(normal_quantile(normal_cdf(x)),
                 Catch::Matchers::WithinAbs(x, 1e-11));
  REQUIRE_THAT(normal_quantile(normal_cdf(-6.0)),
               Catch::Matchers::WithinAbs(-6.0, 1e-7));
  REQUIRE_THAT(normal_quantile(normal_cdf(6.0)),
               Catch::Matchers::WithinAbs(6.0, 1e-7));
}

TEST_CASE("anchored mean is exact on constant input") {
  const std::vector<double> constant(1000, 0.1521);
  REQUIRE(anchored_mean(constant) == 0.1521);
  const std::vector<double> vals = {1.0, 2.0, 6.0};
  REQUIRE_THAT(anchored_mean(vals), Catch::Matchers::WithinAbs(3.0, 1e-15));
  REQUIRE_THROWS_AS(anchored_mean(std::vector<double>{}), EmptyInput);
}

TEST_CASE("rng keys split deterministically") {
  const RngKey root{42};
  REQUIRE(root.child(0).v == root.child(0).v);
  REQUIRE(root.child(0).v != root.child(1).v);
  REQUIRE(root.child(7).v != RngKey{43}.child(7).v);

  std::vector<std::uint64_t> keys;
  for (std::uint64_t i = 0; i < 1000; ++i) keys.push_back(root.child(i).v);
  std::sort(keys.begin(), keys.end());
  REQUIRE(std::adjacent_find(keys.begin(), keys.end()) == keys.end());
}

TEST_CASE("rng streams are reproducible and key-dependent") {
  Rng a(RngKey{7});
  Rng b(RngKey{7});
  Rng c(RngKey{8});
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t ua = a.next_u64();
    REQUIRE(ua == b.next_u64());
    differs = differs || ua != c.next_u64();
  }
  REQUIRE(differs);
}

TEST_CASE("uniform draws stay in range with the right mean") {
  Rng rng(RngKey{11});
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE_THAT(sum / n, Catch::Matchers::WithinAbs(0.5, 0.004));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.next_open01();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("bounded draws are uniform over residues") {
  Rng rng(RngKey{12});
  const int n = 100000;
  std::vector<int> freq(5, 0);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t v = rng.next_below(5);
    REQUIRE(v < 5);
    ++freq[static_cast<std::size_t>(v)];
  }
  for (const int f : freq)
    REQUIRE_THAT(static_cast<double>(f) / n,
                 Catch::Matchers::WithinAbs(0.2, 0.006));
}

TEST_CASE("normal draws have standard moments") {
  Rng rng(RngKey{13});
  const int n = 200000;
  double sum = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    sum += z;
    ss += z * z;
  }
  const double mean = sum / n;
  const double var = ss / n - mean * mean;
  REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 0.01));
  REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.02));
}

TEST_CASE("gamma and chi-square draws have the right moments") {
  Rng rng(RngKey{14});
  const int n = 200000;
  double sum3 = 0, ss3 = 0, sum_half = 0, sum_chi = 0;
  for (int i = 0; i < n; ++i) {
    const double g3 = rng.next_gamma(3.0);
    REQUIRE(g3 > 0.0);
    sum3 += g3;
    ss3 += g3 * g3;
    sum_half += rng.next_gamma(0.5);
    sum_chi += rng.next_chisq(5.0);
  }
  const double mean3 = sum3 / n;
  REQUIRE_THAT(mean3, Catch::Matchers::WithinAbs(3.0, 0.02));
  REQUIRE_THAT(ss3 / n - mean3 * mean3, Catch::Matchers::WithinAbs(3.0, 0.1));
  REQUIRE_THAT(sum_half / n, Catch::Matchers::WithinAbs(0.5, 0.01));
  REQUIRE_THAT(sum_chi / n, Catch::Matchers::WithinAbs(5.0, 0.04));
}

TEST_CASE("parallel_for covers every index exactly once") {
  const std::size_t count = 20000;
  std::vector<std::atomic<int>> hits(count);
  for (auto& h : hits) h.store(0);
  parallel_for(count, 4, [&](std::size_t i) { hits[i].fetch_add(1); });
  for (const auto& h : hits) REQUIRE(h.load() == 1);

  std::vector<int> serial(100, 0);
  parallel_for(100, 1, [&](std::size_t i) { serial[i] = static_cast<int>(i); });
  for (int i = 0; i < 100; ++i) REQUIRE(serial[i] == i);

  parallel_for(0, 4, [&](std::size_t) { FAIL("body must not run"); });
}

TEST_CASE("parallel_for rethrows the first worker exception") {
  REQUIRE_THROWS_AS(
      parallel_for(1000, 4,
                   [](std::size_t i) {
                     if (i == 137) throw std::runtime_error("boom");
                   }),
      std::runtime_error);
}
