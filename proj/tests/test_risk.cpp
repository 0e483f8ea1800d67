#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "oracles.hpp"
#include "shmpc/risk.hpp"

using namespace shmpc;

TEST_CASE("epsilon_of_n frozen anchor values") {
  // Anchors frozen from a 256-bit evaluation of the closed form.
  CHECK(epsilon_of_n(9, 1237, 0.01) == doctest::Approx(0.0499926129984907).epsilon(1e-10));
  CHECK(epsilon_of_n(9, 1236, 0.01) == doctest::Approx(0.0500260403757186).epsilon(1e-10));
  CHECK(epsilon_of_n(0, 1, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(epsilon_of_n(0, 1237, 0.01) == doctest::Approx(0.0094342892122372).epsilon(1e-10));
  CHECK(epsilon_of_n(5, 5, 0.1) == 1.0);  // n == S branch
}

TEST_CASE("epsilon_of_n input validation") {
  CHECK_THROWS_AS(epsilon_of_n(-1, 10, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_of_n(11, 10, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_of_n(1, 0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_of_n(1, 10, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(epsilon_of_n(1, 10, 1.0), std::invalid_argument);
}

#if SHMPC_HAVE_MPFR
TEST_CASE("epsilon_of_n agrees with 256-bit oracle") {
  // Deterministic sweep over a wide (S, n, beta) range.
  uint64_t s = 12345;
  auto next = [&s]() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 11;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const int S = 1 + int(next() % 100000);
    const int n = int(next() % uint64_t(std::min(S, 51)));
    const double beta = std::pow(10.0, -1.0 - double(next() % 800) / 100.0);
    const double got = epsilon_of_n(n, S, beta);
    const double want = oracles::epsilon_of_n_mpfr(n, S, beta);
    INFO("S=", S, " n=", n, " beta=", beta);
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
  }
}
#endif

TEST_CASE("risk allocation identity") {
  // sum_{n=0}^{S-1} C(S,n) (1-eps(n))^(S-n) == (nbar+1) beta / S, with
  // eps(n) = 1 for nbar < n < S killing the upper terms.
  uint64_t s = 777;
  auto next = [&s]() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 11;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const int S = 50 + int(next() % 9951);
    const int nbar = int(next() % 31);
    const double beta = std::pow(10.0, -1.0 - double(next() % 600) / 100.0);
    double sum = 0.0;
    for (int n = 0; n <= nbar; ++n) {
      const double eps = epsilon_of_n(n, S, beta);
      sum += std::exp(log_binomial(S, n) + double(S - n) * std::log1p(-eps));
    }
    const double expected = double(nbar + 1) * beta / double(S);
    INFO("S=", S, " nbar=", nbar, " beta=", beta);
    CHECK(sum == doctest::Approx(expected).epsilon(1e-10));
    CHECK(sum <= beta * (1.0 + 1e-12));
  }
}

TEST_CASE("epsilon_of_n monotonicity in n and S") {
  // More support -> more risk; more samples -> less risk.
  for (int n = 0; n < 20; ++n)
    CHECK(epsilon_of_n(n, 1237, 0.01) < epsilon_of_n(n + 1, 1237, 0.01));
  for (int S = 100; S < 130; ++S)
    CHECK(epsilon_of_n(5, S + 1, 0.01) < epsilon_of_n(5, S, 0.01));
}

TEST_CASE("compute_sample_size anchors") {
  CHECK(compute_sample_size(0.05, 0.01, 9) == 1237);
  CHECK(compute_sample_size(0.1, 1e-6, 2) == 288);
  CHECK(compute_sample_size(0.1, 1e-6, 4) == 388);
  CHECK(compute_sample_size(0.999999, 0.5, 0) == 1);
}

TEST_CASE("compute_sample_size minimality and cap") {
  uint64_t s = 4242;
  auto next = [&s]() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 11;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const double eps = 0.01 + double(next() % 400) / 1000.0;
    const double beta = std::pow(10.0, -1.0 - double(next() % 500) / 100.0);
    const int nbar = int(next() % 15);
    const int S = compute_sample_size(eps, beta, nbar);
    CHECK(epsilon_of_n(nbar, S, beta) <= eps);
    if (S - 1 > nbar) CHECK(epsilon_of_n(nbar, S - 1, beta) > eps);
  }
  CHECK_THROWS_AS(compute_sample_size(1e-9, 1e-6, 5, 1000), std::runtime_error);
}

TEST_CASE("epsilon_table shape and consistency") {
  const auto t = epsilon_table(1237, 0.01, 9);
  REQUIRE(t.size() == 10);
  for (int n = 0; n <= 9; ++n)
    CHECK(t[size_t(n)] == epsilon_of_n(n, 1237, 0.01));
  CHECK(t.back() <= 0.05);
  CHECK_THROWS_AS(epsilon_table(5, 0.01, 5), std::invalid_argument);
}

TEST_CASE("certify") {
  RiskConfig cfg;
  cfg.epsilon = 0.05;
  cfg.beta = 0.01;
  cfg.support_limit = 9;
  cfg.removal_budget = 1;

  const auto ok = certify(7, 1237, cfg);
  CHECK(ok.certified);
  CHECK(ok.epsilon_bound == doctest::Approx(epsilon_of_n(7, 1237, 0.01)));
  CHECK(ok.epsilon_bound <= cfg.epsilon);

  const auto at_limit = certify(9, 1237, cfg);
  CHECK(at_limit.certified);
  CHECK(at_limit.epsilon_bound <= cfg.epsilon);

  const auto over = certify(10, 1237, cfg);
  CHECK_FALSE(over.certified);
  CHECK(over.epsilon_bound == 1.0);

  RiskConfig bad = cfg;
  bad.removal_budget = 10;  // > support_limit
  CHECK_THROWS_AS(certify(1, 1237, bad), std::invalid_argument);
}
