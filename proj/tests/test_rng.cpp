#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "shmpc/rng.hpp"

using namespace shmpc;

TEST_CASE("philox 4x32-10 known-answer vectors") {
  // Reference vectors from the Random123 test suite (kat_vectors).
  {
    const auto r = Philox4x32::block(0, 0, 0, 0, 0, 0);
    CHECK(r[0] == 0x6627e8d5u);
    CHECK(r[1] == 0xe169c58du);
    CHECK(r[2] == 0xbc57ac4cu);
    CHECK(r[3] == 0x9b00dbd8u);
  }
  {
    const auto r = Philox4x32::block(0xffffffffu, 0xffffffffu, 0xffffffffu,
                                     0xffffffffu, 0xffffffffu, 0xffffffffu);
    CHECK(r[0] == 0x408f276du);
    CHECK(r[1] == 0x41c83b0eu);
    CHECK(r[2] == 0xa20bc7c6u);
    CHECK(r[3] == 0x6d5451fdu);
  }
  {
    const auto r = Philox4x32::block(0xa4093822u, 0x299f31d0u, 0x243f6a88u,
                                     0x85a308d3u, 0x13198a2eu, 0x03707344u);
    CHECK(r[0] == 0xd16cfe09u);
    CHECK(r[1] == 0x94fdccebu);
    CHECK(r[2] == 0x5001e420u);
    CHECK(r[3] == 0x24126ea1u);
  }
}

TEST_CASE("draws are pure functions of the key") {
  const auto a = normal_pair(42, rng_streams::scenario, 1, 2, 3);
  const auto b = normal_pair(42, rng_streams::scenario, 1, 2, 3);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  const auto c = normal_pair(42, rng_streams::mc_validation, 1, 2, 3);
  CHECK(a.first != c.first);  // streams decouple
  const auto d = normal_pair(43, rng_streams::scenario, 1, 2, 3);
  CHECK(a.first != d.first);  // seeds decouple
}

TEST_CASE("normal_pair moments") {
  const int n = 200000;
  double sum = 0, sum2 = 0, sum3 = 0;
  for (int i = 0; i < n; ++i) {
    const auto [z1, z2] = normal_pair(7, rng_streams::tests, uint32_t(i), 0, 0);
    sum += z1 + z2;
    sum2 += z1 * z1 + z2 * z2;
    sum3 += z1 * z1 * z1 + z2 * z2 * z2;
  }
  const double m = sum / (2 * n);
  const double v = sum2 / (2 * n) - m * m;
  const double skew = sum3 / (2 * n);
  CHECK(std::abs(m) < 0.01);        // se ~ 0.0016
  CHECK(v == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(skew) < 0.02);
}

TEST_CASE("uniform range and mean") {
  const int n = 100000;
  double sum = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = uniform(11, rng_streams::tests, uint32_t(i), 1, 2);
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
    sum += u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("erf_inv inverts erf") {
  for (double x : {-0.999, -0.9, -0.5, -0.105, 0.0, 1e-6, 0.105, 0.5, 0.9,
                   0.995, 0.99999}) {
    CHECK(std::erf(erf_inv(x)) == doctest::Approx(x).epsilon(1e-12));
  }
  // the two quantiles the Gaussian baseline uses: eps_k = 0.05 and 0.0025
  CHECK(std::erf(erf_inv(1 - 2 * 0.05)) == doctest::Approx(0.9).epsilon(1e-13));
  CHECK(std::erf(erf_inv(1 - 2 * 0.0025)) == doctest::Approx(0.995).epsilon(1e-13));
}
