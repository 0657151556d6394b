#include <doctest.h>

#include <cmath>

#include "mtbo/rng.hpp"

using namespace mtbo;

TEST_CASE("normal quantile inverts the cdf to machine precision") {
  const double ps[] = {1e-12, 1e-8, 1e-4, 0.01,   0.025, 0.1,      0.3,     0.5,
                       0.7,   0.9,  0.975, 0.99, 0.9999, 1 - 1e-8, 1 - 1e-12};
  for (double p : ps) {
    const double x = standard_normal_quantile(p);
    CHECK(standard_normal_cdf(x) == doctest::Approx(p).epsilon(1e-11));
  }
}

TEST_CASE("normal quantile known values and symmetry") {
  CHECK(standard_normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(standard_normal_quantile(0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(standard_normal_quantile(0.841344746068543) ==
        doctest::Approx(1.0).epsilon(1e-9));
  for (double p : {0.001, 0.1, 0.25, 0.4}) {
    CHECK(standard_normal_quantile(p) ==
          doctest::Approx(-standard_normal_quantile(1.0 - p)).epsilon(1e-10));
  }
  double prev = -1e300;
  for (double p = 0.001; p < 1.0; p += 0.001) {
    const double x = standard_normal_quantile(p);
    CHECK(x > prev);
    prev = x;
  }
}

TEST_CASE("derived seeds are deterministic and distinct per tag") {
  CHECK(derive_seed(42, 1) == derive_seed(42, 1));
  CHECK(derive_seed(42, 1) != derive_seed(42, 2));
  CHECK(derive_seed(42, 1) != derive_seed(43, 1));
}

TEST_CASE("uniform01 stays inside the open interval") {
  auto eng = make_engine(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(eng);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal draws have the right first moments") {
  auto eng = make_engine(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = normal_draw(eng);
    sum += z;
    sq += z * z;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}
