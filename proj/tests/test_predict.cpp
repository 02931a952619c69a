#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include <nck/predict.hpp>
#include <nck/rng.hpp>

using namespace nck;

TEST_CASE("inverse second moment expansion", "[predict]") {
  REQUIRE(t_moment(2.0, 0.5) == Catch::Approx(0.28902910645226948).epsilon(1e-15));
  // sigma -> 0 collapses to 1/mu^2
  REQUIRE(t_moment(3.0, 1e-9) == Catch::Approx(1.0 / 9.0).epsilon(1e-12));
  REQUIRE_THROWS_AS(t_moment(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("erf case values at defaults", "[predict]") {
  GaussParams1D p;
  CaseValues cv = erf_case_values(p);
  REQUIRE(cv.v1[0] == Catch::Approx(0.85548544677386529).epsilon(1e-15));
  REQUIRE(cv.v1[1] == cv.v1[0]);
  REQUIRE(cv.v2[0] == Catch::Approx(0.85026433275032798).epsilon(1e-15));
  // symmetric classes make the cross case the exact mirror of the within case
  REQUIRE(cv.v3 == -cv.v2[0]);
  REQUIRE(cv.v3 < 0.0);
}

TEST_CASE("relu case values at defaults", "[predict]") {
  GaussParams1D p;
  CaseValues g = relu_case_values(p, KernelFamily::Nngp);
  REQUIRE(g.v1[0] == 2.125);
  REQUIRE(g.v2[0] == 2.0);
  REQUIRE(g.v3 == 0.0);
  CaseValues t = relu_case_values(p, KernelFamily::Ntk);
  REQUIRE(t.v1[0] == 4.25);
  REQUIRE(t.v2[0] == 4.0);
  REQUIRE(t.v3 == 0.0);
}

TEST_CASE("data case values", "[predict]") {
  GaussParams1D p;
  p.mu1 = -1.5;
  p.mu2 = 2.5;
  p.sigma1 = 0.4;
  p.sigma2 = 0.7;
  CaseValues cv = data_case_values(p);
  REQUIRE(cv.v1[0] == Catch::Approx(0.16 + 2.25).epsilon(1e-15));
  REQUIRE(cv.v1[1] == Catch::Approx(0.49 + 6.25).epsilon(1e-15));
  REQUIRE(cv.v2[0] == Catch::Approx(2.25).epsilon(1e-15));
  REQUIRE(cv.v3 == Catch::Approx(-3.75).epsilon(1e-15));
}

TEST_CASE("expected metric frozen values", "[predict]") {
  GaussParams1D p;
  double data = expected_nc1(data_case_values(p), 512, 512);
  double relu = expected_nc1(relu_case_values(p, KernelFamily::Nngp), 512, 512);
  double erf = expected_nc1(erf_case_values(p), 512, 512);
  REQUIRE(data == Catch::Approx(0.062374122673176685).epsilon(1e-14));
  REQUIRE(relu == Catch::Approx(0.12474063224704016).epsilon(1e-14));
  REQUIRE(erf == Catch::Approx(0.0061285474253155794).epsilon(1e-14));
  REQUIRE(relu / data == Catch::Approx(1.9998779445868424).epsilon(1e-14));
  REQUIRE_THROWS_AS(expected_nc1(data_case_values(p), 0, 5), std::invalid_argument);
}

TEST_CASE("kernel family and weight scale drop out of the relu metric", "[predict]") {
  GaussParams1D p;
  double base = expected_nc1(relu_case_values(p, KernelFamily::Nngp), 512, 512);
  // at sigma_w2 = 1 both scales are powers of two, so the ratio is bit exact
  REQUIRE(expected_nc1(relu_case_values(p, KernelFamily::Ntk), 512, 512) == base);
  GaussParams1D q = p;
  q.sigma_w2 = 1.7;
  REQUIRE(expected_nc1(relu_case_values(q, KernelFamily::Nngp), 512, 512) ==
          Catch::Approx(base).epsilon(1e-14));
  REQUIRE(expected_nc1(relu_case_values(q, KernelFamily::Ntk), 512, 512) ==
          Catch::Approx(base).epsilon(1e-14));
}

TEST_CASE("large-n relu forms are exact at defaults", "[predict]") {
  GaussParams1D p;
  REQUIRE(theorem2_expected_nc1(p, CrossTermVariant::WithCrossTerm) == 0.0625);
  REQUIRE(theorem2_expected_nc1(p, CrossTermVariant::WithoutCrossTerm) == 0.125);
  GaussParams1D zero = p;
  zero.mu1 = zero.mu2 = 0.0;
  REQUIRE_THROWS_AS(theorem2_expected_nc1(zero, CrossTermVariant::WithCrossTerm),
                    std::domain_error);
}

TEST_CASE("finite-n relu metric converges to the large-n form", "[predict]") {
  // the finite-n assembly approaches the variant without the cross term at
  // rate 1/n; the gap shrinks tenfold per decade
  GaussParams1D p;
  double limit = theorem2_expected_nc1(p, CrossTermVariant::WithoutCrossTerm);
  double prev = 0.0;
  const int counts[3] = {100000, 1000000, 10000000};
  for (int i = 0; i < 3; ++i) {
    int n = counts[i];
    double err =
        std::abs(expected_nc1(relu_case_values(p, KernelFamily::Nngp), n, n) / limit - 1.0);
    if (i > 0) REQUIRE(prev / err == Catch::Approx(10.0).margin(2.0));
    prev = err;
  }
  REQUIRE(prev <= 2e-7);
  double at512 =
      std::abs(expected_nc1(relu_case_values(p, KernelFamily::Nngp), 512, 512) / limit - 1.0);
  REQUIRE(at512 <= 3e-3);
}

TEST_CASE("kernel to data ratio", "[predict]") {
  GaussParams1D p;
  REQUIRE(corollary1_ratio(p) == 2.0);
  GaussParams1D same = p;
  same.mu1 = same.mu2 = 2.0;
  REQUIRE(corollary1_ratio(same) == Catch::Approx(0.0).margin(1e-15));
  GaussParams1D lop = p;
  lop.mu1 = -1.0;
  lop.mu2 = 2.0;
  lop.n1 = 1;
  lop.n2 = 1000000;
  REQUIRE(std::abs(corollary1_ratio(lop) - 1.0) < 0.01);
  GaussParams1D zero = p;
  zero.mu1 = zero.mu2 = 0.0;
  REQUIRE_THROWS_AS(corollary1_ratio(zero), std::domain_error);
}

TEST_CASE("parameter validation and assumption warnings", "[predict]") {
  GaussParams1D p;
  REQUIRE_NOTHROW(p.validate());
  REQUIRE(p.assumptions_ok());
  REQUIRE(p.assumption_warning().empty());

  GaussParams1D bad = p;
  bad.sigma1 = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.n2 = 0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.sigma_w2 = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

  GaussParams1D close = p;
  close.mu1 = -1.0;  // |mu|/sigma = 2, under the separation threshold
  REQUIRE_NOTHROW(close.validate());
  REQUIRE_FALSE(close.assumptions_ok());
  REQUIRE(close.assumption_warning().find("separation") != std::string::npos);
}

TEST_CASE("diagonal case dominates the within case", "[predict]") {
  CounterRng rng = CounterRng::from(0x7072ull);
  for (int i = 0; i < 100; ++i) {
    GaussParams1D p;
    p.mu1 = -0.1 - 4.9 * rng.next_uniform();
    p.mu2 = 0.1 + 4.9 * rng.next_uniform();
    p.sigma1 = 0.05 + 2.95 * rng.next_uniform();
    p.sigma2 = 0.05 + 2.95 * rng.next_uniform();
    p.sigma_w2 = 0.1 + 3.9 * rng.next_uniform();
    CaseValues e = erf_case_values(p);
    CaseValues rg = relu_case_values(p, KernelFamily::Nngp);
    CaseValues rt = relu_case_values(p, KernelFamily::Ntk);
    for (int c = 0; c < 2; ++c) {
      REQUIRE(e.v1[c] >= e.v2[c]);
      REQUIRE(e.v1[c] < 1.0);
      REQUIRE(rg.v1[c] > rg.v2[c]);
      REQUIRE(rt.v1[c] > rt.v2[c]);
    }
  }
}
