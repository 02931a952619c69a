#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include <nck/dataset.hpp>
#include <nck/eos.hpp>
#include <nck/kernels.hpp>
#include <nck/rng.hpp>

using namespace nck;

namespace {

HyperParams make_hyper(int d0, double sigma_w2 = 1.0, double sigma_a2 = 1.0) {
  HyperParams h;
  h.d0 = d0;
  h.sigma_w2 = sigma_w2;
  h.sigma_b2 = 0.0;
  h.sigma_a2 = sigma_a2;
  return h;
}

Eigen::MatrixXd random_spd(int d, uint64_t seed, double base = 0.3, double scale = 0.05) {
  CounterRng rng = CounterRng::from(seed);
  Eigen::MatrixXd b(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) b(i, j) = rng.next_normal();
  Eigen::MatrixXd c = base * Eigen::MatrixXd::Identity(d, d) + scale * (b * b.transpose());
  return ((c + c.transpose()) / 2.0).eval();
}

}  // namespace

TEST_CASE("annealing ladder truncates at the target", "[eos]") {
  AnnealSchedule s = default_schedule(500);
  REQUIRE(s.size() == 24);
  REQUIRE(s.front() == 100000.0);
  REQUIRE(s.back() == 500.0);
  REQUIRE(default_schedule(2000).size() == 18);
  REQUIRE(default_schedule(2000).back() == 2000.0);
  AnnealSchedule odd = default_schedule(550);
  REQUIRE(odd.size() == 24);
  REQUIRE(odd[22] == 600.0);
  REQUIRE(odd.back() == 550.0);
  AnnealSchedule top = default_schedule(100000);
  REQUIRE(top.size() == 1);
  REQUIRE(top[0] == 100000.0);
  for (const AnnealSchedule& sched : {s, odd}) REQUIRE_NOTHROW(validate_schedule(sched));
  REQUIRE_THROWS_AS(default_schedule(499), std::invalid_argument);
  REQUIRE_THROWS_AS(default_schedule(100001), std::invalid_argument);
}

TEST_CASE("schedule validation", "[eos]") {
  REQUIRE_THROWS_AS(validate_schedule({}), std::invalid_argument);
  REQUIRE_THROWS_AS(validate_schedule({1000.0, 1000.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(validate_schedule({500.0, 1000.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(validate_schedule({1000.0, -5.0}), std::invalid_argument);
  REQUIRE_NOTHROW(validate_schedule({1000.0, 500.0}));
}

TEST_CASE("state matrix respects the arcsine range bound", "[eos]") {
  Dataset ds = make_d1(32, 2, 41);
  HyperParams h = make_hyper(2, 1.0, 0.37);
  Eigen::MatrixXd c = random_spd(2, 42);
  EosState st = eos_q_and_predictions(c, ds, h, 1e-3);
  REQUIRE(st.q.cwiseAbs().maxCoeff() <= h.sigma_a2 + 1e-15);
  REQUIRE(st.q.isApprox(st.q.transpose(), 1e-14));
  // predictions come from the resolvent identity f = y - sigma2 alpha
  Eigen::MatrixXd res = st.q;
  res.diagonal().array() += 1e-3;
  Eigen::VectorXd alpha = res.llt().solve(ds.labels);
  REQUIRE((st.f_bar - st.q * alpha).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("identity covariance reproduces the limiting kernel", "[eos]") {
  Dataset ds = make_d1(64, 4, 17);
  double sigma_a2 = 0.5;
  HyperParams h = make_hyper(4, 1.3, sigma_a2);
  Eigen::MatrixXd c0 = (h.sigma_w2 / h.d0) * Eigen::MatrixXd::Identity(4, 4);
  EosState st = eos_q_and_predictions(c0, ds, h, 1e-3);
  Gram g = assemble_gram(KernelKind::NngpErf, ds, h);
  REQUIRE((st.q - sigma_a2 * g.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("residual is symmetric and vanishes at infinite width", "[eos]") {
  Dataset ds = make_d1(32, 3, 23);
  HyperParams h = make_hyper(3, 2.0);
  Eigen::MatrixXd c = random_spd(3, 24);
  Eigen::MatrixXd f = eos_residual(c, ds, h, 1e-3, 500.0);
  REQUIRE((f - f.transpose()).cwiseAbs().maxCoeff() == 0.0);
  // at d1 -> infinity the bracket collapses to (d0/sigma_w2) I, whose inverse
  // is exactly the initialization covariance
  Eigen::MatrixXd c0 = (h.sigma_w2 / h.d0) * Eigen::MatrixXd::Identity(3, 3);
  REQUIRE(eos_residual(c0, ds, h, 1e-3, 1e300).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("closed-form trace term matches the entrywise reference", "[eos]") {
  Dataset ds = make_d1(24, 3, 29);
  HyperParams h = make_hyper(3, 1.0, 0.8);
  Eigen::MatrixXd c = random_spd(3, 30);
  detail::EosCore core = detail::eos_core(c, ds, h, 1e-3, true);
  Eigen::MatrixXd fast = detail::trace_term(core, ds, h);
  double scale = fast.cwiseAbs().maxCoeff();
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      Eigen::MatrixXd dq = q_derivative_wrt_c(c, ds, h, i, j);
      double ref = (core.a.array() * dq.array()).sum();
      REQUIRE(fast(i, j) == Catch::Approx(ref).margin(1e-10 * scale));
    }
}

TEST_CASE("solved state satisfies the inverse covariance relation", "[eos]") {
  Dataset ds = make_d1(32, 2, 31);
  HyperParams h = make_hyper(2, 2.0);
  SolverConfig cfg;
  EosState st = solve_eos(ds, h, 1e-3, default_schedule(2000), cfg);
  REQUIRE(st.annealing_factor == 2000.0);
  REQUIRE(st.residual_norm < cfg.tol);
  REQUIRE(st.history.size() == default_schedule(2000).size());
  for (const FactorTrace& t : st.history) REQUIRE_FALSE(t.residuals.empty());

  detail::EosCore core = detail::eos_core(st.c, ds, h, 1e-3, true);
  Eigen::MatrixXd bracket = (1.0 / 2000.0) * detail::trace_term(core, ds, h);
  bracket.diagonal().array() += h.d0 / h.sigma_w2;
  Eigen::MatrixXd cinv = st.c.inverse();
  double gap = (cinv - bracket).cwiseAbs().maxCoeff();
  REQUIRE(gap <= 10.0 * cfg.tol * bracket.cwiseAbs().maxCoeff());
}

TEST_CASE("annealing chain warm starts pay off", "[eos]") {
  HyperParams h = make_hyper(2);
  AnnealSchedule sched = default_schedule(2000);
  SolverConfig cfg;
  for (uint64_t seed : {5ull, 6ull, 7ull}) {
    Dataset ds = make_d1(32, 2, seed);
    EosState st = solve_eos(ds, h, 1e-3, sched, cfg);
    int warm = 0;
    for (const FactorTrace& t : st.history) warm += t.newton_iters;
    int cold = 0;
    for (double factor : sched) {
      Eigen::MatrixXd c = (h.sigma_w2 / h.d0) * Eigen::MatrixXd::Identity(2, 2);
      FactorTrace t;
      eos_solve_factor(c, ds, h, 1e-3, factor, cfg, t);
      cold += t.newton_iters;
    }
    REQUIRE(warm <= cold + 2);
  }
}

TEST_CASE("non-convergence carries the factor and its history", "[eos]") {
  Dataset ds = make_d1(32, 2, 37);
  HyperParams h = make_hyper(2);
  SolverConfig cfg;
  cfg.tol = 1e-14;
  cfg.max_newton = 1;
  try {
    solve_eos(ds, h, 1e-3, {500.0}, cfg);
    FAIL("expected eos_convergence_error");
  } catch (const eos_convergence_error& e) {
    REQUIRE(e.factor_index == 0);
    REQUIRE(e.factor == 500.0);
    REQUIRE(e.residual_history.size() >= 2);
    REQUIRE(std::string(e.what()).find("annealing factor") != std::string::npos);
  }
}

TEST_CASE("covariance input guards", "[eos]") {
  Dataset ds = make_d1(16, 2, 43);
  HyperParams h = make_hyper(2);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.3, 0.1, 1.0;
  REQUIRE_THROWS_AS(eos_residual(asym, ds, h, 1e-3, 500.0), std::invalid_argument);
  REQUIRE_THROWS_AS(eos_residual(-Eigen::MatrixXd::Identity(2, 2), ds, h, 1e-3, 500.0),
                    std::runtime_error);
  REQUIRE_THROWS_AS(eos_residual(Eigen::MatrixXd::Identity(3, 3), ds, h, 1e-3, 500.0),
                    std::invalid_argument);
  Eigen::MatrixXd ok = Eigen::MatrixXd::Identity(2, 2);
  REQUIRE_THROWS_AS(eos_residual(ok, ds, h, 0.0, 500.0), std::invalid_argument);
  REQUIRE_THROWS_AS(eos_residual(ok, ds, h, 1e-3, 0.0), std::invalid_argument);
  HyperParams mism = make_hyper(3);
  REQUIRE_THROWS_AS(solve_eos(ds, mism, 1e-3, {1000.0}), std::invalid_argument);
}

TEST_CASE("derivative guards near the arcsine branch point", "[eos]") {
  Dataset ds = make_d1(8, 1, 47);
  HyperParams h = make_hyper(1);
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(1, 1);
  REQUIRE_THROWS_AS(q_derivative_wrt_c(c, ds, h, -1, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(q_derivative_wrt_c(c, ds, h, 1, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(q_derivative_wrt_c(c, ds, h, 0, 1), std::invalid_argument);

  // duplicated huge-norm inputs push the correlation within 1e-12 of one:
  // the derivative path refuses, the evaluation path clamps and proceeds
  Dataset dup = make_d1(8, 1, 48);
  dup.x.setConstant(1e7);
  REQUIRE_THROWS_AS(q_derivative_wrt_c(c, dup, h, 0, 0), std::domain_error);
  EosState st = eos_q_and_predictions(c, dup, h, 1e-3);
  REQUIRE(st.q.allFinite());
  REQUIRE(st.q.cwiseAbs().maxCoeff() <= h.sigma_a2 + 1e-15);
}

TEST_CASE("eigenvalue floor repairs near-singular covariances", "[eos]") {
  Eigen::MatrixXd good = random_spd(3, 51);
  Eigen::MatrixXd kept = good;
  REQUIRE_FALSE(detail::pd_floor(kept));
  REQUIRE((kept - good).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::MatrixXd sick = Eigen::Vector2d(1.0, 1e-18).asDiagonal();
  REQUIRE(detail::pd_floor(sick));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sick);
  REQUIRE(es.eigenvalues().minCoeff() >= 1e-11 * sick.trace() / 2.0);

  // the solver records the repair in its trace
  Dataset ds = make_d1(16, 2, 53);
  HyperParams h = make_hyper(2);
  Eigen::MatrixXd c = Eigen::Vector2d(1.0, 1e-18).asDiagonal();
  SolverConfig cfg;
  cfg.tol = 10.0;
  cfg.max_newton = 1;
  FactorTrace trace;
  eos_solve_factor(c, ds, h, 1e-3, 1e5, cfg, trace);
  REQUIRE(trace.pd_floored);
}
