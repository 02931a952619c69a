#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "kernels.hpp"

// Self-consistent equations of state for the first-layer weight-row
// covariance C of a finite-width erf network read out by GP regression:
//
//   K = X^T C X
//   Q_ab = sigma_a^2 (2/pi) asin(2 K_ab / sqrt((1+2K_aa)(1+2K_bb)))
//   f_bar = Q (sigma^2 I + Q)^{-1} y
//   A = (Q + sigma^2 I)^{-1} - alpha alpha^T,  alpha = (Q + sigma^2 I)^{-1} y
//   [C^{-1}]_ij = (d0/sigma_w^2) delta_ij + (1/d1) tr(A dQ/dC_ij)
//
// solved as a root of F(C) = C - bracket(C)^{-1} by Jacobian-free
// Newton-Krylov with a step-wise annealing schedule on d1.

namespace nck {

using AnnealSchedule = std::vector<double>;

struct SolverConfig {
  double tol = 1e-6;         // infinity-norm residual tolerance
  int max_newton = 50;       // Newton iterations per annealing factor
  double gmres_tol = 1e-4;   // inner linear-solve relative tolerance
  int gmres_restart = 30;
  double fd_step = 1e-7;     // scaled by (1 + |u|) per directional derivative
  double damping = 0.5;      // Picard fallback mixing
  std::string coordinates = "C";  // root is found in C-space, bracket inverted per step

  void validate() const {
    if (!(tol > 0.0) || max_newton < 1 || !(gmres_tol > 0.0) || gmres_restart < 1 ||
        !(fd_step > 0.0) || !(damping > 0.0) || damping > 1.0)
      throw std::invalid_argument("SolverConfig: invalid parameter");
  }
};

struct FactorTrace {
  double factor = 0.0;
  int newton_iters = 0;
  int picard_steps = 0;
  bool pd_floored = false;
  std::vector<double> residuals;  // initial value, then one entry per iteration
};

struct EosState {
  Eigen::MatrixXd c;       // d0 x d0 symmetric PD
  Eigen::MatrixXd k;       // N x N pre-activation matrix
  Eigen::MatrixXd q;       // N x N post-activation matrix, |entries| <= sigma_a^2
  Eigen::VectorXd f_bar;   // length-N predictions
  Eigen::MatrixXd a;       // N x N auxiliary matrix
  double residual_norm = 0.0;
  double annealing_factor = 0.0;
  std::vector<FactorTrace> history;
};

struct eos_convergence_error : std::runtime_error {
  std::size_t factor_index;
  double factor;
  std::vector<double> residual_history;
  eos_convergence_error(std::size_t idx, double fac, std::vector<double> hist)
      : std::runtime_error("no convergence at annealing factor " + fmt17(fac) + " (index " +
                           std::to_string(idx) + "), final residual " +
                           (hist.empty() ? std::string("n/a") : fmt17(hist.back()))),
        factor_index(idx),
        factor(fac),
        residual_history(std::move(hist)) {}
};

namespace detail {

inline void check_c_input(const Eigen::MatrixXd& c, const Dataset& ds) {
  if (c.rows() != ds.dim() || c.cols() != ds.dim())
    throw std::invalid_argument("eos: C dimension does not match dataset");
  double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("eos: C must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("eos: C is not positive definite");
}

// shared pieces of the state equations at a given C
struct EosCore {
  Eigen::MatrixXd k;        // X^T C X
  Eigen::VectorXd dvec;     // 1 + 2 K_aa
  Eigen::VectorXd s;        // dvec^{-1/2}
  Eigen::MatrixXd u;        // 2 K_ab s_a s_b
  Eigen::MatrixXd q;        // sigma_a^2 (2/pi) asin(u)
  Eigen::VectorXd alpha;    // (Q + sigma^2 I)^{-1} y
  Eigen::MatrixXd a;        // resolvent minus alpha alpha^T
};

inline EosCore eos_core(const Eigen::MatrixXd& c, const Dataset& ds, const HyperParams& hyper,
                        double sigma2, bool need_derivative_margin, bool need_resolvent = true) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("eos: sigma2 must be > 0");
  EosCore core;
  Eigen::MatrixXd cx = c * ds.x;
  core.k.noalias() = ds.x.transpose() * cx;
  core.k = ((core.k + core.k.transpose()) / 2.0).eval();
  core.dvec = (1.0 + 2.0 * core.k.diagonal().array()).matrix();
  if (!(core.dvec.minCoeff() > 0.0))
    throw std::runtime_error("eos: diagonal normalizer 1 + 2 K_aa not positive");
  core.s = core.dvec.array().rsqrt().matrix();
  core.u = 2.0 * (core.s.asDiagonal() * core.k * core.s.asDiagonal());
  double umax = core.u.cwiseAbs().maxCoeff();
  if (need_derivative_margin) {
    if (umax >= 1.0 - 1e-12)
      throw std::domain_error("eos: correlation too close to +-1 for the arcsin derivative");
  } else if (umax > 1.0) {
    for (Eigen::Index i = 0; i < core.u.size(); ++i)
      core.u.data()[i] = clamp_unit(core.u.data()[i]);
  }
  core.q = hyper.sigma_a2 * (2.0 / M_PI) * core.u.array().asin().matrix();
  if (!need_resolvent) return core;
  Eigen::MatrixXd resolvent = core.q;
  resolvent.diagonal().array() += sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(resolvent);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("eos: resolvent Q + sigma^2 I is not positive definite");
  core.alpha = llt.solve(ds.labels);
  core.a = llt.solve(Eigen::MatrixXd::Identity(ds.n(), ds.n()));
  core.a.noalias() -= core.alpha * core.alpha.transpose();
  core.a = ((core.a + core.a.transpose()) / 2.0).eval();
  return core;
}

// M_ij = tr(A dQ/dC_ij) assembled in closed form: with
//   w = sigma_a^2 (2/pi) (1-u^2)^{-1/2}
// the chain rule through u collapses to
//   M = (2 - delta_ij) * (X (A.*g) X^T - 2 X diag(r) X^T)_ij
// where g_ab = 2 w_ab s_a s_b and r_a = sum_b (A.*w.*u)_ab / (1 + 2 K_aa).
inline Eigen::MatrixXd trace_term(const EosCore& core, const Dataset& ds,
                                  const HyperParams& hyper) {
  Eigen::ArrayXXd w =
      hyper.sigma_a2 * (2.0 / M_PI) * (1.0 - core.u.array().square()).rsqrt();
  Eigen::MatrixXd ag = (core.a.array() * w * 2.0).matrix();
  ag = core.s.asDiagonal() * ag * core.s.asDiagonal();
  Eigen::MatrixXd ah = (core.a.array() * w * core.u.array()).matrix();
  Eigen::VectorXd r = ah.rowwise().sum().cwiseQuotient(core.dvec);
  Eigen::MatrixXd m = (ds.x * ag) * ds.x.transpose();
  m.noalias() -= 2.0 * (ds.x * r.asDiagonal()) * ds.x.transpose();
  m = ((m + m.transpose())).eval();  // off-diagonal factor 2
  m.diagonal() *= 0.5;               // diagonal factor 1
  return m;
}

inline Eigen::MatrixXd residual_core(const Eigen::MatrixXd& c, const Dataset& ds,
                                     const HyperParams& hyper, double sigma2, double d1_eff,
                                     Eigen::MatrixXd* bracket_inv_out) {
  if (!(d1_eff > 0.0)) throw std::invalid_argument("eos: annealing factor must be > 0");
  EosCore core = eos_core(c, ds, hyper, sigma2, true);
  Eigen::MatrixXd bracket = (1.0 / d1_eff) * trace_term(core, ds, hyper);
  bracket.diagonal().array() += hyper.d0 / hyper.sigma_w2;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(bracket);
  Eigen::MatrixXd binv = lu.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  if (!binv.allFinite()) throw std::runtime_error("eos: bracket matrix is not invertible");
  binv = ((binv + binv.transpose()) / 2.0).eval();
  if (bracket_inv_out) *bracket_inv_out = binv;
  return c - binv;
}

inline Eigen::VectorXd vec_upper(const Eigen::MatrixXd& m) {
  const int d = static_cast<int>(m.rows());
  Eigen::VectorXd v(d * (d + 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) v(k++) = m(i, j);
  return v;
}

inline Eigen::MatrixXd sym_from_upper(const Eigen::VectorXd& v, int d) {
  Eigen::MatrixXd m(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      m(i, j) = v(k);
      m(j, i) = v(k);
      ++k;
    }
  return m;
}

// clamp eigenvalues at 1e-10 * tr(C)/d0; returns whether anything moved
inline bool pd_floor(Eigen::MatrixXd& c) {
  c = ((c + c.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  double floor_v = 1e-10 * std::max(c.trace(), 0.0) / static_cast<double>(c.rows());
  if (!(floor_v > 0.0)) floor_v = 1e-300;
  if (es.eigenvalues().minCoeff() >= floor_v) return false;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor_v);
  c = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  c = ((c + c.transpose()) / 2.0).eval();
  return true;
}

// restarted GMRES with modified Gram-Schmidt and Givens rotations;
// zero initial guess, operator given as a matvec callable
template <typename MatVec>
Eigen::VectorXd gmres(MatVec&& av, const Eigen::VectorXd& b, int restart, double tol,
                      int max_cycles) {
  const Eigen::Index n = b.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (!(bnorm > 0.0)) return x;
  bool converged = false;
  for (int cycle = 0; cycle < max_cycles && !converged; ++cycle) {
    Eigen::VectorXd r = cycle == 0 ? b : Eigen::VectorXd(b - av(x));
    double beta = r.norm();
    if (beta <= tol * bnorm) break;
    const int m = std::min<Eigen::Index>(restart, n);
    Eigen::MatrixXd v(n, m + 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m + 1, m);
    std::vector<double> cs(m, 0.0), sn(m, 0.0);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m + 1);
    v.col(0) = r / beta;
    g(0) = beta;
    int k = 0;
    for (; k < m; ++k) {
      Eigen::VectorXd w = av(v.col(k));
      for (int i = 0; i <= k; ++i) {
        h(i, k) = w.dot(v.col(i));
        w.noalias() -= h(i, k) * v.col(i);
      }
      double wnorm = w.norm();
      h(k + 1, k) = wnorm;
      bool breakdown = !(wnorm > 1e-300);
      if (!breakdown) v.col(k + 1) = w / wnorm;
      for (int i = 0; i < k; ++i) {
        double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      double denom = std::hypot(h(k, k), h(k + 1, k));
      if (!(denom > 1e-300)) break;  // dependent column, restart from current x
      cs[k] = h(k, k) / denom;
      sn[k] = h(k + 1, k) / denom;
      h(k, k) = denom;
      h(k + 1, k) = 0.0;
      g(k + 1) = -sn[k] * g(k);
      g(k) = cs[k] * g(k);
      if (std::abs(g(k + 1)) <= tol * bnorm || breakdown) {
        converged = true;
        ++k;
        break;
      }
    }
    if (k == 0) break;
    Eigen::VectorXd y =
        h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    x.noalias() += v.leftCols(k) * y;
  }
  return x;
}

}  // namespace detail

// evaluate the state equations at a fixed C
inline EosState eos_q_and_predictions(const Eigen::MatrixXd& c, const Dataset& ds,
                                      const HyperParams& hyper, double sigma2) {
  hyper.validate();
  detail::check_c_input(c, ds);
  detail::EosCore core = detail::eos_core(c, ds, hyper, sigma2, false);
  EosState st;
  st.c = c;
  st.k = std::move(core.k);
  st.q = std::move(core.q);
  st.f_bar = ds.labels - sigma2 * core.alpha;  // Q alpha via the resolvent identity
  st.a = std::move(core.a);
  return st;
}

// reference derivative of Q with respect to one upper-triangle entry of C;
// used by the gradient verify suite, quadratic cost per entry
inline Eigen::MatrixXd q_derivative_wrt_c(const Eigen::MatrixXd& c, const Dataset& ds,
                                          const HyperParams& hyper, int i, int j) {
  hyper.validate();
  detail::check_c_input(c, ds);
  if (i < 0 || j < i || j >= ds.dim())
    throw std::invalid_argument("q_derivative_wrt_c: (i,j) must index the upper triangle");
  detail::EosCore core = detail::eos_core(c, ds, hyper, 1.0, true, false);
  const int n = ds.n();
  Eigen::VectorXd xi = ds.x.row(i).transpose();
  Eigen::VectorXd xj = ds.x.row(j).transpose();
  Eigen::MatrixXd dk;
  if (i == j)
    dk = xi * xi.transpose();
  else
    dk = xi * xj.transpose() + xj * xi.transpose();
  Eigen::VectorXd ddiag = dk.diagonal();
  Eigen::MatrixXd du =
      2.0 * (core.s.asDiagonal() * dk * core.s.asDiagonal());
  Eigen::ArrayXd corr = (ddiag.cwiseQuotient(core.dvec)).array();
  du.array() -= core.u.array() * (corr.replicate(1, n) + corr.transpose().replicate(n, 1));
  Eigen::ArrayXXd w = hyper.sigma_a2 * (2.0 / M_PI) * (1.0 - core.u.array().square()).rsqrt();
  return (w * du.array()).matrix();
}

// F(C) = C - [(d0/sigma_w^2) I + (1/d1_eff) M(C)]^{-1}
inline Eigen::MatrixXd eos_residual(const Eigen::MatrixXd& c, const Dataset& ds,
                                    const HyperParams& hyper, double sigma2, double d1_eff) {
  hyper.validate();
  detail::check_c_input(c, ds);
  return detail::residual_core(c, ds, hyper, sigma2, d1_eff, nullptr);
}

// canonical annealing ladder truncated at the target width
inline AnnealSchedule default_schedule(int target_d1) {
  if (target_d1 < 500 || target_d1 > 100000)
    throw std::invalid_argument("default_schedule: target must lie in [500, 100000]");
  std::vector<int> canonical;
  for (int f = 100000; f >= 20000; f -= 10000) canonical.push_back(f);
  for (int f = 10000; f >= 2000; f -= 1000) canonical.push_back(f);
  for (int f = 1000; f >= 500; f -= 100) canonical.push_back(f);
  AnnealSchedule sched;
  for (int f : canonical)
    if (f > target_d1) sched.push_back(static_cast<double>(f));
  sched.push_back(static_cast<double>(target_d1));
  return sched;
}

inline void validate_schedule(const AnnealSchedule& sched) {
  if (sched.empty()) throw std::invalid_argument("annealing schedule is empty");
  for (size_t i = 0; i < sched.size(); ++i) {
    if (!(sched[i] > 0.0)) throw std::invalid_argument("annealing factors must be > 0");
    if (i > 0 && !(sched[i] < sched[i - 1]))
      throw std::invalid_argument("annealing factors must be strictly decreasing");
  }
}

// one annealing factor: Newton-Krylov from the given C, Picard fallback on
// stagnation; C is updated in place, returns whether tolerance was reached
inline bool eos_solve_factor(Eigen::MatrixXd& c, const Dataset& ds, const HyperParams& hyper,
                             double sigma2, double factor, const SolverConfig& cfg,
                             FactorTrace& trace) {
  const int d0 = ds.dim();
  const int nvar = d0 * (d0 + 1) / 2;
  trace.factor = factor;

  auto eval = [&](const Eigen::VectorXd& v, Eigen::MatrixXd* binv) {
    Eigen::MatrixXd cm = detail::sym_from_upper(v, d0);
    if (detail::pd_floor(cm)) trace.pd_floored = true;
    return detail::vec_upper(detail::residual_core(cm, ds, hyper, sigma2, factor, binv));
  };

  Eigen::VectorXd u = detail::vec_upper(c);
  Eigen::MatrixXd binv;
  Eigen::VectorXd f = eval(u, &binv);
  double fnorm = f.cwiseAbs().maxCoeff();
  trace.residuals.push_back(fnorm);

  for (int it = 0; it < cfg.max_newton && fnorm >= cfg.tol; ++it) {
    ++trace.newton_iters;
    const double eps_scale = cfg.fd_step * (1.0 + u.norm());
    auto jv = [&](const Eigen::VectorXd& dir) -> Eigen::VectorXd {
      double dn = dir.norm();
      if (!(dn > 0.0)) return Eigen::VectorXd::Zero(nvar);
      double eps = eps_scale / dn;
      return (eval(u + eps * dir, nullptr) - f) / eps;
    };
    Eigen::VectorXd dx = detail::gmres(jv, Eigen::VectorXd(-f), cfg.gmres_restart,
                                       cfg.gmres_tol, 2);

    bool accepted = false;
    double step = 1.0;
    for (int bt = 0; bt < 5 && !accepted; ++bt, step *= 0.5) {
      Eigen::VectorXd u_try = u + step * dx;
      Eigen::MatrixXd binv_try;
      Eigen::VectorXd f_try = eval(u_try, &binv_try);
      double fn_try = f_try.cwiseAbs().maxCoeff();
      if (fn_try < fnorm) {
        u = std::move(u_try);
        f = std::move(f_try);
        fnorm = fn_try;
        binv.swap(binv_try);
        accepted = true;
      }
    }
    if (!accepted) {
      // damped fixed-point step off the bracket inverse at the current point
      ++trace.picard_steps;
      Eigen::VectorXd u_pic = (1.0 - cfg.damping) * u + cfg.damping * detail::vec_upper(binv);
      Eigen::MatrixXd binv_pic;
      f = eval(u_pic, &binv_pic);
      u = std::move(u_pic);
      fnorm = f.cwiseAbs().maxCoeff();
      binv.swap(binv_pic);
    }
    trace.residuals.push_back(fnorm);
  }

  c = detail::sym_from_upper(u, d0);
  detail::pd_floor(c);
  return fnorm < cfg.tol;
}

inline EosState solve_eos(const Dataset& ds, const HyperParams& hyper, double sigma2,
                          const AnnealSchedule& schedule, const SolverConfig& cfg = {}) {
  hyper.validate();
  cfg.validate();
  validate_schedule(schedule);
  if (ds.dim() != hyper.d0)
    throw std::invalid_argument("solve_eos: dataset dimension does not match hyper.d0");

  Eigen::MatrixXd c =
      (hyper.sigma_w2 / hyper.d0) * Eigen::MatrixXd::Identity(ds.dim(), ds.dim());
  std::vector<FactorTrace> history;
  for (size_t s = 0; s < schedule.size(); ++s) {
    FactorTrace trace;
    bool ok = eos_solve_factor(c, ds, hyper, sigma2, schedule[s], cfg, trace);
    history.push_back(trace);
    if (!ok) throw eos_convergence_error(s, schedule[s], trace.residuals);
  }

  EosState st = eos_q_and_predictions(c, ds, hyper, sigma2);
  st.annealing_factor = schedule.back();
  st.residual_norm = history.back().residuals.back();
  st.history = std::move(history);
  return st;
}

}  // namespace nck
