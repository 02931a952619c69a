#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

// Leading-order analytical predictors of the expected NC1 for the 1-D
// two-class Gaussian model. Higher-order remainder terms are deliberately
// not modeled; Monte Carlo over fresh dataset draws is the adjudicating
// oracle in the verify suites.

namespace nck {

struct GaussParams1D {
  double mu1 = -2.0;  // class-1 mean, expected < 0
  double mu2 = 2.0;   // class-2 mean, expected > 0
  double sigma1 = 0.5;
  double sigma2 = 0.5;
  int n1 = 512;
  int n2 = 512;
  double sigma_w2 = 1.0;

  void validate() const {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
      throw std::invalid_argument("GaussParams1D: sigmas must be > 0");
    if (n1 < 1 || n2 < 1) throw std::invalid_argument("GaussParams1D: counts must be >= 1");
    if (!(sigma_w2 > 0.0)) throw std::invalid_argument("GaussParams1D: sigma_w2 must be > 0");
  }

  // separation assumptions behind the leading-order expansion; violations
  // are reported as warnings, never hard errors, so the breakdown region
  // stays probeable
  bool assumptions_ok() const {
    return mu1 < 0.0 && mu2 > 0.0 && std::abs(mu1) / sigma1 >= 3.0 && mu2 / sigma2 >= 3.0;
  }
  std::string assumption_warning() const {
    if (assumptions_ok()) return {};
    return "separation assumptions violated (need mu1 < 0 < mu2 and |mu_c|/sigma_c >= 3); "
           "leading-order predictions may be inaccurate";
  }
};

struct CaseValues {
  std::array<double, 2> v1{};  // diagonal case, per class
  std::array<double, 2> v2{};  // same class, distinct samples, per class
  double v3 = 0.0;             // cross-class case
};

// E[1/x^2] for x ~ N(mu, sigma^2), second-order delta-method expansion
inline double t_moment(double mu, double sigma) {
  double s2 = mu * mu + sigma * sigma;
  if (!(s2 > 0.0)) throw std::invalid_argument("t_moment: mu^2 + sigma^2 must be > 0");
  double s4 = sigma * sigma * sigma * sigma;
  return 1.0 / s2 + (2.0 * s4 + 4.0 * sigma * sigma * mu * mu) / (s2 * s2 * s2);
}

enum class KernelFamily { Nngp, Ntk };

inline CaseValues relu_case_values(const GaussParams1D& p, KernelFamily family) {
  p.validate();
  double scale = family == KernelFamily::Nngp
                     ? p.sigma_w2 / 2.0
                     : p.sigma_w2 * p.sigma_w2 / 2.0 + p.sigma_w2 / 2.0;
  CaseValues cv;
  const double mu[2] = {p.mu1, p.mu2};
  const double sg[2] = {p.sigma1, p.sigma2};
  for (int c = 0; c < 2; ++c) {
    cv.v1[c] = scale * (sg[c] * sg[c] + mu[c] * mu[c]);
    cv.v2[c] = scale * mu[c] * mu[c];
  }
  cv.v3 = 0.0;  // opposite-sign pairs contribute nothing for ReLU
  return cv;
}

// expected arcsine argument of the Erf kernel per case; the c != c'
// entry carries the sign of the cross-class kernel (negative for
// opposite-sign means)
inline CaseValues erf_case_values(const GaussParams1D& p) {
  p.validate();
  double t1 = t_moment(p.mu1, p.sigma1);
  double t2 = t_moment(p.mu2, p.sigma2);
  double w2 = p.sigma_w2, w4 = w2 * w2;
  CaseValues cv;
  const double t[2] = {t1, t2};
  for (int c = 0; c < 2; ++c) {
    cv.v1[c] = 1.0 - t[c] / (2.0 * w2);
    cv.v2[c] = cv.v1[c] - t[c] * t[c] / (16.0 * w4);
  }
  cv.v3 = -(1.0 - (t1 + t2) / (4.0 * w2) - t1 * t2 / (16.0 * w4));
  return cv;
}

inline CaseValues data_case_values(const GaussParams1D& p) {
  p.validate();
  CaseValues cv;
  const double mu[2] = {p.mu1, p.mu2};
  const double sg[2] = {p.sigma1, p.sigma2};
  for (int c = 0; c < 2; ++c) {
    cv.v1[c] = sg[c] * sg[c] + mu[c] * mu[c];
    cv.v2[c] = mu[c] * mu[c];
  }
  cv.v3 = p.mu1 * p.mu2;
  return cv;
}

// finite-n expected NC1 assembled from per-case kernel expectations
inline double expected_nc1(const CaseValues& cv, int n1, int n2) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("expected_nc1: counts must be >= 1");
  const double n[2] = {static_cast<double>(n1), static_cast<double>(n2)};
  const double total = n[0] + n[1];
  double num = 0.0, den = 0.0;
  for (int c = 0; c < 2; ++c) {
    double block = n[c] * (n[c] - 1.0) * cv.v2[c] + n[c] * cv.v1[c];
    num += n[c] * cv.v1[c] / total - block / (2.0 * n[c] * n[c]);
    den += (1.0 / (2.0 * n[c] * n[c]) - 1.0 / (total * total)) * block;
  }
  den -= (2.0 * n[0] * n[1] / (total * total)) * cv.v3;
  if (std::abs(den) < 1e-300) throw std::domain_error("expected_nc1: degenerate denominator");
  return num / den;
}

// The large-n ReLU prediction exists in two printed forms that differ by a
// cross-class denominator term; both are exposed and Monte Carlo decides.
enum class CrossTermVariant { WithCrossTerm, WithoutCrossTerm };

inline double theorem2_expected_nc1(const GaussParams1D& p, CrossTermVariant variant) {
  p.validate();
  const double mu[2] = {p.mu1, p.mu2};
  const double sg[2] = {p.sigma1, p.sigma2};
  const double n[2] = {static_cast<double>(p.n1), static_cast<double>(p.n2)};
  const double total = n[0] + n[1];
  double num = 0.0, den = 0.0;
  for (int c = 0; c < 2; ++c) {
    num += (n[c] * mu[c] * mu[c] + n[c] * sg[c] * sg[c]) / total - mu[c] * mu[c] / 2.0;
    den += mu[c] * mu[c] / 2.0 - n[c] * n[c] * mu[c] * mu[c] / (total * total);
  }
  if (variant == CrossTermVariant::WithCrossTerm)
    den -= (2.0 / (total * total)) * n[0] * n[1] * mu[0] * mu[1];
  if (std::abs(den) < 1e-300)
    throw std::domain_error("theorem2_expected_nc1: degenerate denominator");
  return num / den;
}

// large-n ratio of ReLU-kernel NC1 to raw-data NC1
inline double corollary1_ratio(const GaussParams1D& p) {
  p.validate();
  const double mu[2] = {p.mu1, p.mu2};
  const double n[2] = {static_cast<double>(p.n1), static_cast<double>(p.n2)};
  const double total = n[0] + n[1];
  double den = 0.0;
  for (int c = 0; c < 2; ++c)
    den += mu[c] * mu[c] / 2.0 - n[c] * n[c] * mu[c] * mu[c] / (total * total);
  if (std::abs(den) < 1e-300)
    throw std::domain_error("corollary1_ratio: degenerate denominator");
  double cross = (2.0 / (total * total)) * n[0] * n[1] * mu[0] * mu[1];
  return 1.0 - cross / den;
}

}  // namespace nck
