#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "io.hpp"
#include "json.hpp"

// Closed-form infinite-width kernels for a single hidden layer (Erf and ReLU
// activations, NNGP and NTK flavours) plus the raw inner-product map, and
// assembly of class-blocked Gram matrices over a Dataset.

namespace nck {

enum class KernelKind { Linear, NngpErf, NngpRelu, NtkErf, NtkRelu };
enum class Activation { Erf, Relu };

inline std::string kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::NngpErf: return "nngp-erf";
    case KernelKind::NngpRelu: return "nngp-relu";
    case KernelKind::NtkErf: return "ntk-erf";
    case KernelKind::NtkRelu: return "ntk-relu";
  }
  throw std::logic_error("unreachable kernel kind");
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "linear") return KernelKind::Linear;
  if (s == "nngp-erf") return KernelKind::NngpErf;
  if (s == "nngp-relu") return KernelKind::NngpRelu;
  if (s == "ntk-erf") return KernelKind::NtkErf;
  if (s == "ntk-relu") return KernelKind::NtkRelu;
  throw std::invalid_argument("unknown kernel kind: " + s);
}

struct HyperParams {
  double sigma_w2 = 1.0;
  double sigma_b2 = 0.0;
  int d0 = 1;
  double sigma_a2 = 1.0;  // readout scale, consumed only by the data-aware GP kernel

  void validate() const {
    if (!(sigma_w2 > 0.0)) throw std::invalid_argument("HyperParams: sigma_w2 must be > 0");
    if (sigma_b2 < 0.0) throw std::invalid_argument("HyperParams: sigma_b2 must be >= 0");
    if (d0 < 1) throw std::invalid_argument("HyperParams: d0 must be >= 1");
    if (!(sigma_a2 > 0.0)) throw std::invalid_argument("HyperParams: sigma_a2 must be > 0");
  }
};

struct Gram {
  Eigen::MatrixXd values;      // N x N, exactly symmetric
  std::vector<int> partition;  // class sizes, blocks in column order
  KernelKind kind = KernelKind::Linear;
  HyperParams hyper;
};

// thrown when a ReLU-form kernel meets a zero-norm input at sigma_b2 = 0;
// column is the offending dataset column, or -1 for scalar evaluation
struct degenerate_input_error : std::runtime_error {
  int column;
  explicit degenerate_input_error(const std::string& what, int col = -1)
      : std::runtime_error(what), column(col) {}
};

namespace detail {

// clamp an inverse-trig argument into [-1, 1]; anything beyond roundoff is a bug upstream
inline double clamp_unit(double v) {
  if (std::abs(v) > 1.0 + 1e-12)
    throw std::domain_error("kernel correlation out of [-1,1]: " + fmt17(v));
  return std::min(1.0, std::max(-1.0, v));
}

inline double erf_q(double kxx, double kxy, double kyy) {
  double u = clamp_unit(2.0 * kxy / std::sqrt((1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy)));
  return (2.0 / M_PI) * std::asin(u);
}

inline double erf_qdot(double kxx, double kxy, double kyy) {
  double det = (1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy) - 4.0 * kxy * kxy;
  return (4.0 / M_PI) / std::sqrt(det);
}

inline double relu_theta(double kxx, double kxy, double kyy, int col = -1) {
  double denom = kxx * kyy;
  if (!(denom > 0.0))
    throw degenerate_input_error("ReLU kernel undefined on zero-norm input with sigma_b2 = 0",
                                 col);
  return std::acos(clamp_unit(kxy / std::sqrt(denom)));
}

inline double relu_q(double kxx, double kxy, double kyy, int col = -1) {
  double theta = relu_theta(kxx, kxy, kyy, col);
  return std::sqrt(kxx * kyy) * (std::sin(theta) + (M_PI - theta) * std::cos(theta)) /
         (2.0 * M_PI);
}

inline double relu_qdot(double kxx, double kxy, double kyy, int col = -1) {
  return (M_PI - relu_theta(kxx, kxy, kyy, col)) / (2.0 * M_PI);
}

}  // namespace detail

inline double pre_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const HyperParams& hyper) {
  if (x.size() != y.size() || x.size() != hyper.d0)
    throw std::invalid_argument("pre_kernel: dimension mismatch");
  return hyper.sigma_b2 + (hyper.sigma_w2 / hyper.d0) * x.dot(y);
}

inline double eval_kernel(KernelKind kind, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                          const HyperParams& hyper) {
  if (kind == KernelKind::Linear) {
    if (x.size() != y.size()) throw std::invalid_argument("eval_kernel: dimension mismatch");
    return x.dot(y);
  }
  double kxx = pre_kernel(x, x, hyper);
  double kxy = pre_kernel(x, y, hyper);
  double kyy = pre_kernel(y, y, hyper);
  switch (kind) {
    case KernelKind::NngpErf:
      return detail::erf_q(kxx, kxy, kyy);
    case KernelKind::NngpRelu:
      return detail::relu_q(kxx, kxy, kyy);
    case KernelKind::NtkErf:
      return hyper.sigma_b2 + hyper.sigma_w2 * detail::erf_q(kxx, kxy, kyy) +
             kxy * detail::erf_qdot(kxx, kxy, kyy);
    case KernelKind::NtkRelu:
      return hyper.sigma_b2 + hyper.sigma_w2 * detail::relu_q(kxx, kxy, kyy) +
             kxy * detail::relu_qdot(kxx, kxy, kyy);
    default:
      throw std::logic_error("unreachable kernel kind");
  }
}

inline double derivative_kernel(Activation act, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& y, const HyperParams& hyper) {
  double kxx = pre_kernel(x, x, hyper);
  double kxy = pre_kernel(x, y, hyper);
  double kyy = pre_kernel(y, y, hyper);
  return act == Activation::Erf ? detail::erf_qdot(kxx, kxy, kyy)
                                : detail::relu_qdot(kxx, kxy, kyy);
}

inline Gram assemble_gram(KernelKind kind, const Dataset& ds, const HyperParams& hyper,
                          int threads = 1) {
  if (ds.n() == 0) throw std::invalid_argument("assemble_gram: empty dataset");
  hyper.validate();
  if (kind != KernelKind::Linear && ds.dim() != hyper.d0)
    throw std::invalid_argument("assemble_gram: dataset dimension does not match hyper.d0");

  Gram g;
  g.partition = ds.partition;
  g.kind = kind;
  g.hyper = hyper;
  const int n = ds.n();

  if (kind == KernelKind::Linear) {
    g.values.noalias() = ds.x.transpose() * ds.x;
    g.values = ((g.values + g.values.transpose()) / 2.0).eval();
    return g;
  }

  // pre-activation Gram via one gemm, then entrywise closed forms
  Eigen::MatrixXd pre = (hyper.sigma_w2 / hyper.d0) * (ds.x.transpose() * ds.x);
  pre.array() += hyper.sigma_b2;
  Eigen::VectorXd diag = pre.diagonal();

  const bool relu_form = (kind == KernelKind::NngpRelu || kind == KernelKind::NtkRelu);
  if (relu_form)
    for (int i = 0; i < n; ++i)
      if (!(diag(i) > 0.0))
        throw degenerate_input_error("ReLU kernel undefined on zero-norm input with sigma_b2 = 0",
                                     i);

  g.values.resize(n, n);
  Eigen::MatrixXd& out = g.values;
  parallel_for(n, threads, [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      for (int j = i; j < n; ++j) {
        double kxx = diag(i), kxy = pre(i, j), kyy = diag(j);
        double v = 0.0;
        switch (kind) {
          case KernelKind::NngpErf:
            v = detail::erf_q(kxx, kxy, kyy);
            break;
          case KernelKind::NngpRelu:
            v = detail::relu_q(kxx, kxy, kyy, i);
            break;
          case KernelKind::NtkErf:
            v = hyper.sigma_b2 + hyper.sigma_w2 * detail::erf_q(kxx, kxy, kyy) +
                kxy * detail::erf_qdot(kxx, kxy, kyy);
            break;
          case KernelKind::NtkRelu:
            v = hyper.sigma_b2 + hyper.sigma_w2 * detail::relu_q(kxx, kxy, kyy, i) +
                kxy * detail::relu_qdot(kxx, kxy, kyy, i);
            break;
          default:
            break;
        }
        out(i, j) = v;
      }
    }
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) out(i, j) = out(j, i);
  return g;
}

// CSV matrix plus JSON sidecar (kind, hyper, partition)
inline void write_gram(const Gram& g, const std::string& stem) {
  write_matrix_csv(stem + ".csv", g.values);
  nlohmann::json j;
  j["kind"] = kernel_kind_name(g.kind);
  j["partition"] = g.partition;
  j["hyper"] = {{"sigma_w2", g.hyper.sigma_w2},
                {"sigma_b2", g.hyper.sigma_b2},
                {"d0", g.hyper.d0},
                {"sigma_a2", g.hyper.sigma_a2}};
  write_text_file(stem + ".json", j.dump(2) + "\n");
}

}  // namespace nck
