#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dataset.hpp"
#include "nc1.hpp"
#include "rng.hpp"

// Finite-width fully connected baseline: Gaussian init, forward pass,
// analytic backprop for the ridge-regularized MSE objective, full-batch
// gradient descent, and penultimate-feature extraction.

namespace nck {

struct FcnArch {
  std::vector<int> widths;  // d0, hidden..., 1
  Activation activation = Activation::Erf;
  double sigma_w2 = 1.0;
  double sigma_b2 = 0.0;

  int depth() const { return static_cast<int>(widths.size()) - 1; }

  void validate() const {
    if (depth() < 2 || depth() > 6)
      throw std::invalid_argument("FcnArch: depth must lie in {2..6}");
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("FcnArch: widths must be >= 1");
    if (widths.back() != 1) throw std::invalid_argument("FcnArch: output width must be 1");
    if (!(sigma_w2 > 0.0) || sigma_b2 < 0.0)
      throw std::invalid_argument("FcnArch: invalid variance scales");
  }
};

struct FcnModel {
  FcnArch arch;
  std::vector<Eigen::MatrixXd> w;  // w[l]: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> b;  // b[l]: widths[l+1]
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-6;
  int steps = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0.0) || weight_decay < 0.0 || steps < 1)
      throw std::invalid_argument("TrainConfig: invalid parameter");
  }
};

struct TrainTrace {
  std::vector<double> loss;       // objective before each update
  std::vector<double> sign_acc;   // fraction of sign(yhat) == sign(y)
  double final_nc1 = 0.0;         // penultimate-feature NC1 after the last step
  double final_log10_nc1 = 0.0;
};

struct fcn_divergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline FcnModel init_fcn(const FcnArch& arch, std::uint64_t seed) {
  arch.validate();
  FcnModel model;
  model.arch = arch;
  for (int l = 0; l < arch.depth(); ++l) {
    int rows = arch.widths[l + 1], cols = arch.widths[l];
    double wstd = std::sqrt(arch.sigma_w2 / cols);
    double bstd = std::sqrt(arch.sigma_b2);
    CounterRng wrng = CounterRng::from(seed, static_cast<std::uint64_t>(l), 0);
    CounterRng brng = CounterRng::from(seed, static_cast<std::uint64_t>(l), 1);
    Eigen::MatrixXd wm(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) wm(i, j) = wstd * wrng.next_normal();
    Eigen::VectorXd bv(rows);
    for (int i = 0; i < rows; ++i) bv(i) = bstd * brng.next_normal();
    model.w.push_back(std::move(wm));
    model.b.push_back(std::move(bv));
  }
  return model;
}

namespace detail {

inline Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::Erf)
    return z.unaryExpr([](double v) { return std::erf(v); });
  return z.cwiseMax(0.0);
}

inline Eigen::MatrixXd activate_grad(const Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::Erf)
    return ((2.0 / std::sqrt(M_PI)) * (-z.array().square()).exp()).matrix();
  return (z.array() > 0.0).cast<double>().matrix();
}

}  // namespace detail

struct FcnForward {
  std::vector<Eigen::MatrixXd> h;  // h[0] = X, h[l] = phi(z[l]) for hidden layers
  std::vector<Eigen::MatrixXd> z;  // pre-activations, z[l] for layer l+1
  Eigen::RowVectorXd yhat;
};

inline FcnForward forward(const FcnModel& model, const Eigen::MatrixXd& x) {
  if (x.rows() != model.arch.widths.front())
    throw std::invalid_argument("forward: input rows do not match d0");
  const int depth = model.arch.depth();
  FcnForward fw;
  fw.h.push_back(x);
  for (int l = 0; l < depth; ++l) {
    Eigen::MatrixXd z = model.w[l] * fw.h.back();
    z.colwise() += model.b[l];
    fw.z.push_back(z);
    if (l + 1 < depth)
      fw.h.push_back(detail::activate(z, model.arch.activation));
  }
  fw.yhat = fw.z.back().row(0);
  return fw;
}

struct FcnGrads {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
};

inline double loss_value(const FcnModel& model, const FcnForward& fw, const Eigen::VectorXd& y,
                         double lambda) {
  double data = (fw.yhat.transpose() - y).squaredNorm() / static_cast<double>(y.size());
  double reg = 0.0;
  for (size_t l = 0; l < model.w.size(); ++l)
    reg += model.w[l].squaredNorm() + model.b[l].squaredNorm();
  return data + lambda * reg;
}

// reverse-mode gradients for a forward pass already taken
inline FcnGrads backward(const FcnModel& model, const FcnForward& fw, const Eigen::VectorXd& y,
                         double lambda) {
  const int depth = model.arch.depth();
  const double n = static_cast<double>(y.size());
  FcnGrads grads;
  grads.dw.resize(depth);
  grads.db.resize(depth);
  Eigen::MatrixXd delta = (2.0 / n) * (fw.yhat.transpose() - y).transpose();  // 1 x N
  for (int l = depth - 1; l >= 0; --l) {
    grads.dw[l].noalias() = delta * fw.h[l].transpose();
    grads.dw[l] += 2.0 * lambda * model.w[l];
    grads.db[l] = delta.rowwise().sum() + 2.0 * lambda * model.b[l];
    if (l > 0)
      delta = (model.w[l].transpose() * delta)
                  .cwiseProduct(detail::activate_grad(fw.z[l - 1], model.arch.activation));
  }
  return grads;
}

inline std::pair<double, FcnGrads> loss_and_grad(const FcnModel& model, const Eigen::MatrixXd& x,
                                                 const Eigen::VectorXd& y, double lambda) {
  if (x.cols() != y.size()) throw std::invalid_argument("loss_and_grad: batch size mismatch");
  FcnForward fw = forward(model, x);
  return {loss_value(model, fw, y, lambda), backward(model, fw, y, lambda)};
}

inline Eigen::MatrixXd penultimate_features(const FcnModel& model, const Eigen::MatrixXd& x) {
  FcnForward fw = forward(model, x);
  return fw.h.back().transpose();  // sample-major N x d_{L-1}
}

inline double sign_accuracy(const Eigen::RowVectorXd& yhat, const Eigen::VectorXd& y) {
  int hits = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    int sh = yhat(i) > 0.0 ? 1 : (yhat(i) < 0.0 ? -1 : 0);
    int sy = y(i) > 0.0 ? 1 : (y(i) < 0.0 ? -1 : 0);
    hits += (sh == sy);
  }
  return hits / static_cast<double>(y.size());
}

// full-batch vanilla gradient descent on the ridge-regularized MSE
inline TrainTrace train(FcnModel& model, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  TrainTrace trace;
  trace.loss.reserve(cfg.steps);
  trace.sign_acc.reserve(cfg.steps);
  double initial_loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    FcnForward fw = forward(model, ds.x);
    double loss = loss_value(model, fw, ds.labels, cfg.weight_decay);
    if (step == 0) initial_loss = loss;
    if (!std::isfinite(loss) || (step > 0 && loss > 1e6 * initial_loss))
      throw fcn_divergence_error("training diverged at step " + std::to_string(step) +
                                 ": loss " + fmt17(loss));
    trace.loss.push_back(loss);
    trace.sign_acc.push_back(sign_accuracy(fw.yhat, ds.labels));
    FcnGrads grads = backward(model, fw, ds.labels, cfg.weight_decay);
    for (size_t l = 0; l < model.w.size(); ++l) {
      model.w[l] -= cfg.lr * grads.dw[l];
      model.b[l] -= cfg.lr * grads.db[l];
    }
  }
  Nc1Report rep = nc1_of_features(penultimate_features(model, ds.x), ds.partition);
  trace.final_nc1 = rep.nc1;
  trace.final_log10_nc1 = rep.log10_nc1;
  return trace;
}

}  // namespace nck
