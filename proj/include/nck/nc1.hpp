#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "io.hpp"
#include "json.hpp"
#include "kernels.hpp"

// Within/between-class variability traces and the NC1 ratio, computed either
// from a kernel Gram matrix (block averages) or from explicit features
// (class-weighted scatter decomposition). Both paths implement the same
// quantities and agree to roundoff, including imbalanced partitions.

namespace nck {

struct degenerate_between_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Nc1Report {
  double tr_within = 0.0;
  double tr_between = 0.0;
  double nc1 = 0.0;
  double log10_nc1 = 0.0;
  std::optional<double> nc1_data;       // NC1 of the raw inputs, for the relative metric
  std::optional<double> relative_nc1;
  double tau = 1e-8;

  // identification carried along for serialization
  std::string kind;
  int n = 0;
  int d0 = 0;
  std::vector<int> partition;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_partition(Eigen::Index n, const std::vector<int>& partition) {
  long total = 0;
  for (int c : partition) {
    if (c < 1) throw std::invalid_argument("partition entries must be >= 1");
    total += c;
  }
  if (total != static_cast<long>(n))
    throw std::invalid_argument("partition does not sum to matrix dimension");
}

}  // namespace detail

// (1/N) sum_i Q_ii - (1/C) sum_c mean over class block c
inline double trace_within(const Eigen::MatrixXd& q, const std::vector<int>& partition) {
  detail::check_partition(q.rows(), partition);
  const double n = static_cast<double>(q.rows());
  const double c_count = static_cast<double>(partition.size());
  double diag_term = q.trace() / n;
  double block_term = 0.0;
  int off = 0;
  for (int nc : partition) {
    block_term += q.block(off, off, nc, nc).sum() / (static_cast<double>(nc) * nc);
    off += nc;
  }
  return diag_term - block_term / c_count;
}

// (1/C) sum_c class-block mean - global mean of all entries
inline double trace_between(const Eigen::MatrixXd& q, const std::vector<int>& partition) {
  detail::check_partition(q.rows(), partition);
  const double n = static_cast<double>(q.rows());
  const double c_count = static_cast<double>(partition.size());
  double block_term = 0.0;
  int off = 0;
  for (int nc : partition) {
    block_term += q.block(off, off, nc, nc).sum() / (static_cast<double>(nc) * nc);
    off += nc;
  }
  return block_term / c_count - q.sum() / (n * n);
}

inline double trace_within(const Gram& g) { return trace_within(g.values, g.partition); }
inline double trace_between(const Gram& g) { return trace_between(g.values, g.partition); }

inline constexpr double kBetweenFloor = 1e-30;

namespace detail {

inline Nc1Report make_report(double tr_w, double tr_b) {
  if (tr_b <= kBetweenFloor)
    throw degenerate_between_error("between-class variance below degeneracy floor: " +
                                   fmt17(tr_b));
  Nc1Report r;
  r.tr_within = tr_w;
  r.tr_between = tr_b;
  r.nc1 = tr_w / tr_b;
  r.log10_nc1 = std::log10(r.nc1);
  return r;
}

}  // namespace detail

inline Nc1Report nc1_of_gram(const Gram& g) {
  Nc1Report r = detail::make_report(trace_within(g), trace_between(g));
  r.kind = kernel_kind_name(g.kind);
  r.n = static_cast<int>(g.values.rows());
  r.d0 = g.hyper.d0;
  r.partition = g.partition;
  return r;
}

// Features are sample-major: row i of h is sample i. With a_c = n_c/N - 1/C
// and v = sum_c a_c (m_c - g), the traces decompose around centered sums:
//   tr_within  = (1/N) sum_c sum_i |h_i - m_c|^2 + sum_c a_c |m_c - g|^2 + 2 <v, g>
//   tr_between = (1/C) sum_c |m_c - g|^2 - 2 <v, g>
// with m_c the class sample means and g the global sample mean. For balanced
// partitions every a_c is exactly zero, so distant class means cannot leak
// roundoff into the correction terms; the imbalanced corrections reflect the
// genuine origin dependence of the definition. Equals the Gram path in exact
// arithmetic, for balanced and imbalanced partitions alike.
inline std::pair<double, double> feature_traces(const Eigen::MatrixXd& h,
                                                const std::vector<int>& partition) {
  detail::check_partition(h.rows(), partition);
  const int n = static_cast<int>(h.rows());
  const double c_count = static_cast<double>(partition.size());

  Eigen::RowVectorXd global = h.colwise().mean();
  Eigen::MatrixXd class_means(partition.size(), h.cols());
  double within_centered = 0.0;
  int off = 0;
  for (size_t c = 0; c < partition.size(); ++c) {
    int nc = partition[c];
    auto block = h.middleRows(off, nc);
    class_means.row(c) = block.colwise().mean();
    within_centered += (block.rowwise() - class_means.row(c)).squaredNorm();
    off += nc;
  }

  double tr_w = within_centered / n;
  double between_centered = 0.0;
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(h.cols());
  for (size_t c = 0; c < partition.size(); ++c) {
    double a = partition[c] / static_cast<double>(n) - 1.0 / c_count;
    Eigen::RowVectorXd centered = class_means.row(c) - global;
    tr_w += a * centered.squaredNorm();
    between_centered += centered.squaredNorm();
    v += a * centered;
  }
  double cross = 2.0 * v.dot(global);
  tr_w += cross;
  double tr_b = between_centered / c_count - cross;
  return {tr_w, tr_b};
}

inline Nc1Report nc1_of_features(const Eigen::MatrixXd& h, const std::vector<int>& partition) {
  auto [tr_w, tr_b] = feature_traces(h, partition);
  const int n = static_cast<int>(h.rows());
  Nc1Report r = detail::make_report(tr_w, tr_b);
  r.kind = "features";
  r.n = n;
  r.d0 = static_cast<int>(h.cols());
  r.partition = partition;
  return r;
}

inline double nc1_of_data(const Dataset& ds) {
  return nc1_of_features(ds.x.transpose(), ds.partition).nc1;
}

// NC1 of the gram relative to the NC1 of the raw inputs
inline double relative_nc1(const Gram& g, const Dataset& ds, double tau = 1e-8) {
  if (!(tau > 0.0)) throw std::invalid_argument("relative_nc1: tau must be > 0");
  return nc1_of_gram(g).nc1 / (nc1_of_data(ds) + tau);
}

inline nlohmann::json nc1_report_json(const Nc1Report& r) {
  nlohmann::json j;
  j["kind"] = r.kind;
  j["N"] = r.n;
  j["d0"] = r.d0;
  j["partition"] = r.partition;
  j["seed"] = r.seed;
  j["tr_within"] = r.tr_within;
  j["tr_between"] = r.tr_between;
  j["nc1"] = r.nc1;
  j["log10_nc1"] = r.log10_nc1;
  j["nc1_data"] = r.nc1_data ? nlohmann::json(*r.nc1_data) : nlohmann::json(nullptr);
  j["relative_nc1"] =
      r.relative_nc1 ? nlohmann::json(*r.relative_nc1) : nlohmann::json(nullptr);
  return j;
}

}  // namespace nck
