#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "io.hpp"
#include "json.hpp"
#include "rng.hpp"

// Isotropic Gaussian mixture generators. Samples are stored column-wise in
// an organized layout: all columns of class 1 first, then class 2, and so
// on, so kernel Gram matrices inherit a clean class-block structure.

namespace nck {

struct ClassSpec {
  double mean_scale = 0.0;  // mean vector is mean_scale * ones(d0)
  double stddev = 1.0;
  int count = 0;
  double label = 0.0;
};

struct MixtureSpec {
  std::vector<ClassSpec> classes;
  int d0 = 1;

  void validate() const {
    if (d0 < 1) throw std::invalid_argument("MixtureSpec: d0 must be >= 1");
    if (classes.empty()) throw std::invalid_argument("MixtureSpec: no classes");
    for (const auto& c : classes) {
      if (c.count < 1) throw std::invalid_argument("MixtureSpec: class count must be >= 1");
      if (!(c.stddev > 0.0)) throw std::invalid_argument("MixtureSpec: stddev must be > 0");
    }
    for (size_t i = 0; i < classes.size(); ++i)
      for (size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i].label == classes[j].label)
          throw std::invalid_argument("MixtureSpec: class labels must be distinct");
  }
};

struct Dataset {
  Eigen::MatrixXd x;            // d0 x N, columns grouped by class
  Eigen::VectorXd labels;       // length N
  std::vector<int> partition;   // class sizes
  std::vector<double> mean_scale, stddev, class_label;  // per-class metadata
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(x.cols()); }
  int dim() const { return static_cast<int>(x.rows()); }
  int num_classes() const { return static_cast<int>(partition.size()); }
  int class_begin(int c) const {
    return std::accumulate(partition.begin(), partition.begin() + c, 0);
  }
};

inline Dataset sample_gaussian_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  int n = 0;
  for (const auto& c : spec.classes) n += c.count;
  Dataset ds;
  ds.x.resize(spec.d0, n);
  ds.labels.resize(n);
  ds.seed = seed;
  int col = 0;
  for (size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cs = spec.classes[c];
    // one stream per class keeps parallel replays order-independent
    CounterRng rng = CounterRng::from(seed, static_cast<std::uint64_t>(c));
    for (int j = 0; j < cs.count; ++j, ++col) {
      for (int k = 0; k < spec.d0; ++k)
        ds.x(k, col) = cs.mean_scale + cs.stddev * rng.next_normal();
      ds.labels(col) = cs.label;
    }
    ds.partition.push_back(cs.count);
    ds.mean_scale.push_back(cs.mean_scale);
    ds.stddev.push_back(cs.stddev);
    ds.class_label.push_back(cs.label);
  }
  return ds;
}

// balanced two-class set: means -2 and +2 on the all-ones direction,
// std 0.5, labels -1 / +1
inline MixtureSpec d1_spec(int n, int d0, double stddev = 0.5) {
  if (n % 2 != 0) throw std::invalid_argument("two-class preset needs even N");
  MixtureSpec spec;
  spec.d0 = d0;
  spec.classes = {{-2.0, stddev, n / 2, -1.0}, {2.0, stddev, n / 2, 1.0}};
  return spec;
}

inline Dataset make_d1(int n, int d0, std::uint64_t seed) {
  return sample_gaussian_mixture(d1_spec(n, d0), seed);
}

// four balanced classes at -6, -2, +2, +6 with std 0.5 and labels -3,-1,1,3
inline Dataset make_d2(int n, int d0, std::uint64_t seed) {
  if (n % 4 != 0) throw std::invalid_argument("four-class preset needs N divisible by 4");
  MixtureSpec spec;
  spec.d0 = d0;
  spec.classes = {{-6.0, 0.5, n / 4, -3.0},
                  {-2.0, 0.5, n / 4, -1.0},
                  {2.0, 0.5, n / 4, 1.0},
                  {6.0, 0.5, n / 4, 3.0}};
  return sample_gaussian_mixture(spec, seed);
}

inline Dataset make_imbalanced(const std::vector<int>& class_sizes, const MixtureSpec& base,
                               std::uint64_t seed) {
  if (class_sizes.size() != base.classes.size())
    throw std::invalid_argument("make_imbalanced: size list does not match class count");
  MixtureSpec spec = base;
  for (size_t c = 0; c < class_sizes.size(); ++c) {
    if (class_sizes[c] < 1) throw std::invalid_argument("make_imbalanced: counts must be >= 1");
    spec.classes[c].count = class_sizes[c];
  }
  return sample_gaussian_mixture(spec, seed);
}

// serialization: <stem>.csv holds the d0 x N matrix, <stem>.json the metadata
inline void write_dataset(const Dataset& ds, const std::string& stem) {
  write_matrix_csv(stem + ".csv", ds.x);
  nlohmann::json j;
  j["n"] = ds.n();
  j["d0"] = ds.dim();
  j["partition"] = ds.partition;
  j["mean_scale"] = ds.mean_scale;
  j["stddev"] = ds.stddev;
  j["class_label"] = ds.class_label;
  j["seed"] = ds.seed;
  write_text_file(stem + ".json", j.dump(2) + "\n");
}

inline Dataset read_dataset(const std::string& stem) {
  Dataset ds;
  ds.x = read_matrix_csv(stem + ".csv");
  auto j = nlohmann::json::parse(read_text_file(stem + ".json"));
  ds.partition = j.at("partition").get<std::vector<int>>();
  ds.mean_scale = j.at("mean_scale").get<std::vector<double>>();
  ds.stddev = j.at("stddev").get<std::vector<double>>();
  ds.class_label = j.at("class_label").get<std::vector<double>>();
  ds.seed = j.at("seed").get<std::uint64_t>();
  int n = 0;
  ds.labels.resize(ds.x.cols());
  for (size_t c = 0; c < ds.partition.size(); ++c)
    for (int i = 0; i < ds.partition[c]; ++i) ds.labels(n++) = ds.class_label[c];
  if (n != ds.x.cols()) throw std::runtime_error("dataset header inconsistent with matrix");
  return ds;
}

}  // namespace nck
