#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "eos.hpp"
#include "fcn.hpp"
#include "io.hpp"
#include "json.hpp"
#include "kernels.hpp"
#include "nc1.hpp"
#include "rng.hpp"

// (N, d0) sweeps of the NC1 metric across kernel, EoS, and finite-width
// methods, with per-record failure capture and CSV/JSON/SVG emission.

namespace nck {

struct Method {
  enum class Type { Kernel, Eos, Fcn };
  std::string name;  // verbatim token, used in filenames and records
  Type type = Type::Kernel;
  KernelKind kind = KernelKind::Linear;
  int eos_target = 500;
  Activation fcn_act = Activation::Erf;
};

// tokens: nngp-erf | nngp-relu | ntk-erf | ntk-relu | linear | eos:<d1> | fcn:erf | fcn:relu
inline Method parse_method(const std::string& token) {
  Method m;
  m.name = token;
  if (token.rfind("eos:", 0) == 0) {
    m.type = Method::Type::Eos;
    m.eos_target = std::stoi(token.substr(4));
    if (m.eos_target < 1) throw std::invalid_argument("method: bad EoS target in " + token);
    return m;
  }
  if (token == "fcn:erf" || token == "fcn:relu") {
    m.type = Method::Type::Fcn;
    m.fcn_act = token == "fcn:erf" ? Activation::Erf : Activation::Relu;
    return m;
  }
  m.type = Method::Type::Kernel;
  m.kind = parse_kernel_kind(token);
  return m;
}

struct SweepConfig {
  std::string preset = "d1";       // d1 | d2 | custom
  double mean_scale = 2.0;         // d1 preset: class means at -/+ mean_scale
  double stddev = 0.5;             // d1 preset class noise
  std::vector<double> fractions;   // class fractions; empty = balanced
  std::vector<double> custom_means, custom_stddevs, custom_labels;  // custom preset

  std::vector<int> n_grid{1024};
  std::vector<int> d0_grid{1};
  int seeds = 1;
  std::uint64_t master_seed = 0;
  std::vector<std::string> methods{"nngp-erf"};

  double sigma_w2 = 1.0;
  double sigma_b2 = 0.0;
  double sigma_a2 = 1.0 / 128.0;
  double eos_sigma2 = 1e-3;
  SolverConfig eos_solver;

  int fcn_width = 500;
  int fcn_depth = 2;
  double fcn_lr = 0.0;        // 0 = activation default (1e-3 erf, 1e-4 relu)
  double fcn_weight_decay = 1e-6;
  int fcn_steps = 1000;

  double tau = 1e-8;
  int threads = 1;

  void validate() const {
    if (n_grid.empty() || d0_grid.empty()) throw std::invalid_argument("sweep: empty grid");
    if (seeds < 1) throw std::invalid_argument("sweep: seeds must be >= 1");
    if (methods.empty()) throw std::invalid_argument("sweep: no methods");
    for (const auto& t : methods) parse_method(t);
    if (preset != "d1" && preset != "d2" && preset != "custom")
      throw std::invalid_argument("sweep: unknown preset " + preset);
  }
};

struct SweepRecord {
  std::string method;
  int n = 0, d0 = 0;
  std::uint64_t seed = 0;       // dataset seed, shared by all methods of a cell draw
  std::string status;           // ok | degenerate | non-converged | error
  std::string message;
  Nc1Report report;
  double seconds = 0.0;
};

struct CellStat {
  std::string method;
  int n = 0, d0 = 0;
  int count_ok = 0, count_total = 0;
  double mean_log10_nc1 = std::numeric_limits<double>::quiet_NaN();
  double std_log10_nc1 = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  SweepConfig config;
  std::vector<SweepRecord> records;
  double total_seconds = 0.0;
};

inline Dataset sweep_dataset(const SweepConfig& cfg, int n, int d0, std::uint64_t seed) {
  MixtureSpec spec;
  spec.d0 = d0;
  if (cfg.preset == "d1") {
    spec.classes = {{-cfg.mean_scale, cfg.stddev, n / 2, -1.0},
                    {cfg.mean_scale, cfg.stddev, n - n / 2, 1.0}};
  } else if (cfg.preset == "d2") {
    if (n % 4 != 0) throw std::invalid_argument("sweep: d2 preset needs N divisible by 4");
    spec.classes = {{-6.0, 0.5, n / 4, -3.0},
                    {-2.0, 0.5, n / 4, -1.0},
                    {2.0, 0.5, n / 4, 1.0},
                    {6.0, 0.5, n / 4, 3.0}};
  } else {
    if (cfg.custom_means.size() != cfg.custom_stddevs.size() ||
        cfg.custom_means.size() != cfg.custom_labels.size() || cfg.custom_means.empty())
      throw std::invalid_argument("sweep: custom preset needs means/stddevs/labels");
    int assigned = 0;
    for (size_t c = 0; c < cfg.custom_means.size(); ++c) {
      int cnt = n / static_cast<int>(cfg.custom_means.size());
      if (c + 1 == cfg.custom_means.size()) cnt = n - assigned;
      assigned += cnt;
      spec.classes.push_back(
          {cfg.custom_means[c], cfg.custom_stddevs[c], cnt, cfg.custom_labels[c]});
    }
  }
  if (!cfg.fractions.empty()) {
    if (cfg.fractions.size() != spec.classes.size())
      throw std::invalid_argument("sweep: fractions do not match class count");
    int assigned = 0;
    for (size_t c = 0; c < spec.classes.size(); ++c) {
      int cnt = c + 1 == spec.classes.size()
                    ? n - assigned
                    : static_cast<int>(std::lround(cfg.fractions[c] * n));
      spec.classes[c].count = cnt;
      assigned += cnt;
    }
  }
  return sample_gaussian_mixture(spec, seed);
}

namespace detail {

inline void fill_record(const SweepConfig& cfg, const Method& method, const Dataset& ds,
                        SweepRecord& rec) {
  HyperParams hyper;
  hyper.sigma_w2 = cfg.sigma_w2;
  hyper.sigma_b2 = cfg.sigma_b2;
  hyper.sigma_a2 = cfg.sigma_a2;
  hyper.d0 = ds.dim();

  Nc1Report rep;
  if (method.type == Method::Type::Kernel) {
    rep = nc1_of_gram(assemble_gram(method.kind, ds, hyper));
  } else if (method.type == Method::Type::Eos) {
    EosState st = solve_eos(ds, hyper, cfg.eos_sigma2, default_schedule(method.eos_target),
                            cfg.eos_solver);
    Gram g;
    g.values = std::move(st.q);
    g.partition = ds.partition;
    g.kind = KernelKind::NngpErf;
    g.hyper = hyper;
    rep = nc1_of_gram(g);
    rep.kind = method.name;
  } else {
    FcnArch arch;
    arch.widths.push_back(ds.dim());
    for (int l = 1; l < cfg.fcn_depth; ++l) arch.widths.push_back(cfg.fcn_width);
    arch.widths.push_back(1);
    arch.activation = method.fcn_act;
    arch.sigma_w2 = cfg.sigma_w2;
    arch.sigma_b2 = cfg.sigma_b2;
    TrainConfig tcfg;
    tcfg.lr = cfg.fcn_lr > 0.0 ? cfg.fcn_lr
                               : (method.fcn_act == Activation::Erf ? 1e-3 : 1e-4);
    tcfg.weight_decay = cfg.fcn_weight_decay;
    tcfg.steps = cfg.fcn_steps;
    tcfg.seed = CounterRng::from(ds.seed, 0x66636eull).next_u64();  // model stream off the data seed
    FcnModel model = init_fcn(arch, tcfg.seed);
    train(model, ds, tcfg);
    rep = nc1_of_features(penultimate_features(model, ds.x), ds.partition);
    rep.kind = method.name;
  }
  double data_nc1 = nc1_of_data(ds);
  rep.nc1_data = data_nc1;
  rep.relative_nc1 = rep.nc1 / (data_nc1 + cfg.tau);
  rep.seed = ds.seed;
  rep.n = ds.n();
  rep.d0 = ds.dim();
  rep.partition = ds.partition;
  rec.report = std::move(rep);
  rec.status = "ok";
}

}  // namespace detail

inline SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<Method> methods;
  for (const auto& t : cfg.methods) methods.push_back(parse_method(t));

  SweepResult result;
  result.config = cfg;
  const int cells =
      static_cast<int>(cfg.n_grid.size() * cfg.d0_grid.size()) * cfg.seeds;
  result.records.resize(static_cast<size_t>(cells) * methods.size());

  auto t0 = std::chrono::steady_clock::now();
  parallel_for(cells, cfg.threads, [&](int begin, int end) {
    for (int task = begin; task < end; ++task) {
      int s = task % cfg.seeds;
      int cell = task / cfg.seeds;
      int id0 = cell % static_cast<int>(cfg.d0_grid.size());
      int in = cell / static_cast<int>(cfg.d0_grid.size());
      const int n = cfg.n_grid[in], d0 = cfg.d0_grid[id0];
      std::uint64_t data_seed =
          CounterRng::from(cfg.master_seed, in, id0, static_cast<std::uint64_t>(s)).next_u64();

      Dataset ds;
      std::string gen_error;
      try {
        ds = sweep_dataset(cfg, n, d0, data_seed);
      } catch (const std::exception& e) {
        gen_error = e.what();
      }

      for (size_t mi = 0; mi < methods.size(); ++mi) {
        SweepRecord& rec = result.records[static_cast<size_t>(task) * methods.size() + mi];
        rec.method = methods[mi].name;
        rec.n = n;
        rec.d0 = d0;
        rec.seed = data_seed;
        auto r0 = std::chrono::steady_clock::now();
        if (!gen_error.empty()) {
          rec.status = "error";
          rec.message = gen_error;
          continue;
        }
        try {
          detail::fill_record(cfg, methods[mi], ds, rec);
        } catch (const degenerate_between_error& e) {
          rec.status = "degenerate";
          rec.message = e.what();
        } catch (const eos_convergence_error& e) {
          rec.status = "non-converged";
          rec.message = e.what();
        } catch (const std::exception& e) {
          rec.status = "error";
          rec.message = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count();
      }
    }
  });
  result.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

inline std::vector<CellStat> aggregate_cells(const SweepResult& result) {
  std::vector<CellStat> stats;
  for (const auto& mt : result.config.methods)
    for (int n : result.config.n_grid)
      for (int d0 : result.config.d0_grid) {
        CellStat cs;
        cs.method = mt;
        cs.n = n;
        cs.d0 = d0;
        std::vector<double> vals;
        for (const auto& rec : result.records) {
          if (rec.method != mt || rec.n != n || rec.d0 != d0) continue;
          ++cs.count_total;
          if (rec.status == "ok") {
            ++cs.count_ok;
            vals.push_back(rec.report.log10_nc1);
          }
        }
        if (!vals.empty()) {
          double mean = 0.0;
          for (double v : vals) mean += v;
          mean /= static_cast<double>(vals.size());
          double var = 0.0;
          for (double v : vals) var += (v - mean) * (v - mean);
          cs.mean_log10_nc1 = mean;
          cs.std_log10_nc1 =
              vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
        }
        stats.push_back(std::move(cs));
      }
  return stats;
}

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

// fixed 11-stop colormap over log10 NC1 in [-3.5, 0.5]
inline std::string heat_color(double v) {
  static const double stops[11][3] = {
      {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
      {0.207, 0.372, 0.553}, {0.164, 0.471, 0.558}, {0.128, 0.567, 0.551},
      {0.135, 0.659, 0.518}, {0.267, 0.749, 0.441}, {0.478, 0.821, 0.318},
      {0.741, 0.873, 0.150}, {0.993, 0.906, 0.144}};
  if (std::isnan(v)) return "#BBBBBB";
  double t = (v + 3.5) / 4.0;
  t = std::min(1.0, std::max(0.0, t));
  double pos = t * 10.0;
  int lo = std::min(9, static_cast<int>(pos));
  double f = pos - lo;
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02X%02X%02X",
                static_cast<int>(255.0 * (stops[lo][0] + f * (stops[lo + 1][0] - stops[lo][0]))),
                static_cast<int>(255.0 * (stops[lo][1] + f * (stops[lo + 1][1] - stops[lo][1]))),
                static_cast<int>(255.0 * (stops[lo][2] + f * (stops[lo + 1][2] - stops[lo][2]))));
  return buf;
}

inline void write_heatmap_svg(const std::string& path, const std::string& method,
                              const std::vector<int>& n_grid, const std::vector<int>& d0_grid,
                              const Eigen::MatrixXd& grid) {
  const int cell = 64, left = 70, top = 50;
  int wpx = left + cell * static_cast<int>(d0_grid.size()) + 20;
  int hpx = top + cell * static_cast<int>(n_grid.size()) + 20;
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(wpx) +
       "\" height=\"" + std::to_string(hpx) + "\" font-family=\"sans-serif\">\n";
  s += "<text x=\"" + std::to_string(left) + "\" y=\"20\" font-size=\"14\">log10 NC1, " +
       method + "</text>\n";
  for (size_t j = 0; j < d0_grid.size(); ++j)
    s += "<text x=\"" + std::to_string(left + static_cast<int>(j) * cell + cell / 2) +
         "\" y=\"" + std::to_string(top - 8) +
         "\" font-size=\"12\" text-anchor=\"middle\">d0=" + std::to_string(d0_grid[j]) +
         "</text>\n";
  for (size_t i = 0; i < n_grid.size(); ++i) {
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" +
         std::to_string(top + static_cast<int>(i) * cell + cell / 2 + 4) +
         "\" font-size=\"12\" text-anchor=\"end\">N=" + std::to_string(n_grid[i]) + "</text>\n";
    for (size_t j = 0; j < d0_grid.size(); ++j) {
      double v = grid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      int x = left + static_cast<int>(j) * cell, y = top + static_cast<int>(i) * cell;
      s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
           std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
           heat_color(v) + "\" stroke=\"white\"/>\n";
      char label[32];
      if (std::isnan(v))
        std::snprintf(label, sizeof(label), "n/a");
      else
        std::snprintf(label, sizeof(label), "%.2f", v);
      s += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
           std::to_string(y + cell / 2 + 4) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"white\">" + label + "</text>\n";
    }
  }
  s += "</svg>\n";
  write_text_file(path, s);
}

}  // namespace detail

inline nlohmann::json sweep_summary_json(const SweepResult& result) {
  nlohmann::json j;
  j["schema"] = "nck-sweep-summary/1";
  const SweepConfig& cfg = result.config;
  j["config"] = {{"preset", cfg.preset},
                 {"mean_scale", cfg.mean_scale},
                 {"stddev", cfg.stddev},
                 {"fractions", cfg.fractions},
                 {"n_grid", cfg.n_grid},
                 {"d0_grid", cfg.d0_grid},
                 {"seeds", cfg.seeds},
                 {"master_seed", cfg.master_seed},
                 {"methods", cfg.methods},
                 {"sigma_w2", cfg.sigma_w2},
                 {"sigma_b2", cfg.sigma_b2},
                 {"sigma_a2", cfg.sigma_a2},
                 {"eos_sigma2", cfg.eos_sigma2},
                 {"fcn_width", cfg.fcn_width},
                 {"fcn_depth", cfg.fcn_depth},
                 {"fcn_lr", cfg.fcn_lr},
                 {"fcn_steps", cfg.fcn_steps},
                 {"tau", cfg.tau}};
  int ok = 0;
  for (const auto& r : result.records) ok += r.status == "ok";
  j["records_total"] = result.records.size();
  j["records_ok"] = ok;
  j["total_seconds"] = result.total_seconds;
  j["cells"] = nlohmann::json::array();
  for (const auto& cs : aggregate_cells(result)) {
    nlohmann::json c;
    c["method"] = cs.method;
    c["N"] = cs.n;
    c["d0"] = cs.d0;
    c["count_ok"] = cs.count_ok;
    c["count_total"] = cs.count_total;
    c["mean_log10_nc1"] =
        std::isnan(cs.mean_log10_nc1) ? nlohmann::json(nullptr) : nlohmann::json(cs.mean_log10_nc1);
    c["std_log10_nc1"] =
        std::isnan(cs.std_log10_nc1) ? nlohmann::json(nullptr) : nlohmann::json(cs.std_log10_nc1);
    j["cells"].push_back(std::move(c));
  }
  return j;
}

inline void emit_outputs(const SweepResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string base = dir.empty() ? std::string(".") : dir;

  std::string csv =
      "method,N,d0,seed,status,tr_within,tr_between,nc1,log10_nc1,nc1_data,relative_nc1,message\n";
  for (const auto& rec : result.records) {
    csv += rec.method + ',' + std::to_string(rec.n) + ',' + std::to_string(rec.d0) + ',' +
           std::to_string(rec.seed) + ',' + rec.status + ',';
    if (rec.status == "ok") {
      csv += fmt17(rec.report.tr_within) + ',' + fmt17(rec.report.tr_between) + ',' +
             fmt17(rec.report.nc1) + ',' + fmt17(rec.report.log10_nc1) + ',' +
             fmt17(rec.report.nc1_data.value_or(std::numeric_limits<double>::quiet_NaN())) + ',' +
             fmt17(rec.report.relative_nc1.value_or(std::numeric_limits<double>::quiet_NaN()));
    } else {
      csv += ",,,,,";
    }
    csv += ',' + detail::csv_safe(rec.message) + '\n';
  }
  write_text_file(base + "/records.csv", csv);

  std::vector<CellStat> stats = aggregate_cells(result);
  for (const auto& mt : result.config.methods) {
    Eigen::MatrixXd grid(result.config.n_grid.size(), result.config.d0_grid.size());
    grid.setConstant(std::numeric_limits<double>::quiet_NaN());
    for (const auto& cs : stats) {
      if (cs.method != mt) continue;
      auto in = std::find(result.config.n_grid.begin(), result.config.n_grid.end(), cs.n) -
                result.config.n_grid.begin();
      auto id0 = std::find(result.config.d0_grid.begin(), result.config.d0_grid.end(), cs.d0) -
                 result.config.d0_grid.begin();
      grid(in, id0) = cs.mean_log10_nc1;
    }
    std::string tag = mt;
    for (char& c : tag)
      if (c == ':') c = '_';
    write_matrix_csv(base + "/heatmap_" + tag + ".csv", grid);
    detail::write_heatmap_svg(base + "/heatmap_" + tag + ".svg", mt, result.config.n_grid,
                              result.config.d0_grid, grid);
  }

  write_text_file(base + "/summary.json", sweep_summary_json(result).dump(2) + "\n");
}

}  // namespace nck
