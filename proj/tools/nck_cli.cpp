// command line front end: dataset generation, gram assembly, NC1 reports,
// (N, d0) sweeps, equation-of-state solves, finite-width training, and the
// verify oracle suites. Global flags: --config, --seed, --out, --threads.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nck/dataset.hpp"
#include "nck/eos.hpp"
#include "nck/fcn.hpp"
#include "nck/io.hpp"
#include "nck/kernels.hpp"
#include "nck/nc1.hpp"
#include "nck/predict.hpp"
#include "nck/sweep.hpp"
#include "nck/verify.hpp"

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 1;
  bool allow_partial = false;
};

struct DataOpts {
  std::string preset = "d1";
  int n = 1024;
  int d0 = 1;
  double mean_scale = 2.0;
  double stddev = 0.5;
  std::vector<double> fractions;
  std::vector<double> means, stddevs, labels;
  std::string load_stem;
};

void add_data_options(CLI::App* cmd, DataOpts& d) {
  cmd->add_option("--preset", d.preset, "dataset preset: d1 | d2 | custom")
      ->capture_default_str();
  cmd->add_option("--n", d.n, "sample count")->capture_default_str();
  cmd->add_option("--d0", d.d0, "input dimension")->capture_default_str();
  cmd->add_option("--mean-scale", d.mean_scale, "d1 preset: class means at -/+ this value")
      ->capture_default_str();
  cmd->add_option("--stddev", d.stddev, "d1 preset: class noise level")->capture_default_str();
  cmd->add_option("--fractions", d.fractions, "per-class sample fractions (imbalanced splits)")
      ->delimiter(',');
  cmd->add_option("--means", d.means, "custom preset: per-class mean scales")->delimiter(',');
  cmd->add_option("--stddevs", d.stddevs, "custom preset: per-class noise levels")
      ->delimiter(',');
  cmd->add_option("--labels", d.labels, "custom preset: per-class target labels")
      ->delimiter(',');
  cmd->add_option("--data", d.load_stem, "load a previously written dataset (path stem)");
}

nck::Dataset build_dataset(const DataOpts& d, std::uint64_t seed) {
  if (!d.load_stem.empty()) return nck::read_dataset(d.load_stem);
  nck::SweepConfig sc;
  sc.preset = d.preset;
  sc.mean_scale = d.mean_scale;
  sc.stddev = d.stddev;
  sc.fractions = d.fractions;
  sc.custom_means = d.means;
  sc.custom_stddevs = d.stddevs;
  sc.custom_labels = d.labels;
  return nck::sweep_dataset(sc, d.n, d.d0, seed);
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  std::filesystem::create_directories(g.out.empty() ? "." : g.out);
  return (g.out.empty() ? "." : g.out) + std::string("/") + name;
}

void print_json(const nlohmann::json& j) { std::printf("%s\n", j.dump(2).c_str()); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"within-class variability collapse of network-associated kernels"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for grams and sweep cells")
      ->capture_default_str();
  app.add_flag("--allow-partial", g.allow_partial,
               "exit 0 even if some records failed (failures still reported)");
  app.set_config("--config", "", "TOML config file; sections map to subcommands");

  int rc = 0;

  // gen: sample a dataset and write the CSV matrix + JSON header pair
  auto* gen = app.add_subcommand("gen", "generate a gaussian mixture dataset");
  DataOpts gen_d;
  add_data_options(gen, gen_d);
  std::string gen_name = "dataset";
  gen->add_option("--name", gen_name, "output file stem")->capture_default_str();
  gen->callback([&] {
    nck::Dataset ds = build_dataset(gen_d, g.seed);
    std::string stem = out_path(g, gen_name);
    nck::write_dataset(ds, stem);
    nlohmann::json j;
    j["n"] = ds.n();
    j["d0"] = ds.dim();
    j["partition"] = ds.partition;
    j["seed"] = ds.seed;
    j["files"] = {stem + ".csv", stem + ".json"};
    print_json(j);
  });

  // gram: assemble a kernel gram and write CSV + JSON sidecar
  auto* gram = app.add_subcommand("gram", "assemble a kernel gram matrix");
  DataOpts gram_d;
  add_data_options(gram, gram_d);
  std::string gram_kernel = "nngp-erf";
  double gram_sw2 = 1.0, gram_sb2 = 0.0;
  gram->add_option("--kernel", gram_kernel,
                   "linear | nngp-erf | nngp-relu | ntk-erf | ntk-relu")
      ->capture_default_str();
  gram->add_option("--sigma-w2", gram_sw2, "weight variance")->capture_default_str();
  gram->add_option("--sigma-b2", gram_sb2, "bias variance")->capture_default_str();
  gram->callback([&] {
    nck::Dataset ds = build_dataset(gram_d, g.seed);
    nck::HyperParams hyper;
    hyper.sigma_w2 = gram_sw2;
    hyper.sigma_b2 = gram_sb2;
    hyper.d0 = ds.dim();
    nck::Gram gm = nck::assemble_gram(nck::parse_kernel_kind(gram_kernel), ds, hyper,
                                      std::max(1, g.threads));
    std::string stem = out_path(g, "gram");
    nck::write_gram(gm, stem);
    nlohmann::json j;
    j["kind"] = gram_kernel;
    j["n"] = ds.n();
    j["files"] = {stem + ".csv", stem + ".json"};
    print_json(j);
  });

  // nc1: report from a gram file, a feature file, or dataset + kernel
  auto* nc1c = app.add_subcommand("nc1", "within/between trace report");
  DataOpts nc1_d;
  add_data_options(nc1c, nc1_d);
  std::string nc1_kernel = "nngp-erf", nc1_gram_stem, nc1_features;
  double nc1_sw2 = 1.0, nc1_sb2 = 0.0, nc1_tau = 1e-8;
  std::vector<int> nc1_partition;
  nc1c->add_option("--kernel", nc1_kernel, "kernel for the dataset path")
      ->capture_default_str();
  nc1c->add_option("--sigma-w2", nc1_sw2, "weight variance")->capture_default_str();
  nc1c->add_option("--sigma-b2", nc1_sb2, "bias variance")->capture_default_str();
  nc1c->add_option("--tau", nc1_tau, "relative-NC1 regularizer")->capture_default_str();
  nc1c->add_option("--gram", nc1_gram_stem, "gram file stem written by the gram subcommand");
  nc1c->add_option("--features", nc1_features, "feature CSV, one row per sample");
  nc1c->add_option("--partition", nc1_partition, "class sizes for --features")->delimiter(',');
  nc1c->callback([&] {
    nck::Nc1Report rep;
    if (!nc1_gram_stem.empty()) {
      nck::Gram gm;
      gm.values = nck::read_matrix_csv(nc1_gram_stem + ".csv");
      nlohmann::json side = nlohmann::json::parse(nck::read_text_file(nc1_gram_stem + ".json"));
      gm.partition = side["partition"].get<std::vector<int>>();
      gm.kind = nck::parse_kernel_kind(side["kind"].get<std::string>());
      gm.hyper.d0 = side["hyper"]["d0"].get<int>();
      rep = nck::nc1_of_gram(gm);
    } else if (!nc1_features.empty()) {
      if (nc1_partition.empty())
        throw CLI::ValidationError("nc1", "--features requires --partition");
      rep = nck::nc1_of_features(nck::read_matrix_csv(nc1_features), nc1_partition);
      rep.kind = "features";
    } else {
      nck::Dataset ds = build_dataset(nc1_d, g.seed);
      nck::HyperParams hyper;
      hyper.sigma_w2 = nc1_sw2;
      hyper.sigma_b2 = nc1_sb2;
      hyper.d0 = ds.dim();
      nck::Gram gm = nck::assemble_gram(nck::parse_kernel_kind(nc1_kernel), ds, hyper,
                                        std::max(1, g.threads));
      rep = nck::nc1_of_gram(gm);
      rep.nc1_data = nck::nc1_of_data(ds);
      rep.relative_nc1 = rep.nc1 / (*rep.nc1_data + nc1_tau);
      rep.seed = ds.seed;
    }
    nlohmann::json j = nck::nc1_report_json(rep);
    nck::write_text_file(out_path(g, "nc1.json"), j.dump(2) + "\n");
    print_json(j);
  });

  // sweep: grid of (method, N, d0, seed) records + aggregated artifacts
  auto* sweep = app.add_subcommand("sweep", "NC1 sweep over methods, N, d0, seeds");
  nck::SweepConfig sw;
  sweep->add_option("--preset", sw.preset, "d1 | d2 | custom")->capture_default_str();
  sweep->add_option("--mean-scale", sw.mean_scale, "d1 preset mean scale")
      ->capture_default_str();
  sweep->add_option("--stddev", sw.stddev, "d1 preset noise level")->capture_default_str();
  sweep->add_option("--fractions", sw.fractions, "per-class fractions")->delimiter(',');
  sweep->add_option("--means", sw.custom_means, "custom preset mean scales")->delimiter(',');
  sweep->add_option("--stddevs", sw.custom_stddevs, "custom preset noise levels")
      ->delimiter(',');
  sweep->add_option("--labels", sw.custom_labels, "custom preset labels")->delimiter(',');
  sweep->add_option("--n", sw.n_grid, "N grid")->delimiter(',');
  sweep->add_option("--d0", sw.d0_grid, "d0 grid")->delimiter(',');
  sweep->add_option("--seeds", sw.seeds, "dataset draws per cell")->capture_default_str();
  sweep->add_option("--methods", sw.methods,
                    "kernel tokens, eos:<d1>, fcn:erf, fcn:relu")
      ->delimiter(',');
  sweep->add_option("--sigma-w2", sw.sigma_w2, "weight variance")->capture_default_str();
  sweep->add_option("--sigma-b2", sw.sigma_b2, "bias variance")->capture_default_str();
  sweep->add_option("--sigma-a2", sw.sigma_a2, "readout variance for EoS")
      ->capture_default_str();
  sweep->add_option("--eos-sigma2", sw.eos_sigma2, "EoS ridge regularizer")
      ->capture_default_str();
  sweep->add_option("--eos-tol", sw.eos_solver.tol, "EoS residual tolerance")
      ->capture_default_str();
  sweep->add_option("--fcn-width", sw.fcn_width, "hidden width")->capture_default_str();
  sweep->add_option("--fcn-depth", sw.fcn_depth, "layer count")->capture_default_str();
  sweep->add_option("--fcn-lr", sw.fcn_lr, "learning rate, 0 = activation default")
      ->capture_default_str();
  sweep->add_option("--fcn-weight-decay", sw.fcn_weight_decay, "ridge penalty")
      ->capture_default_str();
  sweep->add_option("--fcn-steps", sw.fcn_steps, "training steps")->capture_default_str();
  sweep->add_option("--tau", sw.tau, "relative-NC1 regularizer")->capture_default_str();
  sweep->callback([&] {
    sw.master_seed = g.seed;
    sw.threads = std::max(1, g.threads);
    nck::SweepResult res = nck::run_sweep(sw);
    nck::emit_outputs(res, g.out);
    int ok = 0;
    for (const auto& rec : res.records) {
      if (rec.status == "ok")
        ++ok;
      else
        std::fprintf(stderr, "[%s] %s N=%d d0=%d seed=%llu: %s\n", rec.status.c_str(),
                     rec.method.c_str(), rec.n, rec.d0,
                     static_cast<unsigned long long>(rec.seed), rec.message.c_str());
    }
    std::printf("records: %d ok / %zu total in %.1fs -> %s\n", ok, res.records.size(),
                res.total_seconds, g.out.c_str());
    for (const auto& cs : nck::aggregate_cells(res))
      std::printf("  %-12s N=%-5d d0=%-4d mean log10 NC1 = %9.4f (std %.4f, %d/%d ok)\n",
                  cs.method.c_str(), cs.n, cs.d0, cs.mean_log10_nc1, cs.std_log10_nc1,
                  cs.count_ok, cs.count_total);
    if (ok != static_cast<int>(res.records.size()) && !g.allow_partial) rc = 1;
  });

  // eos: anneal the state equations on one dataset
  auto* eos = app.add_subcommand("eos", "solve the kernel equations of state");
  DataOpts eos_d;
  add_data_options(eos, eos_d);
  int eos_target = 500;
  double eos_sw2 = 1.0, eos_sa2 = 1.0 / 128.0, eos_sigma2 = 1e-3;
  std::vector<double> eos_schedule;
  nck::SolverConfig eos_cfg;
  eos->add_option("--target-d1", eos_target, "annealing target width")->capture_default_str();
  eos->add_option("--sigma-w2", eos_sw2, "weight variance")->capture_default_str();
  eos->add_option("--sigma-a2", eos_sa2, "readout variance")->capture_default_str();
  eos->add_option("--sigma2", eos_sigma2, "ridge regularizer")
      ->capture_default_str();
  eos->add_option("--schedule", eos_schedule, "explicit annealing factors, overrides target")
      ->delimiter(',');
  eos->add_option("--tol", eos_cfg.tol, "residual tolerance")->capture_default_str();
  eos->add_option("--max-newton", eos_cfg.max_newton, "Newton cap per factor")
      ->capture_default_str();
  eos->callback([&] {
    nck::Dataset ds = build_dataset(eos_d, g.seed);
    nck::HyperParams hyper;
    hyper.sigma_w2 = eos_sw2;
    hyper.sigma_a2 = eos_sa2;
    hyper.d0 = ds.dim();
    nck::AnnealSchedule sched =
        eos_schedule.empty() ? nck::default_schedule(eos_target) : eos_schedule;
    nck::EosState st = nck::solve_eos(ds, hyper, eos_sigma2, sched, eos_cfg);
    nck::write_matrix_csv(out_path(g, "c.csv"), st.c);
    nck::write_matrix_csv(out_path(g, "q.csv"), st.q);

    nck::Gram gm;
    gm.values = st.q;
    gm.partition = ds.partition;
    gm.hyper = hyper;
    nck::Nc1Report rep = nck::nc1_of_gram(gm);
    rep.kind = "eos:" + std::to_string(static_cast<long>(st.annealing_factor));
    rep.seed = ds.seed;
    rep.nc1_data = nck::nc1_of_data(ds);
    rep.relative_nc1 = rep.nc1 / (*rep.nc1_data + 1e-8);

    nlohmann::json j;
    j["annealing_factor"] = st.annealing_factor;
    j["residual_norm"] = st.residual_norm;
    j["nc1"] = nck::nc1_report_json(rep);
    j["factors"] = nlohmann::json::array();
    for (const auto& tr : st.history)
      j["factors"].push_back({{"factor", tr.factor},
                              {"newton_iters", tr.newton_iters},
                              {"picard_steps", tr.picard_steps},
                              {"pd_floored", tr.pd_floored},
                              {"residuals", tr.residuals}});
    nck::write_text_file(out_path(g, "eos.json"), j.dump(2) + "\n");
    std::printf("converged at factor %g, residual %.3e, log10 NC1 = %.4f\n",
                st.annealing_factor, st.residual_norm, rep.log10_nc1);
  });

  // train-fcn: finite-width baseline on one dataset
  auto* tf = app.add_subcommand("train-fcn", "train a fully connected baseline");
  DataOpts tf_d;
  add_data_options(tf, tf_d);
  int tf_depth = 2, tf_width = 500, tf_steps = 1000;
  std::string tf_act = "erf";
  double tf_lr = 0.0, tf_wd = 1e-6, tf_sw2 = 1.0, tf_sb2 = 0.0;
  tf->add_option("--depth", tf_depth, "layer count (2..6)")->capture_default_str();
  tf->add_option("--width", tf_width, "hidden width")->capture_default_str();
  tf->add_option("--activation", tf_act, "erf | relu")->capture_default_str();
  tf->add_option("--lr", tf_lr, "learning rate, 0 = activation default")
      ->capture_default_str();
  tf->add_option("--weight-decay", tf_wd, "ridge penalty")->capture_default_str();
  tf->add_option("--steps", tf_steps, "training steps")->capture_default_str();
  tf->add_option("--sigma-w2", tf_sw2, "init weight variance")->capture_default_str();
  tf->add_option("--sigma-b2", tf_sb2, "init bias variance")->capture_default_str();
  tf->callback([&] {
    nck::Dataset ds = build_dataset(tf_d, g.seed);
    nck::FcnArch arch;
    arch.activation = tf_act == "relu" ? nck::Activation::Relu : nck::Activation::Erf;
    arch.sigma_w2 = tf_sw2;
    arch.sigma_b2 = tf_sb2;
    arch.widths = {ds.dim()};
    for (int l = 1; l < tf_depth; ++l) arch.widths.push_back(tf_width);
    arch.widths.push_back(1);
    nck::TrainConfig cfg;
    cfg.lr = tf_lr > 0.0 ? tf_lr : (arch.activation == nck::Activation::Erf ? 1e-3 : 1e-4);
    cfg.weight_decay = tf_wd;
    cfg.steps = tf_steps;
    cfg.seed = nck::CounterRng::from(ds.seed, 0x66636eull).next_u64();
    nck::FcnModel model = nck::init_fcn(arch, cfg.seed);
    nck::TrainTrace trace = nck::train(model, ds, cfg);

    std::string csv = "step,loss,sign_accuracy\n";
    for (size_t s = 0; s < trace.loss.size(); ++s)
      csv += std::to_string(s) + ',' + nck::fmt17(trace.loss[s]) + ',' +
             nck::fmt17(trace.sign_acc[s]) + '\n';
    nck::write_text_file(out_path(g, "trace.csv"), csv);

    nck::Nc1Report rep = nck::nc1_of_features(nck::penultimate_features(model, ds.x),
                                              ds.partition);
    rep.kind = std::string("fcn:") + tf_act;
    rep.seed = ds.seed;
    rep.nc1_data = nck::nc1_of_data(ds);
    rep.relative_nc1 = rep.nc1 / (*rep.nc1_data + 1e-8);
    nck::write_text_file(out_path(g, "nc1.json"), nck::nc1_report_json(rep).dump(2) + "\n");
    std::printf("final loss %.6e, sign accuracy %.4f, log10 NC1 = %.4f\n", trace.loss.back(),
                trace.sign_acc.back(), rep.log10_nc1);
  });

  // verify: oracle suites with JSON comparison tables
  auto* ver = app.add_subcommand("verify", "run predictor/gradient oracle suites");
  std::vector<std::string> suites;
  ver->add_option("suites", suites,
                  "theorem1 | theorem2 | corollary1 | erf-cases | eos-gradient");
  ver->callback([&] {
    if (suites.empty())
      suites = {"theorem1", "theorem2", "corollary1", "erf-cases", "eos-gradient"};
    bool all_ok = true;
    for (const auto& s : suites) {
      nlohmann::json j = nck::run_verify(s, g.seed);
      nck::write_text_file(out_path(g, "verify_" + s + ".json"), j.dump(2) + "\n");
      print_json(j);
      all_ok = all_ok && j["pass"].get<bool>();
    }
    if (!all_ok && !g.allow_partial) rc = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
