#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include <nck/dataset.hpp>
#include <nck/fcn.hpp>
#include <nck/kernels.hpp>
#include <nck/nc1.hpp>

using namespace nck;

namespace {

FcnArch arch_of(std::vector<int> widths, Activation act = Activation::Erf) {
  FcnArch a;
  a.widths = std::move(widths);
  a.activation = act;
  return a;
}

double loss_of(FcnModel model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
               double lambda) {
  return loss_and_grad(model, x, y, lambda).first;
}

}  // namespace

TEST_CASE("initialization is seeded and scaled", "[fcn]") {
  FcnArch a = arch_of({1, 500, 1});
  FcnModel m1 = init_fcn(a, 11);
  FcnModel m2 = init_fcn(a, 11);
  REQUIRE(m1.w[0] == m2.w[0]);
  REQUIRE(m1.w[1] == m2.w[1]);
  FcnModel m3 = init_fcn(a, 12);
  REQUIRE(m1.w[0] != m3.w[0]);

  // second-layer entries are N(0, sigma_w2/500); n = 500 pins the sample
  // variance within 5 standard errors
  double var = m1.w[1].array().square().mean();
  double target = 1.0 / 500.0;
  REQUIRE(std::abs(var - target) <= 5.0 * target * std::sqrt(2.0 / 499.0));
  REQUIRE(m1.b[0].cwiseAbs().maxCoeff() == 0.0);

  FcnArch with_bias = a;
  with_bias.sigma_b2 = 0.25;
  FcnModel mb = init_fcn(with_bias, 11);
  REQUIRE(mb.b[0].cwiseAbs().maxCoeff() > 0.0);
  REQUIRE(mb.w[0] == m1.w[0]);  // bias stream is independent of the weight stream
}

TEST_CASE("architecture validation", "[fcn]") {
  REQUIRE_THROWS_AS(init_fcn(arch_of({2, 1}), 0), std::invalid_argument);
  REQUIRE_THROWS_AS(init_fcn(arch_of({2, 4, 4, 4, 4, 4, 4, 1}), 0), std::invalid_argument);
  REQUIRE_THROWS_AS(init_fcn(arch_of({2, 4, 2}), 0), std::invalid_argument);
  REQUIRE_THROWS_AS(init_fcn(arch_of({2, 0, 1}), 0), std::invalid_argument);
  FcnArch bad = arch_of({2, 4, 1});
  bad.sigma_w2 = 0.0;
  REQUIRE_THROWS_AS(init_fcn(bad, 0), std::invalid_argument);
  TrainConfig cfg;
  cfg.lr = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.steps = 0;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.weight_decay = -1e-9;
  REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero input and bias map to zero output", "[fcn]") {
  for (Activation act : {Activation::Erf, Activation::Relu}) {
    FcnModel m = init_fcn(arch_of({2, 8, 1}, act), 3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 5);
    FcnForward fw = forward(m, x);
    REQUIRE(fw.yhat.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("forward pass matches a hand computation", "[fcn]") {
  FcnModel m;
  m.arch = arch_of({1, 2, 1});
  m.w = {Eigen::MatrixXd(2, 1), Eigen::MatrixXd(1, 2)};
  m.w[0] << 1.0, -2.0;
  m.w[1] << 1.0, 2.0;
  m.b = {Eigen::Vector2d(0.5, -0.5), Eigen::VectorXd::Constant(1, 0.25)};
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(1, 1, 0.3);

  FcnForward fw = forward(m, x);
  REQUIRE(fw.z[0](0, 0) == Catch::Approx(0.8).epsilon(1e-15));
  REQUIRE(fw.z[0](1, 0) == Catch::Approx(-1.1).epsilon(1e-15));
  double want = std::erf(0.8) + 2.0 * std::erf(-1.1) + 0.25;
  REQUIRE(fw.yhat(0) == Catch::Approx(want).epsilon(1e-15));

  m.arch.activation = Activation::Relu;
  FcnForward fr = forward(m, x);
  REQUIRE(fr.yhat(0) == Catch::Approx(1.05).epsilon(1e-15));

  REQUIRE_THROWS_AS(forward(m, Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("batch shapes", "[fcn]") {
  FcnModel m = init_fcn(arch_of({3, 6, 1}), 5);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 10);
  FcnForward fw = forward(m, x);
  REQUIRE(fw.yhat.size() == 10);
  Eigen::MatrixXd feats = penultimate_features(m, x);
  REQUIRE(feats.rows() == 10);
  REQUIRE(feats.cols() == 6);
  REQUIRE_THROWS_AS(loss_and_grad(m, x, Eigen::VectorXd::Zero(9), 0.0),
                    std::invalid_argument);
}

TEST_CASE("gradient vanishes at a perfect fit and reduces to ridge", "[fcn]") {
  FcnModel m = init_fcn(arch_of({2, 4, 1}), 7);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 6);
  Eigen::VectorXd y = forward(m, x).yhat.transpose();

  auto [loss0, g0] = loss_and_grad(m, x, y, 0.0);
  REQUIRE(loss0 == 0.0);
  for (size_t l = 0; l < m.w.size(); ++l) {
    REQUIRE(g0.dw[l].cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(g0.db[l].cwiseAbs().maxCoeff() == 0.0);
  }

  double lambda = 0.01;
  auto [lossr, gr] = loss_and_grad(m, x, y, lambda);
  REQUIRE(lossr > 0.0);
  for (size_t l = 0; l < m.w.size(); ++l) {
    REQUIRE((gr.dw[l] - 2.0 * lambda * m.w[l]).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((gr.db[l] - 2.0 * lambda * m.b[l]).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("backprop matches central differences", "[fcn]") {
  for (Activation act : {Activation::Erf, Activation::Relu}) {
    FcnArch a = arch_of({2, 3, 1}, act);
    a.sigma_b2 = 0.1;  // nonzero biases so db is exercised away from zero
    FcnModel m = init_fcn(a, 13);
    Eigen::MatrixXd x(2, 4);
    x << 0.7, -1.2, 0.4, 1.5, -0.3, 0.9, -1.1, 0.6;
    Eigen::VectorXd y(4);
    y << 1.0, -1.0, 1.0, -1.0;
    double lambda = 1e-3;
    auto [loss, g] = loss_and_grad(m, x, y, lambda);
    REQUIRE(std::isfinite(loss));

    const double h = 1e-6;
    for (size_t l = 0; l < m.w.size(); ++l) {
      for (Eigen::Index k = 0; k < m.w[l].size(); ++k) {
        FcnModel up = m, dn = m;
        up.w[l].data()[k] += h;
        dn.w[l].data()[k] -= h;
        double fd = (loss_of(up, x, y, lambda) - loss_of(dn, x, y, lambda)) / (2.0 * h);
        REQUIRE(g.dw[l].data()[k] == Catch::Approx(fd).margin(1e-5).epsilon(1e-5));
      }
      for (Eigen::Index k = 0; k < m.b[l].size(); ++k) {
        FcnModel up = m, dn = m;
        up.b[l](k) += h;
        dn.b[l](k) -= h;
        double fd = (loss_of(up, x, y, lambda) - loss_of(dn, x, y, lambda)) / (2.0 * h);
        REQUIRE(g.db[l](k) == Catch::Approx(fd).margin(1e-5).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("small-step descent is monotone", "[fcn]") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    Dataset ds = make_d1(32, 1, seed);
    for (Activation act : {Activation::Erf, Activation::Relu}) {
      FcnModel m = init_fcn(arch_of({1, 16, 1}, act), seed + 100);
      TrainConfig cfg;
      cfg.lr = act == Activation::Erf ? 1e-3 : 1e-4;
      cfg.steps = 50;
      TrainTrace tr = train(m, ds, cfg);
      REQUIRE(tr.loss.size() == 50);
      REQUIRE(tr.sign_acc.size() == 50);
      for (size_t i = 1; i < tr.loss.size(); ++i) REQUIRE(tr.loss[i] <= tr.loss[i - 1] + 1e-12);
      for (double acc : tr.sign_acc) {
        REQUIRE(acc >= 0.0);
        REQUIRE(acc <= 1.0);
      }
    }
  }
}

TEST_CASE("runaway step size raises the divergence guard", "[fcn]") {
  Dataset ds = make_d1(32, 1, 9);
  FcnModel m = init_fcn(arch_of({1, 8, 1}, Activation::Relu), 9);
  TrainConfig cfg;
  cfg.lr = 1e3;
  cfg.steps = 50;
  REQUIRE_THROWS_AS(train(m, ds, cfg), fcn_divergence_error);
}

TEST_CASE("final metric matches a recompute from the trained model", "[fcn]") {
  Dataset ds = make_d1(64, 2, 15);
  FcnModel m = init_fcn(arch_of({2, 24, 1}), 15);
  TrainConfig cfg;
  cfg.steps = 40;
  TrainTrace tr = train(m, ds, cfg);
  Nc1Report rep = nc1_of_features(penultimate_features(m, ds.x), ds.partition);
  REQUIRE(tr.final_nc1 == rep.nc1);
  REQUIRE(tr.final_log10_nc1 == rep.log10_nc1);
}

TEST_CASE("wide untrained features approach the limiting kernel metric", "[fcn]") {
  Dataset ds = make_d1(256, 1, 21);
  FcnModel m = init_fcn(arch_of({1, 4000, 1}), 2100);
  Nc1Report feat = nc1_of_features(penultimate_features(m, ds.x), ds.partition);
  HyperParams h;
  h.d0 = 1;
  Nc1Report kern = nc1_of_gram(assemble_gram(KernelKind::NngpErf, ds, h));
  REQUIRE(std::abs(feat.log10_nc1 - kern.log10_nc1) <= 0.2);
}

TEST_CASE("dead units leave no between-class signal", "[fcn]") {
  Dataset ds = make_d1(32, 1, 25);
  FcnModel m = init_fcn(arch_of({1, 4, 1}, Activation::Relu), 25);
  m.w[0].setConstant(-1.0);
  m.b[0].setConstant(-10.0 - ds.x.cwiseAbs().maxCoeff());
  Eigen::MatrixXd feats = penultimate_features(m, ds.x);
  REQUIRE(feats.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(nc1_of_features(feats, ds.partition), degenerate_between_error);
}

TEST_CASE("deeper stacks train without incident", "[fcn]") {
  Dataset ds = make_d1(16, 1, 33);
  for (int depth = 3; depth <= 6; ++depth) {
    std::vector<int> widths{1};
    for (int l = 1; l < depth; ++l) widths.push_back(8);
    widths.push_back(1);
    FcnModel m = init_fcn(arch_of(widths), 33 + depth);
    REQUIRE(m.arch.depth() == depth);
    TrainConfig cfg;
    cfg.steps = 5;
    TrainTrace tr = train(m, ds, cfg);
    REQUIRE(std::isfinite(tr.loss.back()));
    REQUIRE(std::isfinite(tr.final_nc1));
  }
}
