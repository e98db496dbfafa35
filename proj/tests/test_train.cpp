#include <cmath>
#include <random>

#include <doctest.h>

#include "innlat/checkpoint.hpp"
#include "innlat/corpus.hpp"
#include "innlat/errors.hpp"
#include "innlat/train.hpp"
#include "test_util.hpp"

using namespace innlat;
using innlat::test::random_matrix;

namespace {

const double kLn2Pi = std::log(2.0 * M_PI);

ClusterSpec spec_at(const LatentVector& mu, double sigma2 = 0.6) {
  ClusterSpec s;
  s.key = {"ARG0", "x"};
  s.mu = mu;
  s.sigma2 = sigma2;
  return s;
}

// Largest relative deviation between analytic and central-difference
// gradients over every parameter entry.
double gradient_check(FlowModel model, const Matrix& x, TrainMode mode, std::span<const ClusterSpec* const> targets) {
  const GradientResult g = backprop_gradients(model, x, mode, targets);
  auto params = model.parameters();
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    REQUIRE(g.grads.tensors[k].size() == static_cast<Eigen::Index>(params[k].size()));
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double saved = params[k][i];
      const double h = 1e-6 * std::max(1.0, std::abs(saved));
      params[k][i] = saved + h;
      const double up = batch_loss(model, x, mode, targets);
      params[k][i] = saved - h;
      const double down = batch_loss(model, x, mode, targets);
      params[k][i] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = g.grads.tensors[k].data()[i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("loss_unsupervised: hand values") {
  CHECK(loss_unsupervised(LatentVector::Zero(32), 0.0) == doctest::Approx(29.406033062549525).epsilon(1e-14));
  CHECK(loss_unsupervised(LatentVector::Zero(32), 3.0) == doctest::Approx(29.406033062549525 - 3.0).epsilon(1e-14));
  LatentVector z(2);
  z << 1.0, 1.0;
  CHECK(loss_unsupervised(z, 0.0) == doctest::Approx(2.8378770664093453).epsilon(1e-14));
}

TEST_CASE("loss_cluster_supervised: hand values") {
  const LatentVector mu = LatentVector::LinSpaced(32, -1, 1);
  CHECK(loss_cluster_supervised(mu, 0.0, spec_at(mu)) == doctest::Approx(14.745381352563045).epsilon(1e-14));
  LatentVector z(2);
  z << 1.5, -2.0;
  LatentVector m(2);
  m << 0.5, -2.0;
  CHECK(loss_cluster_supervised(z, 0.0, spec_at(m)) == doctest::Approx(2.1715863345351902).epsilon(1e-14));
}

TEST_CASE("loss_cluster_supervised: sigma2 -> 0 reduces to the standard loss") {
  LatentVector z(3), mu(3);
  z << 0.3, -1.0, 2.0;
  mu << 1.0, 1.0, -1.0;
  CHECK(loss_cluster_supervised(z, 0.7, spec_at(mu, 1e-12)) ==
        doctest::Approx(loss_unsupervised(z - mu, 0.7)).epsilon(1e-10));
}

TEST_CASE("cluster spec validation") {
  CHECK_THROWS_AS(spec_at(LatentVector::Zero(2), 1.0).validate(), ParameterError);
  CHECK_THROWS_AS(spec_at(LatentVector::Zero(2), 0.0).validate(), ParameterError);
  CHECK_THROWS_AS(loss_cluster_supervised(LatentVector::Zero(2), 0.0, spec_at(LatentVector::Zero(2), 1.5)),
                  ParameterError);
}

TEST_CASE("gradients match central differences, d=4, B=2, h=8") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    const FlowModel m = FlowModel::create({4, 2, 8, 2.0}, 500 + trial, SubnetInit::random);
    const Matrix x = random_matrix(4, 6, rng);
    CHECK(gradient_check(m, x, TrainMode::unsupervised, {}) < 1e-4);

    const ClusterSpec a = spec_at(random_matrix(4, 1, rng, 0.5)), b = spec_at(random_matrix(4, 1, rng, 0.5));
    std::vector<const ClusterSpec*> targets = {&a, &b, &a, &b, &b, &a};
    CHECK(gradient_check(m, x, TrainMode::cluster_supervised, targets) < 1e-4);
  }
}

TEST_CASE("gradients on the identity model at a zero batch") {
  const FlowModel m = FlowModel::create({4, 2, 8, 2.0}, 77);
  FlowModel init = m;
  // Unit ActNorm so the identity-initialized model is usable without data.
  for (auto& blk : init.blocks()) blk.actnorm = ActNormLayer(Vector::Zero(4), Vector::Zero(4));
  const Matrix x = Matrix::Zero(4, 3);
  CHECK(gradient_check(init, x, TrainMode::unsupervised, {}) < 1e-4);
}

TEST_CASE("gradients match the reference implementation") {
  const auto ex = innlat::test::load_json("oracle_expected.json");
  const FlowModel m = load_checkpoint(innlat::test::data_dir() / "oracle_model.json");
  const Matrix x = innlat::test::to_matrix(ex["x"]).transpose();
  const Matrix mus = innlat::test::to_matrix(ex["mu"]);
  std::vector<ClusterSpec> specs;
  for (Eigen::Index c = 0; c < mus.rows(); ++c) specs.push_back(spec_at(mus.row(c).transpose(), ex["sigma2"]));
  std::vector<const ClusterSpec*> targets;
  for (int c : ex["clusters"]) targets.push_back(&specs[static_cast<std::size_t>(c)]);

  for (auto [mode, name] : {std::pair{TrainMode::unsupervised, "unsupervised"},
                            std::pair{TrainMode::cluster_supervised, "supervised"}}) {
    CAPTURE(name);
    const auto g = backprop_gradients(m, x, mode, targets);
    CHECK(g.mean_loss == doctest::Approx(ex[name]["loss"].get<double>()).epsilon(1e-12));
    const auto& ref = ex[name]["grads"];
    for (std::size_t b = 0; b < ref.size(); ++b) {
      for (std::size_t k = 0; k < 6; ++k) {
        const Matrix r = innlat::test::to_matrix(ref[b][k]);
        const Matrix& got = g.grads.tensors[b * 6 + k];
        REQUIRE(got.size() == r.size());
        CHECK((got.reshaped() - r.reshaped()).lpNorm<Eigen::Infinity>() < 1e-10 * std::max(1.0, r.lpNorm<Eigen::Infinity>()));
      }
    }
  }
}

TEST_CASE("gradients are invariant to duplicating the batch") {
  std::mt19937_64 rng(4);
  const FlowModel m = FlowModel::create({4, 2, 8, 2.0}, 3, SubnetInit::random);
  const Matrix x = random_matrix(4, 5, rng);
  Matrix xx(4, 10);
  xx << x, x;
  const auto g1 = backprop_gradients(m, x, TrainMode::unsupervised);
  const auto g2 = backprop_gradients(m, xx, TrainMode::unsupervised);
  CHECK(g1.mean_loss == doctest::Approx(g2.mean_loss).epsilon(1e-14));
  for (std::size_t k = 0; k < g1.grads.tensors.size(); ++k) {
    CHECK((g1.grads.tensors[k] - g2.grads.tensors[k]).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("gradients vanish on dead paths") {
  // Identity-initialized subnets with a negative hidden bias: every ReLU is
  // off, so the first layer receives no gradient.
  FlowModel m = FlowModel::create({4, 1, 8, 2.0}, 5);
  auto& blk = m.blocks()[0];
  blk.actnorm = ActNormLayer(Vector::Zero(4), Vector::Zero(4));
  blk.coupling.subnet().w1.setZero();
  blk.coupling.subnet().b1.setConstant(-1.0);
  std::mt19937_64 rng(8);
  const auto g = backprop_gradients(m, random_matrix(4, 3, rng), TrainMode::unsupervised);
  CHECK(g.grads.tensors[2].isZero(0.0));
  CHECK(g.grads.tensors[3].isZero(0.0));
  CHECK(g.grads.tensors[4].isZero(0.0));
}

TEST_CASE("supervised gradients require a target per sample") {
  const FlowModel m = FlowModel::create({4, 1, 8, 2.0}, 5, SubnetInit::random);
  CHECK_THROWS_AS(backprop_gradients(m, Matrix::Zero(4, 2), TrainMode::cluster_supervised), Error);
}

TEST_CASE("adamw: zero gradient and zero decay leaves parameters unchanged") {
  std::vector<double> p = {1.0, -2.0};
  std::vector<double> g = {0.0, 0.0};
  std::vector<std::span<double>> ps = {p};
  std::vector<std::span<const double>> gs = {g};
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  AdamWState st;
  adamw_step(ps, gs, st, cfg);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(st.m[0][0] == 0.0);
  CHECK(st.step == 1);
}

TEST_CASE("adamw: first step moves by about lr * sign(g)") {
  std::vector<double> p = {1.0, 1.0};
  std::vector<double> g = {0.3, -0.3};
  std::vector<std::span<double>> ps = {p};
  std::vector<std::span<const double>> gs = {g};
  TrainingConfig cfg;
  cfg.weight_decay = 0.0;
  AdamWState st;
  adamw_step(ps, gs, st, cfg);
  CHECK(p[0] == doctest::Approx(0.9995000000166666).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0004999999833334).epsilon(1e-14));
}

TEST_CASE("adamw: decoupled decay with zero gradient") {
  std::vector<double> p = {2.0};
  std::vector<double> g = {0.0};
  std::vector<std::span<double>> ps = {p};
  std::vector<std::span<const double>> gs = {g};
  TrainingConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  AdamWState st;
  adamw_step(ps, gs, st, cfg);
  CHECK(p[0] == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-15));
}

TEST_CASE("adamw: update is independent of tensor order") {
  std::vector<double> a = {1.0, 2.0}, b = {-1.0};
  std::vector<double> ga = {0.1, -0.2}, gb = {0.5};
  std::vector<double> a2 = a, b2 = b;
  TrainingConfig cfg;
  AdamWState s1, s2;
  for (int i = 0; i < 3; ++i) {
    std::vector<std::span<double>> p1 = {a, b};
    std::vector<std::span<const double>> g1 = {ga, gb};
    adamw_step(p1, g1, s1, cfg);
    std::vector<std::span<double>> p2 = {b2, a2};
    std::vector<std::span<const double>> g2 = {gb, ga};
    adamw_step(p2, g2, s2, cfg);
  }
  CHECK(a == a2);
  CHECK(b == b2);
}

TEST_CASE("adamw: non-finite gradient is rejected before any update") {
  std::vector<double> a = {1.0}, b = {2.0};
  std::vector<double> ga = {0.1}, gb = {std::nan("")};
  std::vector<std::span<double>> ps = {a, b};
  std::vector<std::span<const double>> gs = {ga, gb};
  std::vector<std::string> names = {"first", "second"};
  AdamWState st;
  try {
    adamw_step(ps, gs, st, TrainingConfig{}, names);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }
  CHECK(a[0] == 1.0);
}

TEST_CASE("fit: standard Gaussian data stays near the optimum") {
  std::mt19937_64 rng(21);
  TrainingSet set;
  set.x = random_matrix(8, 512, rng);
  TrainingConfig cfg;
  cfg.epochs = 5;
  const FitResult r = fit(FlowModel::create({8, 2, 32, 2.0}, 1), set, {}, cfg);
  REQUIRE(r.epoch_losses.size() == 5);
  // Expected NLL of N(0, I) under itself: (d/2)(1 + ln 2 pi).
  const double optimum = 4.0 * (1.0 + kLn2Pi);
  CHECK(std::abs(r.epoch_losses.front() - optimum) < 0.25);
  CHECK(r.epoch_losses.back() < r.epoch_losses.front() + 0.05);
}

TEST_CASE("fit: supervised training on the default corpus halves the loss within 20 epochs") {
  const CorpusSpec spec = CorpusSpec::default_arg0(0);
  const auto data = synth_generate(spec);
  TrainingSet set;
  set.x = Matrix(spec.dim, static_cast<Eigen::Index>(data.size()));
  auto clusters = compute_cluster_specs(data, "ARG0");
  for (std::size_t j = 0; j < data.size(); ++j) {
    set.x.col(static_cast<Eigen::Index>(j)) = data[j].vector;
    const auto c = *data[j].structure.content_of("ARG0");
    for (std::size_t k = 0; k < clusters.size(); ++k)
      if (clusters[k].key.content == c) set.cluster.push_back(static_cast<int>(k));
  }
  // Whole-dataset loss with centroids taken in the model's output space.
  auto dataset_loss = [&](const FlowModel& m) {
    const Matrix z = m.forward(set.x).y;
    std::vector<EmbeddedSentence> mapped = data;
    for (std::size_t j = 0; j < data.size(); ++j) mapped[j].vector = z.col(static_cast<Eigen::Index>(j));
    const auto specs = compute_cluster_specs(mapped, "ARG0");
    std::vector<const ClusterSpec*> targets;
    for (int c : set.cluster) targets.push_back(&specs[static_cast<std::size_t>(c)]);
    return batch_loss(m, set.x, TrainMode::cluster_supervised, targets);
  };
  FlowModel model = FlowModel::create({32, 10, 512, 2.0}, 1);
  model.initialize_actnorm(set.x);
  const double before = dataset_loss(model);
  TrainingConfig cfg;
  cfg.epochs = 20;
  cfg.mode = TrainMode::cluster_supervised;
  const FitResult r = fit(model, set, clusters, cfg);
  const double after = dataset_loss(r.model);
  MESSAGE("supervised dataset loss: initial " << before << ", after 20 epochs " << after << "; epoch means "
                                              << r.epoch_losses.front() << " -> " << r.epoch_losses.back());
  CHECK(before - after >= 0.5 * std::abs(before));
  REQUIRE(r.final_clusters.size() == 4);
}

TEST_CASE("fit: identical seeds give identical loss curves") {
  std::mt19937_64 rng(2);
  TrainingSet set;
  set.x = random_matrix(4, 100, rng, 2.0);
  TrainingConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = 9;
  const auto a = fit(FlowModel::create({4, 2, 8, 2.0}, 1), set, {}, cfg);
  const auto b = fit(FlowModel::create({4, 2, 8, 2.0}, 1), set, {}, cfg);
  CHECK(a.epoch_losses == b.epoch_losses);
  cfg.seed = 10;
  const auto c = fit(FlowModel::create({4, 2, 8, 2.0}, 1), set, {}, cfg);
  CHECK(a.epoch_losses != c.epoch_losses);
}

TEST_CASE("fit: configuration errors") {
  TrainingConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = TrainingConfig{};
  cfg.mode = TrainMode::cluster_supervised;
  cfg.sigma2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = TrainingConfig{};
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
