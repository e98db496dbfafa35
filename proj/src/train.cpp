#include "innlat/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "innlat/errors.hpp"

namespace innlat {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

double gaussian_nll(double sq_dist, double total_logdet, double variance, Eigen::Index d) {
  return sq_dist / (2.0 * variance) - total_logdet + 0.5 * static_cast<double>(d) * (kLog2Pi + std::log(variance));
}

struct BlockCache {
  Matrix actnorm_in;
  Matrix coupling_in;
  SubnetTrace trace;
};

// Forward pass that keeps what the backward pass needs.
LayerOutput forward_cached(const FlowModel& model, const Matrix& x, std::vector<BlockCache>& cache) {
  cache.resize(model.blocks().size());
  LayerOutput acc{x, Vector::Zero(x.cols())};
  for (std::size_t b = 0; b < model.blocks().size(); ++b) {
    const auto& blk = model.blocks()[b];
    auto& c = cache[b];
    c.actnorm_in = acc.y;
    auto an = blk.actnorm.apply(acc.y, Direction::forward);
    acc.logdet += an.logdet;
    c.coupling_in = blk.perm.apply(an.y, Direction::forward).y;
    const auto half = model.dim() / 2;
    c.trace = subnet_eval(c.coupling_in.bottomRows(half), blk.coupling.subnet(), blk.coupling.clamp());
    auto cp = blk.coupling.apply(c.coupling_in, Direction::forward, static_cast<int>(b));
    acc.logdet += cp.logdet;
    acc.y = std::move(cp.y);
  }
  return acc;
}

// Per-sample target mean/variance for the batch; unsupervised uses N(0, I).
struct Targets {
  Matrix mean;
  Vector variance;
};

Targets resolve_targets(Eigen::Index d, Eigen::Index n, TrainMode mode,
                        std::span<const ClusterSpec* const> targets) {
  Targets t{Matrix::Zero(d, n), Vector::Ones(n)};
  if (mode == TrainMode::unsupervised) return t;
  if (static_cast<Eigen::Index>(targets.size()) != n) {
    throw InputError("supervised batch: " + std::to_string(targets.size()) + " cluster targets for " +
                     std::to_string(n) + " samples");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const ClusterSpec* s = targets[j];
    if (s == nullptr) throw InputError("supervised batch: sample " + std::to_string(j) + " has no cluster spec");
    s->validate();
    if (s->mu.size() != d) throw ShapeError("cluster " + s->key.str() + ": centroid dimension mismatch");
    t.mean.col(j) = s->mu;
    t.variance(j) = s->variance();
  }
  return t;
}

double mean_loss(const LayerOutput& out, const Targets& t) {
  const Eigen::Index n = out.y.cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    total += gaussian_nll((out.y.col(j) - t.mean.col(j)).squaredNorm(), out.logdet(j), t.variance(j), out.y.rows());
  }
  return total / static_cast<double>(n);
}

}  // namespace

void ClusterSpec::validate() const {
  if (!(sigma2 > 0.0 && sigma2 < 1.0)) {
    throw ParameterError("cluster " + key.str() + ": sigma2 must lie in (0, 1), got " + std::to_string(sigma2));
  }
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("training: learning_rate must be positive");
  if (batch_size < 1) throw ParameterError("training: batch_size must be >= 1");
  if (epochs < 0) throw ParameterError("training: epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw ParameterError("training: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("training: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("training: eps must be positive");
  if (mode == TrainMode::cluster_supervised && !(sigma2 > 0.0 && sigma2 < 1.0)) {
    throw ParameterError("training: sigma2 must lie in (0, 1)");
  }
}

double loss_unsupervised(const LatentVector& z, double total_logdet) {
  if (!z.allFinite() || !std::isfinite(total_logdet)) throw NumericError("loss: non-finite input");
  return gaussian_nll(z.squaredNorm(), total_logdet, 1.0, z.size());
}

double loss_cluster_supervised(const LatentVector& z, double total_logdet, const ClusterSpec& spec) {
  spec.validate();
  if (z.size() != spec.mu.size()) throw ShapeError("loss: z and cluster centroid dimensions differ");
  if (!z.allFinite() || !std::isfinite(total_logdet)) throw NumericError("loss: non-finite input");
  return gaussian_nll((z - spec.mu).squaredNorm(), total_logdet, spec.variance(), z.size());
}

std::vector<std::span<const double>> GradientSet::views() const {
  std::vector<std::span<const double>> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  return out;
}

double batch_loss(const FlowModel& model, const Matrix& x, TrainMode mode,
                  std::span<const ClusterSpec* const> targets) {
  if (x.cols() == 0) throw InputError("batch_loss: empty batch");
  const Targets t = resolve_targets(model.dim(), x.cols(), mode, targets);
  return mean_loss(model.forward(x), t);
}

GradientResult backprop_gradients(const FlowModel& model, const Matrix& x, TrainMode mode,
                                  std::span<const ClusterSpec* const> targets) {
  if (!model.initialized()) throw StateError("backprop: ActNorm layers are not initialized");
  if (x.cols() == 0) throw InputError("backprop: empty batch");
  const Eigen::Index d = model.dim();
  const Eigen::Index half = d / 2;
  const Eigen::Index n = x.cols();
  const Targets tgt = resolve_targets(d, n, mode, targets);

  std::vector<BlockCache> cache;
  const LayerOutput out = forward_cached(model, x, cache);

  GradientResult res;
  res.mean_loss = mean_loss(out, tgt);

  const double inv_n = 1.0 / static_cast<double>(n);
  // dL/dz and dL/dlogdet for the mean loss.
  Matrix g = (out.y - tgt.mean).array().rowwise() / (tgt.variance.transpose().array() / inv_n);
  const double g_logdet = -inv_n;
  const double g_logdet_total = g_logdet * static_cast<double>(n);

  const int nb = model.block_count();
  res.grads.tensors.resize(static_cast<std::size_t>(nb) * 6);
  for (int b = nb - 1; b >= 0; --b) {
    const auto& blk = model.blocks()[b];
    const auto& c = cache[b];
    const auto& sp = blk.coupling.subnet();
    const double clamp = blk.coupling.clamp();
    Matrix* gt = &res.grads.tensors[static_cast<std::size_t>(b) * 6];

    // Coupling.
    const Eigen::ArrayXXd scale = c.trace.log_s.array().exp();
    const Eigen::ArrayXXd ga = g.topRows(half).array();
    Matrix gx(d, n);
    gx.topRows(half) = (scale * ga).matrix();
    Eigen::ArrayXXd g_log_s = ga * scale * c.coupling_in.topRows(half).array() + g_logdet;
    const Eigen::ArrayXXd tanh_v = c.trace.log_s.array() / clamp;
    Matrix g_raw(d, n);
    g_raw.topRows(half) = (g_log_s * (1.0 - tanh_v.square())).matrix();
    g_raw.bottomRows(half) = g.topRows(half);

    gt[4] = g_raw * c.trace.hidden.transpose();
    gt[5] = g_raw.rowwise().sum();
    Matrix g_pre = sp.w2.transpose() * g_raw;
    g_pre = (c.trace.pre.array() > 0.0).select(g_pre, 0.0);
    gt[2] = g_pre * c.coupling_in.bottomRows(half).transpose();
    gt[3] = g_pre.rowwise().sum();
    gx.bottomRows(half) = g.bottomRows(half) + sp.w1.transpose() * g_pre;

    // Permutation: gradient flows back through the inverse permutation.
    g = blk.perm.apply(gx, Direction::inverse).y;

    // ActNorm.
    const Eigen::ArrayXd an_scale = blk.actnorm.log_scale().array().exp();
    gt[0] = ((g.array() * c.actnorm_in.array()).rowwise().sum() * an_scale + g_logdet_total).matrix();
    gt[1] = g.rowwise().sum();
    g = (g.array().colwise() * an_scale).matrix();
  }
  return res;
}

void adamw_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                AdamWState& state, const TrainingConfig& config, std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ShapeError("adamw: parameter and gradient tensor counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string label = k < names.size() ? names[k] : "tensor " + std::to_string(k);
    if (params[k].size() != grads[k].size()) throw ShapeError("adamw: shape mismatch for " + label);
    for (double gv : grads[k]) {
      if (!std::isfinite(gv)) throw NumericError("adamw: non-finite gradient in " + label);
    }
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      state.m[k].assign(params[k].size(), 0.0);
      state.v[k].assign(params[k].size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw: optimizer state does not match parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double lr = config.learning_rate;
  const double decay = 1.0 - lr * config.weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto gk = grads[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gk[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gk[i] * gk[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

namespace {

// Per-cluster mean of the model's forward image.
void refresh_centroids(const FlowModel& model, const TrainingSet& data, std::vector<ClusterSpec>& clusters) {
  const Matrix z = model.forward(data.x).y;
  std::vector<Vector> sums(clusters.size(), Vector::Zero(model.dim()));
  std::vector<int> counts(clusters.size(), 0);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const int c = data.cluster[static_cast<std::size_t>(j)];
    sums[c] += z.col(j);
    ++counts[c];
  }
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (counts[c] > 0) clusters[c].mu = sums[c] / static_cast<double>(counts[c]);
  }
}

}  // namespace

FitResult fit(FlowModel model, const TrainingSet& data, std::vector<ClusterSpec> clusters,
              const TrainingConfig& config) {
  config.validate();
  const Eigen::Index n = data.x.cols();
  if (n == 0) throw InputError("fit: dataset is empty");
  if (data.x.rows() != model.dim()) {
    throw ShapeError("fit: data dimension " + std::to_string(data.x.rows()) + " differs from model dimension " +
                     std::to_string(model.dim()));
  }
  const bool supervised = config.mode == TrainMode::cluster_supervised;
  if (supervised) {
    if (clusters.empty()) throw InputError("fit: supervised mode requires cluster specs");
    if (static_cast<Eigen::Index>(data.cluster.size()) != n) throw InputError("fit: supervised mode requires a cluster per sample");
    for (int c : data.cluster) {
      if (c < 0 || c >= static_cast<int>(clusters.size())) throw InputError("fit: sample cluster index out of range");
    }
    for (auto& c : clusters) c.sigma2 = config.sigma2;
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  AdamWState state;
  const auto names = model.parameter_names();
  FitResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;

    for (Eigen::Index start = 0, batch_no = 0; start < n; start += config.batch_size, ++batch_no) {
      const Eigen::Index m = std::min<Eigen::Index>(config.batch_size, n - start);
      Matrix xb(data.x.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) xb.col(j) = data.x.col(order[start + j]);

      if (!model.initialized()) {
        model.initialize_actnorm(xb);
      }
      if (supervised && start == 0) {
        if (config.centroid_mode == CentroidMode::refreshed_output) {
          refresh_centroids(model, data, clusters);
        } else if (epoch == 0) {
          for (auto& c : clusters) {
            if (c.mu.size() != model.dim()) throw ShapeError("fit: cluster " + c.key.str() + " centroid dimension mismatch");
            c.mu = model.forward(c.mu).y.col(0);
          }
        }
      }

      std::vector<const ClusterSpec*> targets;
      if (supervised) {
        targets.reserve(static_cast<std::size_t>(m));
        for (Eigen::Index j = 0; j < m; ++j) targets.push_back(&clusters[data.cluster[order[start + j]]]);
      }

      GradientResult gr = backprop_gradients(model, xb, config.mode, targets);
      if (!std::isfinite(gr.mean_loss)) {
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no));
      }
      epoch_total += gr.mean_loss * static_cast<double>(m);

      auto params = model.parameters();
      auto grads = gr.grads.views();
      try {
        adamw_step(params, grads, state, config, names);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no));
      }
    }
    result.epoch_losses.push_back(epoch_total / static_cast<double>(n));
  }

  if (supervised && config.centroid_mode == CentroidMode::refreshed_output && model.initialized()) {
    refresh_centroids(model, data, clusters);
  }
  result.model = std::move(model);
  result.final_clusters = std::move(clusters);
  return result;
}

}  // namespace innlat
