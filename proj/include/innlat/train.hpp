#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "innlat/flow.hpp"

namespace innlat {

/// Role-content pair identifying a cluster, e.g. (ARG0, animal).
struct ClusterKey {
  std::string role;
  std::string content;

  auto operator<=>(const ClusterKey&) const = default;
  std::string str() const { return role + "-" + content; }
};

/// Gaussian target for one role-content cluster: N(mu, (1 - sigma2) I).
struct ClusterSpec {
  ClusterKey key;
  LatentVector mu;
  double sigma2 = 0.6;

  double variance() const { return 1.0 - sigma2; }
  /// Throws ParameterError unless 0 < sigma2 < 1.
  void validate() const;
};

enum class TrainMode { unsupervised, cluster_supervised };

/// Where supervised cluster targets come from.
enum class CentroidMode {
  refreshed_output,  // mean of T(x) per cluster, recomputed each epoch
  fixed_input,       // input-space centroids mapped through T once after init
};

struct TrainingConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 64;
  int epochs = 50;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::unsupervised;
  double sigma2 = 0.6;
  CentroidMode centroid_mode = CentroidMode::refreshed_output;

  void validate() const;
};

/// Standard-normal negative log-likelihood under change of variables.
double loss_unsupervised(const LatentVector& z, double total_logdet);

/// Negative log-likelihood under N(mu, (1 - sigma2) I).
double loss_cluster_supervised(const LatentVector& z, double total_logdet, const ClusterSpec& spec);

/// One gradient tensor per FlowModel::parameters() entry, same shape.
struct GradientSet {
  std::vector<Matrix> tensors;

  std::vector<std::span<const double>> views() const;
};

struct GradientResult {
  GradientSet grads;
  double mean_loss = 0.0;
};

/// Exact reverse-mode gradients of the mean batch loss.
///
/// `x` holds one sample per column. In supervised mode `targets[j]` is the
/// cluster target of column j and must be non-null for every column; it is
/// ignored in unsupervised mode.
GradientResult backprop_gradients(const FlowModel& model, const Matrix& x, TrainMode mode,
                                  std::span<const ClusterSpec* const> targets = {});

/// Mean batch loss alone (the quantity backprop_gradients differentiates).
double batch_loss(const FlowModel& model, const Matrix& x, TrainMode mode,
                  std::span<const ClusterSpec* const> targets = {});

struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

/// Decoupled-weight-decay Adam update, applied tensor by tensor.
/// Throws NumericError naming the first non-finite gradient tensor before
/// touching any parameter.
void adamw_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                AdamWState& state, const TrainingConfig& config,
                std::span<const std::string> names = {});

/// Training data: samples as columns plus, for supervised runs, an index
/// into the cluster list per sample.
struct TrainingSet {
  Matrix x;
  std::vector<int> cluster;
};

struct FitResult {
  FlowModel model;
  std::vector<double> epoch_losses;
  std::vector<ClusterSpec> final_clusters;
};

/// Train `model` on `data`. ActNorm layers are data-initialized on the first
/// mini-batch if the model is not already initialized. `clusters` supply the
/// role-content keys (and, in fixed_input mode, the input-space centroids);
/// their sigma2 is overridden by config.sigma2.
FitResult fit(FlowModel model, const TrainingSet& data, std::vector<ClusterSpec> clusters,
              const TrainingConfig& config);

}  // namespace innlat
