#pragma once

// Affine-coupling normalizing flow over fixed-dimension embedding vectors.
//
// Batches are column-major Eigen matrices with one sample per column, so a
// batch of n vectors in dimension d is a d x n matrix. Every layer keeps the
// forward and inverse maps on the same arithmetic path, which makes the
// inverse log-determinant the exact negation of the forward one.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace innlat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A d-dimensional embedding, E(x) on the input side or z on the output side.
using LatentVector = Eigen::VectorXd;

enum class Direction { forward, inverse };

/// Batch output of a layer: transformed samples and one log|det J| per sample.
struct LayerOutput {
  Matrix y;
  Vector logdet;
};

/// Two-layer MLP inside a coupling layer: half -> hidden (ReLU) -> full.
struct SubnetParams {
  Matrix w1;  // hidden x half
  Vector b1;  // hidden
  Matrix w2;  // dim x hidden
  Vector b2;  // dim

  SubnetParams() = default;
  SubnetParams(Eigen::Index dim, Eigen::Index hidden);

  Eigen::Index dim() const { return w2.rows(); }
  Eigen::Index half() const { return w1.cols(); }
  Eigen::Index hidden() const { return w1.rows(); }

  /// Throws ShapeError when the four tensors disagree on d or h.
  void validate() const;
};

/// Subnet evaluation with intermediates retained for backpropagation.
struct SubnetTrace {
  Matrix pre;      // hidden pre-activations
  Matrix hidden;   // ReLU(pre)
  Matrix raw_s;    // unclamped log-scale head
  Matrix log_s;    // clamp * tanh(raw_s / clamp)
  Matrix shift;    // t
};

/// Evaluate m(x_half) -> (log_s, t) for a batch of half vectors.
SubnetTrace subnet_eval(const Matrix& x_half, const SubnetParams& p, double clamp);

class CouplingLayer {
public:
  CouplingLayer() = default;
  CouplingLayer(SubnetParams subnet, double clamp);

  const SubnetParams& subnet() const { return subnet_; }
  SubnetParams& subnet() { return subnet_; }
  double clamp() const { return clamp_; }
  Eigen::Index dim() const { return subnet_.dim(); }

  /// `index` only labels diagnostics.
  LayerOutput apply(const Matrix& x, Direction dir, int index = -1) const;

private:
  SubnetParams subnet_;
  double clamp_ = 2.0;
};

class ActNormLayer {
public:
  ActNormLayer() = default;
  explicit ActNormLayer(Eigen::Index dim);
  ActNormLayer(Vector log_scale, Vector bias);

  const Vector& log_scale() const { return log_scale_; }
  const Vector& bias() const { return bias_; }
  Vector& log_scale() { return log_scale_; }
  Vector& bias() { return bias_; }
  bool initialized() const { return initialized_; }
  Eigen::Index dim() const { return log_scale_.size(); }

  /// Data-dependent init: afterwards the forward image of `batch` has zero
  /// mean and unit (population) variance per dimension.
  void initialize(const Matrix& batch);

  LayerOutput apply(const Matrix& x, Direction dir) const;

private:
  Vector log_scale_;
  Vector bias_;
  bool initialized_ = false;
};

class PermutationLayer {
public:
  PermutationLayer() = default;
  /// forward: y[i] = x[perm[i]].
  explicit PermutationLayer(std::vector<int> perm);

  static PermutationLayer identity(int dim);

  const std::vector<int>& perm() const { return perm_; }
  const std::vector<int>& inverse_perm() const { return inverse_; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(perm_.size()); }

  LayerOutput apply(const Matrix& x, Direction dir) const;

private:
  std::vector<int> perm_;
  std::vector<int> inverse_;
};

struct FlowBlock {
  ActNormLayer actnorm;
  PermutationLayer perm;
  CouplingLayer coupling;
};

struct FlowConfig {
  int dim = 32;
  int blocks = 10;
  int hidden = 512;
  double clamp = 2.0;
};

enum class SubnetInit {
  identity,  // random first layer, zero output layer: each coupling starts as identity
  random,    // every tensor random; used for gradient and Jacobian checks
};

class FlowModel {
public:
  FlowModel() = default;
  explicit FlowModel(std::vector<FlowBlock> blocks);

  /// Seeded construction. ActNorm layers start uninitialized unless
  /// `init == SubnetInit::random`, which also randomizes them.
  static FlowModel create(const FlowConfig& config, std::uint64_t seed,
                          SubnetInit init = SubnetInit::identity);

  /// All-identity model: zero subnets, zero ActNorm, identity permutations.
  static FlowModel identity(int dim, int blocks, int hidden, double clamp = 2.0);

  int dim() const { return dim_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const std::vector<FlowBlock>& blocks() const { return blocks_; }
  std::vector<FlowBlock>& blocks() { return blocks_; }
  bool initialized() const;

  /// Sequential data-dependent initialization of every ActNorm layer.
  void initialize_actnorm(const Matrix& batch);

  LayerOutput apply(const Matrix& x, Direction dir) const;
  LayerOutput forward(const Matrix& x) const { return apply(x, Direction::forward); }
  LayerOutput inverse(const Matrix& z) const { return apply(z, Direction::inverse); }

  /// Trainable tensors in a fixed order: per block ActNorm log_scale, bias,
  /// then subnet w1, b1, w2, b2.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::vector<std::string> parameter_names() const;

private:
  int dim_ = 0;
  std::vector<FlowBlock> blocks_;
};

/// Single-vector result of a flow or layer application.
struct VectorOutput {
  LatentVector y;
  double logdet = 0.0;
};

VectorOutput coupling_apply(const LatentVector& x, const CouplingLayer& layer, Direction dir);
VectorOutput actnorm_apply(const LatentVector& x, const ActNormLayer& layer, Direction dir);
VectorOutput permutation_apply(const LatentVector& x, const PermutationLayer& layer, Direction dir);
VectorOutput flow_apply(const LatentVector& x, const FlowModel& model, Direction dir);

/// Stack vectors as columns; all must share one dimension.
Matrix to_batch(std::span<const LatentVector> vectors);

}  // namespace innlat
