#include "innlat/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "innlat/errors.hpp"

namespace innlat {

namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_rows(const Matrix& x, Eigen::Index d, const char* what) {
  if (x.rows() != d) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(d) +
                     " rows, got " + std::to_string(x.rows()));
  }
}

void fill_normal(Eigen::Ref<Matrix> m, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
}

}  // namespace

SubnetParams::SubnetParams(Eigen::Index dim, Eigen::Index hidden)
    : w1(Matrix::Zero(hidden, dim / 2)),
      b1(Vector::Zero(hidden)),
      w2(Matrix::Zero(dim, hidden)),
      b2(Vector::Zero(dim)) {}

void SubnetParams::validate() const {
  const auto h = w1.rows();
  const auto d = w2.rows();
  if (d < 2 || d % 2 != 0) throw ShapeError("subnet: output dimension must be even and >= 2, got " + std::to_string(d));
  if (w1.cols() != d / 2) throw ShapeError("subnet: w1 is " + dims(w1.rows(), w1.cols()) + ", expected " + dims(h, d / 2));
  if (b1.size() != h) throw ShapeError("subnet: b1 has " + std::to_string(b1.size()) + " entries, expected " + std::to_string(h));
  if (w2.cols() != h) throw ShapeError("subnet: w2 is " + dims(w2.rows(), w2.cols()) + ", expected " + dims(d, h));
  if (b2.size() != d) throw ShapeError("subnet: b2 has " + std::to_string(b2.size()) + " entries, expected " + std::to_string(d));
}

SubnetTrace subnet_eval(const Matrix& x_half, const SubnetParams& p, double clamp) {
  p.validate();
  require_rows(x_half, p.half(), "subnet input");
  const auto half = p.half();

  SubnetTrace tr;
  tr.pre = p.w1 * x_half;
  tr.pre.colwise() += p.b1;
  tr.hidden = tr.pre.cwiseMax(0.0);
  Matrix raw = p.w2 * tr.hidden;
  raw.colwise() += p.b2;
  tr.raw_s = raw.topRows(half);
  tr.shift = raw.bottomRows(half);
  tr.log_s = (tr.raw_s.array() / clamp).tanh() * clamp;
  return tr;
}

// ---------------------------------------------------------------------------

CouplingLayer::CouplingLayer(SubnetParams subnet, double clamp)
    : subnet_(std::move(subnet)), clamp_(clamp) {
  if (!(clamp_ > 0.0)) throw ParameterError("coupling: clamp must be positive");
  subnet_.validate();
}

LayerOutput CouplingLayer::apply(const Matrix& x, Direction dir, int index) const {
  const auto d = dim();
  const auto half = d / 2;
  require_rows(x, d, "coupling input");

  // The passive half is identical in both directions, so the subnet sees
  // the same input either way.
  const SubnetTrace tr = subnet_eval(x.bottomRows(half), subnet_, clamp_);
  if (!tr.log_s.allFinite() || !tr.shift.allFinite()) {
    throw NumericError("coupling layer " + std::to_string(index) + ": non-finite subnet output");
  }

  LayerOutput out;
  out.y.resize(d, x.cols());
  out.y.bottomRows(half) = x.bottomRows(half);
  const Vector sum_log_s = tr.log_s.colwise().sum().transpose();
  if (dir == Direction::forward) {
    out.y.topRows(half) = (tr.log_s.array().exp() * x.topRows(half).array() + tr.shift.array()).matrix();
    out.logdet = sum_log_s;
  } else {
    out.y.topRows(half) = ((x.topRows(half).array() - tr.shift.array()) / tr.log_s.array().exp()).matrix();
    out.logdet = -sum_log_s;
  }
  return out;
}

// ---------------------------------------------------------------------------

ActNormLayer::ActNormLayer(Eigen::Index dim)
    : log_scale_(Vector::Zero(dim)), bias_(Vector::Zero(dim)) {}

ActNormLayer::ActNormLayer(Vector log_scale, Vector bias)
    : log_scale_(std::move(log_scale)), bias_(std::move(bias)), initialized_(true) {
  if (log_scale_.size() != bias_.size()) throw ShapeError("actnorm: log_scale and bias sizes differ");
}

void ActNormLayer::initialize(const Matrix& batch) {
  require_rows(batch, dim(), "actnorm init batch");
  if (batch.cols() == 0) throw InputError("actnorm init: empty batch");
  const double n = static_cast<double>(batch.cols());
  const Vector mean = batch.rowwise().sum() / n;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    const double var = (batch.row(i).array() - mean(i)).square().sum() / n;
    if (!(var > 0.0) || !std::isfinite(var)) {
      throw InputError("actnorm init: dimension " + std::to_string(i) + " has zero variance");
    }
    log_scale_(i) = -0.5 * std::log(var);
    bias_(i) = -mean(i) * std::exp(log_scale_(i));
  }
  initialized_ = true;
}

LayerOutput ActNormLayer::apply(const Matrix& x, Direction dir) const {
  if (!initialized_) throw StateError("actnorm: layer used before initialization");
  require_rows(x, dim(), "actnorm input");
  LayerOutput out;
  const Eigen::ArrayXd scale = log_scale_.array().exp();
  const double ld = log_scale_.sum();
  if (dir == Direction::forward) {
    out.y = ((x.array().colwise() * scale).colwise() + bias_.array()).matrix();
    out.logdet = Vector::Constant(x.cols(), ld);
  } else {
    out.y = ((x.array().colwise() - bias_.array()).colwise() / scale).matrix();
    out.logdet = Vector::Constant(x.cols(), -ld);
  }
  return out;
}

// ---------------------------------------------------------------------------

PermutationLayer::PermutationLayer(std::vector<int> perm) : perm_(std::move(perm)) {
  const int d = static_cast<int>(perm_.size());
  inverse_.assign(perm_.size(), -1);
  for (int i = 0; i < d; ++i) {
    const int p = perm_[i];
    if (p < 0 || p >= d || inverse_[p] != -1) throw ShapeError("permutation: not a bijection on 0.." + std::to_string(d - 1));
    inverse_[p] = i;
  }
}

PermutationLayer PermutationLayer::identity(int dim) {
  std::vector<int> p(dim);
  std::iota(p.begin(), p.end(), 0);
  return PermutationLayer(std::move(p));
}

LayerOutput PermutationLayer::apply(const Matrix& x, Direction dir) const {
  require_rows(x, dim(), "permutation input");
  const auto& idx = dir == Direction::forward ? perm_ : inverse_;
  LayerOutput out;
  out.y.resize(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.y.row(i) = x.row(idx[i]);
  out.logdet = Vector::Zero(x.cols());
  return out;
}

// ---------------------------------------------------------------------------

FlowModel::FlowModel(std::vector<FlowBlock> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ShapeError("flow: at least one block required");
  dim_ = static_cast<int>(blocks_.front().actnorm.dim());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    if (blk.actnorm.dim() != dim_ || blk.perm.dim() != dim_ || blk.coupling.dim() != dim_) {
      throw ShapeError("flow: block " + std::to_string(b) + " dimension differs from " + std::to_string(dim_));
    }
  }
}

FlowModel FlowModel::create(const FlowConfig& config, std::uint64_t seed, SubnetInit init) {
  if (config.dim < 2 || config.dim % 2 != 0) throw ParameterError("flow: dim must be even and >= 2");
  if (config.blocks < 1) throw ParameterError("flow: blocks must be >= 1");
  if (config.hidden < 1) throw ParameterError("flow: hidden width must be >= 1");
  if (!(config.clamp > 0.0)) throw ParameterError("flow: clamp must be positive");

  std::mt19937_64 rng(seed);
  const int d = config.dim;
  const int half = d / 2;
  std::vector<FlowBlock> blocks;
  blocks.reserve(config.blocks);
  for (int b = 0; b < config.blocks; ++b) {
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    SubnetParams sp(d, config.hidden);
    fill_normal(sp.w1, rng, 1.0 / std::sqrt(static_cast<double>(half)));
    ActNormLayer an(d);
    if (init == SubnetInit::random) {
      fill_normal(sp.b1, rng, 0.1);
      fill_normal(sp.w2, rng, 0.5 / std::sqrt(static_cast<double>(config.hidden)));
      fill_normal(sp.b2, rng, 0.1);
      Vector ls(d), bias(d);
      fill_normal(ls, rng, 0.2);
      fill_normal(bias, rng, 0.2);
      an = ActNormLayer(std::move(ls), std::move(bias));
    }
    blocks.push_back({std::move(an), PermutationLayer(std::move(perm)),
                      CouplingLayer(std::move(sp), config.clamp)});
  }
  return FlowModel(std::move(blocks));
}

FlowModel FlowModel::identity(int dim, int blocks, int hidden, double clamp) {
  std::vector<FlowBlock> out;
  for (int b = 0; b < blocks; ++b) {
    out.push_back({ActNormLayer(Vector::Zero(dim), Vector::Zero(dim)), PermutationLayer::identity(dim),
                   CouplingLayer(SubnetParams(dim, hidden), clamp)});
  }
  return FlowModel(std::move(out));
}

bool FlowModel::initialized() const {
  return std::all_of(blocks_.begin(), blocks_.end(), [](const FlowBlock& b) { return b.actnorm.initialized(); });
}

void FlowModel::initialize_actnorm(const Matrix& batch) {
  Matrix h = batch;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& blk = blocks_[b];
    blk.actnorm.initialize(h);
    h = blk.actnorm.apply(h, Direction::forward).y;
    h = blk.perm.apply(h, Direction::forward).y;
    h = blk.coupling.apply(h, Direction::forward, static_cast<int>(b)).y;
  }
}

LayerOutput FlowModel::apply(const Matrix& x, Direction dir) const {
  if (x.rows() != dim_) {
    throw ShapeError("flow input: expected " + std::to_string(dim_) + " rows, got " + std::to_string(x.rows()));
  }
  LayerOutput acc{x, Vector::Zero(x.cols())};
  const int nb = block_count();
  auto step = [&acc](LayerOutput o) {
    acc.y = std::move(o.y);
    acc.logdet += o.logdet;
  };
  if (dir == Direction::forward) {
    for (int b = 0; b < nb; ++b) {
      const auto& blk = blocks_[b];
      try {
        step(blk.actnorm.apply(acc.y, dir));
      } catch (const StateError& e) {
        throw StateError("block " + std::to_string(b) + ": " + e.what());
      }
      step(blk.perm.apply(acc.y, dir));
      step(blk.coupling.apply(acc.y, dir, b));
    }
  } else {
    for (int b = nb - 1; b >= 0; --b) {
      const auto& blk = blocks_[b];
      step(blk.coupling.apply(acc.y, dir, b));
      step(blk.perm.apply(acc.y, dir));
      try {
        step(blk.actnorm.apply(acc.y, dir));
      } catch (const StateError& e) {
        throw StateError("block " + std::to_string(b) + ": " + e.what());
      }
    }
  }
  return acc;
}

std::vector<std::span<double>> FlowModel::parameters() {
  std::vector<std::span<double>> out;
  auto add = [&out](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); };
  for (auto& blk : blocks_) {
    add(blk.actnorm.log_scale());
    add(blk.actnorm.bias());
    auto& sp = blk.coupling.subnet();
    add(sp.w1);
    add(sp.b1);
    add(sp.w2);
    add(sp.b2);
  }
  return out;
}

std::vector<std::span<const double>> FlowModel::parameters() const {
  auto& self = const_cast<FlowModel&>(*this);
  std::vector<std::span<const double>> out;
  for (auto s : self.parameters()) out.emplace_back(s.data(), s.size());
  return out;
}

std::vector<std::string> FlowModel::parameter_names() const {
  std::vector<std::string> names;
  for (int b = 0; b < block_count(); ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    for (const char* n : {"actnorm.log_scale", "actnorm.bias", "coupling.w1", "coupling.b1", "coupling.w2", "coupling.b2"}) {
      names.push_back(p + n);
    }
  }
  return names;
}

// ---------------------------------------------------------------------------

namespace {
VectorOutput single(const LayerOutput& o) { return {o.y.col(0), o.logdet(0)}; }
}  // namespace

VectorOutput coupling_apply(const LatentVector& x, const CouplingLayer& layer, Direction dir) {
  return single(layer.apply(x, dir));
}

VectorOutput actnorm_apply(const LatentVector& x, const ActNormLayer& layer, Direction dir) {
  return single(layer.apply(x, dir));
}

VectorOutput permutation_apply(const LatentVector& x, const PermutationLayer& layer, Direction dir) {
  return single(layer.apply(x, dir));
}

VectorOutput flow_apply(const LatentVector& x, const FlowModel& model, Direction dir) {
  return single(model.apply(x, dir));
}

Matrix to_batch(std::span<const LatentVector> vectors) {
  if (vectors.empty()) return Matrix();
  const auto d = vectors.front().size();
  Matrix m(d, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (vectors[j].size() != d) throw ShapeError("to_batch: vector " + std::to_string(j) + " has dimension " + std::to_string(vectors[j].size()) + ", expected " + std::to_string(d));
    m.col(static_cast<Eigen::Index>(j)) = vectors[j];
  }
  return m;
}

}  // namespace innlat
