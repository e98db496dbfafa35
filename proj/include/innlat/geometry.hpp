#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "innlat/corpus.hpp"
#include "innlat/flow.hpp"

namespace innlat {

struct InterpolationPath {
  LatentVector source;
  LatentVector target;
  double step = 0.1;
  std::vector<double> ts;            // interior grid: step, 2*step, ...
  std::vector<LatentVector> points;  // source*(1-t) + target*t
};

/// Interior points of the straight path; round(1/step) - 1 of them.
InterpolationPath interpolate_path(const LatentVector& z1, const LatentVector& z2, double step = 0.1);

LatentVector latent_average(const LatentVector& v1, const LatentVector& v2);

/// Neighbour window on the standard-normal quantile scale.
struct TraversalWindow {
  double half_width = 0.005;

  void validate() const;
};

double normal_cdf(double x);
double normal_quantile(double p);

/// Resample every coordinate uniformly within +-half_width of its own
/// standard-normal quantile, then map back through the inverse CDF.
LatentVector traverse_neighbour(const LatentVector& v, const TraversalWindow& window, std::mt19937_64& rng);

struct AugmentConfig {
  TraversalWindow window;
  int budget = 100;
  int attempts_per_pair = 1;
  int attempt_cap_factor = 10;  // at most factor * budget decodes
  std::uint64_t seed = 0;
};

struct AugmentResult {
  std::vector<EmbeddedSentence> sentences;
  int attempts = 0;
};

using Encoder = std::function<LatentVector(const EmbeddedSentence&)>;

/// Average-and-traverse augmentation of one role-content cluster.
///
/// Unordered pairs of sentences holding `target` are visited in a seeded
/// random order. Each attempt decodes a traversed neighbour of the pair
/// average; the result is kept when the labeller finds `target` in it and
/// its structure is absent from both the corpus and the output so far.
/// Emitted sentences carry the traversed vector.
AugmentResult augment_cluster(const std::vector<EmbeddedSentence>& corpus, const ClusterKey& target,
                              const Encoder& encode, const Decoder& decode, const Labeller& labeller,
                              const AugmentConfig& config);

struct PcaResult {
  Matrix projections;              // k x n
  Matrix components;               // d x k, orthonormal columns
  Vector explained_variance_ratio; // k
  Vector mean;                     // d
};

/// Top-k principal components of the columns of `points` (d x n).
/// Each component's largest-magnitude coordinate is positive.
PcaResult pca_project(const Matrix& points, int k = 4);

}  // namespace innlat
