#include "innlat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <boost/math/special_functions/erf.hpp>

#include "innlat/errors.hpp"

namespace innlat {

namespace {

void require_same_dim(const LatentVector& a, const LatentVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": dimensions " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
}

// Quantiles are kept strictly inside (0, 1) so the inverse CDF stays finite.
constexpr double kQuantileFloor = 1e-15;

}  // namespace

InterpolationPath interpolate_path(const LatentVector& z1, const LatentVector& z2, double step) {
  require_same_dim(z1, z2, "interpolate_path");
  if (!(step > 0.0 && step < 1.0)) throw ParameterError("interpolate_path: step must lie in (0, 1)");
  InterpolationPath path;
  path.source = z1;
  path.target = z2;
  path.step = step;
  const int count = static_cast<int>(std::lround(1.0 / step)) - 1;
  for (int k = 1; k <= count; ++k) {
    const double t = k * step;
    path.ts.push_back(t);
    path.points.push_back(z1 * (1.0 - t) + z2 * t);
  }
  return path;
}

LatentVector latent_average(const LatentVector& v1, const LatentVector& v2) {
  require_same_dim(v1, v2, "latent_average");
  return 0.5 * (v1 + v2);
}

void TraversalWindow::validate() const {
  if (!(half_width > 0.0 && half_width <= 0.5)) throw ParameterError("traversal window: half_width must lie in (0, 0.5]");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("normal_quantile: p must lie in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

LatentVector traverse_neighbour(const LatentVector& v, const TraversalWindow& window, std::mt19937_64& rng) {
  window.validate();
  LatentVector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double q = normal_cdf(v(i));
    const double lo = std::max(q - window.half_width, kQuantileFloor);
    const double hi = std::min(q + window.half_width, 1.0 - kQuantileFloor);
    std::uniform_real_distribution<double> u(lo, hi);
    out(i) = normal_quantile(std::clamp(u(rng), kQuantileFloor, 1.0 - kQuantileFloor));
  }
  return out;
}

AugmentResult augment_cluster(const std::vector<EmbeddedSentence>& corpus, const ClusterKey& target,
                              const Encoder& encode, const Decoder& decode, const Labeller& labeller,
                              const AugmentConfig& config) {
  config.window.validate();
  if (config.budget < 0) throw ParameterError("augment: budget must be >= 0");
  if (config.attempts_per_pair < 1) throw ParameterError("augment: attempts_per_pair must be >= 1");
  if (config.attempt_cap_factor < 1) throw ParameterError("augment: attempt_cap_factor must be >= 1");

  std::vector<std::size_t> subset;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    seen.insert(corpus[i].structure.key());
    if (corpus[i].structure.contains(target)) subset.push_back(i);
  }
  if (subset.size() < 2) {
    throw InputError("augment: need at least 2 sentences holding " + target.str() + ", found " +
                     std::to_string(subset.size()));
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(subset.size() * (subset.size() - 1) / 2);
  for (std::size_t a = 0; a < subset.size(); ++a)
    for (std::size_t b = a + 1; b < subset.size(); ++b) pairs.emplace_back(subset[a], subset[b]);

  std::mt19937_64 rng(config.seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);

  AugmentResult res;
  const long cap = static_cast<long>(config.attempt_cap_factor) * config.budget;
  for (const auto& [i, j] : pairs) {
    if (static_cast<int>(res.sentences.size()) >= config.budget || res.attempts >= cap) break;
    const LatentVector avg = latent_average(encode(corpus[i]), encode(corpus[j]));
    for (int a = 0; a < config.attempts_per_pair; ++a) {
      if (static_cast<int>(res.sentences.size()) >= config.budget || res.attempts >= cap) break;
      ++res.attempts;
      LatentVector v = traverse_neighbour(avg, config.window, rng);
      SentenceStructure decoded = decode(v);
      if (!labeller(decoded).contains(target)) continue;
      if (!seen.insert(decoded.key()).second) continue;
      EmbeddedSentence s;
      s.id = "aug-" + target.str() + "-" + std::to_string(res.sentences.size());
      s.vector = std::move(v);
      s.structure = std::move(decoded);
      res.sentences.push_back(std::move(s));
    }
  }
  return res;
}

PcaResult pca_project(const Matrix& points, int k) {
  const Eigen::Index d = points.rows();
  const Eigen::Index n = points.cols();
  if (k < 1 || k > d) throw ParameterError("pca: k must lie in [1, dim]");
  if (n <= k) throw InputError("pca: need more points than components");

  PcaResult res;
  res.mean = points.rowwise().mean();
  const Matrix centered = points.colwise() - res.mean;
  const Matrix cov = centered * centered.transpose() / static_cast<double>(n - 1);
  const double total = cov.trace();
  if (!(total > 0.0)) throw InputError("pca: all points are identical");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("pca: eigen-decomposition failed");
  // Eigenvalues ascend; take the last k in reverse.
  res.components.resize(d, k);
  res.explained_variance_ratio.resize(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - c;
    Vector comp = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    comp.cwiseAbs().maxCoeff(&arg);
    if (comp(arg) < 0.0) comp = -comp;
    res.components.col(c) = comp;
    res.explained_variance_ratio(c) = std::max(eig.eigenvalues()(src), 0.0) / total;
  }
  res.projections = res.components.transpose() * centered;
  return res;
}

}  // namespace innlat
