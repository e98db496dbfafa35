#include "innlat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "innlat/errors.hpp"
#include "innlat/geometry.hpp"

namespace innlat {

// ---------------------------------------------------------------------------
// Split

Split split_train_test(const std::vector<std::string>& labels, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("split: ratio must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2) throw InputError("split: class '" + label + "' has fewer than 2 samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    const long n = static_cast<long>(idx.size());
    const long n_train = std::clamp(std::lround(ratio * static_cast<double>(n)), 1L, n - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + n_train);
    s.test.insert(s.test.end(), idx.begin() + n_train, idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Classifiers

const char* to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::knn: return "kNN";
    case ClassifierKind::gaussian_nb: return "NB";
    case ClassifierKind::linear_svm: return "SVM";
  }
  return "?";
}

void ClassifierModel::fit(const Matrix& x, const std::vector<std::string>& labels) {
  const Eigen::Index d = x.rows();
  const Eigen::Index n = x.cols();
  if (n == 0) throw InputError("classifier: empty training set");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("classifier: label count differs from sample count");
  if (!x.allFinite()) throw NumericError("classifier: non-finite training data");

  std::set<std::string> uniq(labels.begin(), labels.end());
  std::vector<std::string> classes(uniq.begin(), uniq.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c]] = c;
  std::vector<std::size_t> y(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) y[j] = index[labels[j]];
  const auto nc = static_cast<Eigen::Index>(classes.size());

  switch (kind_) {
    case ClassifierKind::knn: {
      if (knn.k < 1) throw ParameterError("kNN: k must be >= 1");
      train_x_ = x;
      train_y_ = y;
      break;
    }
    case ClassifierKind::gaussian_nb: {
      const Vector overall_mean = x.rowwise().mean();
      const double max_var =
          ((x.colwise() - overall_mean).array().square().rowwise().sum() / static_cast<double>(n)).maxCoeff();
      const double smoothing = 1e-9 * max_var;
      means_ = Matrix::Zero(d, nc);
      variances_ = Matrix::Zero(d, nc);
      log_prior_ = Vector::Zero(nc);
      std::vector<double> counts(static_cast<std::size_t>(nc), 0.0);
      for (Eigen::Index j = 0; j < n; ++j) {
        means_.col(y[j]) += x.col(j);
        counts[y[j]] += 1.0;
      }
      for (Eigen::Index c = 0; c < nc; ++c) means_.col(c) /= counts[c];
      for (Eigen::Index j = 0; j < n; ++j) variances_.col(y[j]) += (x.col(j) - means_.col(y[j])).cwiseAbs2();
      for (Eigen::Index c = 0; c < nc; ++c) {
        variances_.col(c) = variances_.col(c) / counts[c];
        variances_.col(c).array() += smoothing;
        log_prior_(c) = std::log(counts[c] / static_cast<double>(n));
      }
      if ((variances_.array() <= 0.0).any()) throw InputError("NB: zero feature variance after smoothing");
      break;
    }
    case ClassifierKind::linear_svm: {
      if (!(svm.lambda > 0.0) || svm.epochs < 1 || !(svm.learning_rate > 0.0)) throw ParameterError("SVM: invalid options");
      weights_ = Matrix::Zero(d, nc);
      bias_ = Vector::Zero(nc);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (Eigen::Index c = 0; c < nc; ++c) {
        Vector sign(n);
        for (Eigen::Index j = 0; j < n; ++j) sign(j) = y[j] == static_cast<std::size_t>(c) ? 1.0 : -1.0;
        Vector w = Vector::Zero(d);
        double b = 0.0;
        auto objective = [&](const Vector& wv, double bv, Vector& margin) {
          margin = sign.cwiseProduct((x.transpose() * wv).array().matrix() + Vector::Constant(n, bv));
          return 0.5 * svm.lambda * wv.squaredNorm() + inv_n * (1.0 - margin.array()).max(0.0).sum();
        };
        Vector margin;
        double best = objective(w, b, margin);
        Vector best_w = w;
        double best_b = b;
        for (int t = 1; t <= svm.epochs; ++t) {
          // Subgradient of lambda/2 |w|^2 + mean hinge.
          Vector active = (margin.array() < 1.0).select(sign, 0.0);
          const Vector gw = svm.lambda * w - inv_n * (x * active);
          const double gb = -inv_n * active.sum();
          const double lr = svm.learning_rate / std::sqrt(static_cast<double>(t));
          w -= lr * gw;
          b -= lr * gb;
          const double obj = objective(w, b, margin);
          if (obj < best) {
            best = obj;
            best_w = w;
            best_b = b;
          }
        }
        weights_.col(c) = best_w;
        bias_(c) = best_b;
      }
      break;
    }
  }
  classes_ = std::move(classes);
}

std::size_t ClassifierModel::predict_index(const LatentVector& x) const {
  if (!trained()) throw StateError(std::string(to_string(kind_)) + ": predict called before fit");
  const auto nc = classes_.size();
  switch (kind_) {
    case ClassifierKind::knn: {
      if (x.size() != train_x_.rows()) throw ShapeError("kNN: query dimension mismatch");
      const Eigen::Index n = train_x_.cols();
      std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
      for (Eigen::Index j = 0; j < n; ++j) dist[j] = {(train_x_.col(j) - x).squaredNorm(), j};
      const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(knn.k, n));
      std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
      std::vector<int> votes(nc, 0);
      std::vector<double> summed(nc, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        const auto c = train_y_[dist[i].second];
        ++votes[c];
        summed[c] += std::sqrt(dist[i].first);
      }
      // Most votes, then smallest summed distance, then smallest label.
      std::size_t best = nc;
      for (std::size_t c = 0; c < nc; ++c) {
        if (votes[c] == 0) continue;
        if (best == nc || votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best])) best = c;
      }
      return best;
    }
    case ClassifierKind::gaussian_nb: {
      if (x.size() != means_.rows()) throw ShapeError("NB: query dimension mismatch");
      std::size_t best = 0;
      double best_ll = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < nc; ++c) {
        const auto var = variances_.col(static_cast<Eigen::Index>(c)).array();
        const auto diff = x.array() - means_.col(static_cast<Eigen::Index>(c)).array();
        const double ll = log_prior_(static_cast<Eigen::Index>(c)) -
                          0.5 * (2.0 * std::numbers::pi * var).log().sum() - 0.5 * (diff.square() / var).sum();
        if (ll > best_ll) {
          best_ll = ll;
          best = c;
        }
      }
      return best;
    }
    case ClassifierKind::linear_svm: {
      if (x.size() != weights_.rows()) throw ShapeError("SVM: query dimension mismatch");
      const Vector scores = weights_.transpose() * x + bias_;
      Eigen::Index best = 0;
      scores.maxCoeff(&best);
      return static_cast<std::size_t>(best);
    }
  }
  return 0;
}

std::string ClassifierModel::predict(const LatentVector& x) const { return classes_.at(predict_index(x)); }

std::vector<std::string> ClassifierModel::predict(const Matrix& x) const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.push_back(predict(LatentVector(x.col(j))));
  return out;
}

ClassifierModel fit_classifier(ClassifierKind kind, const Matrix& x, const std::vector<std::string>& labels) {
  ClassifierModel m(kind);
  m.fit(x, labels);
  return m;
}

// ---------------------------------------------------------------------------
// Metrics

MacroReport macro_report(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) throw ShapeError("macro_report: prediction and gold counts differ");
  if (golds.empty()) throw InputError("macro_report: empty input");
  std::set<std::string> classes(golds.begin(), golds.end());
  MacroReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) correct += predictions[i] == golds[i];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(golds.size());
  for (const auto& c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      const bool p = predictions[i] == c;
      const bool g = golds[i] == c;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    ClassMetrics m;
    m.label = c;
    m.support = tp + fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.precision += m.precision;
    r.recall += m.recall;
    r.f1 += m.f1;
    r.per_class.push_back(m);
  }
  const double nc = static_cast<double>(classes.size());
  r.precision /= nc;
  r.recall /= nc;
  r.f1 /= nc;
  return r;
}

// ---------------------------------------------------------------------------
// Round trips

std::vector<ClusterRatio> invertibility_ratio(const FlowModel& model, const std::vector<EmbeddedSentence>& samples,
                                              const std::string& key_role, const Decoder& decode,
                                              const Labeller& labeller) {
  std::vector<const EmbeddedSentence*> keyed;
  for (const auto& s : samples)
    if (s.structure.content_of(key_role)) keyed.push_back(&s);
  if (keyed.empty()) throw InputError("invertibility: no sample carries role " + key_role);

  Matrix x(model.dim(), static_cast<Eigen::Index>(keyed.size()));
  for (std::size_t j = 0; j < keyed.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = keyed[j]->vector;
  const Matrix back = model.inverse(model.forward(x).y).y;

  std::map<ClusterKey, std::pair<int, int>> tally;  // kept, total
  for (std::size_t j = 0; j < keyed.size(); ++j) {
    const ClusterKey key{normalize_role(key_role), *keyed[j]->structure.content_of(key_role)};
    auto& t = tally[key];
    ++t.second;
    if (labeller(decode(back.col(static_cast<Eigen::Index>(j)))).contains(key)) ++t.first;
  }
  std::vector<ClusterRatio> out;
  for (const auto& [key, t] : tally) out.push_back({key, static_cast<double>(t.first) / t.second, t.second});
  return out;
}

std::vector<EmbeddedSentence> sample_per_cluster(const std::vector<EmbeddedSentence>& data, const std::string& key_role,
                                                 int per_cluster, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (auto c = data[i].structure.content_of(key_role)) groups[*c].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<EmbeddedSentence> out;
  for (auto& [content, idx] : groups) {
    if (idx.empty()) throw InputError("sample_per_cluster: empty cluster " + content);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(per_cluster, 0)));
    for (std::size_t i = 0; i < take; ++i) out.push_back(data[idx[i]]);
  }
  return out;
}

std::vector<SentencePair> sample_pairs(const std::vector<EmbeddedSentence>& data, const std::string& key_role,
                                       int count, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (auto c = data[i].structure.content_of(key_role)) groups[*c].push_back(i);
  std::vector<std::pair<std::string, std::vector<std::size_t>*>> usable;
  for (auto& [content, idx] : groups)
    if (idx.size() >= 2) usable.emplace_back(content, &idx);
  if (usable.empty()) throw InputError("sample_pairs: no cluster of role " + key_role + " has two sentences");

  std::mt19937_64 rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> taken;
  std::vector<SentencePair> out;
  const long max_tries = 100L * std::max(count, 1);
  for (long tries = 0; static_cast<int>(out.size()) < count && tries < max_tries; ++tries) {
    std::uniform_int_distribution<std::size_t> pick_group(0, usable.size() - 1);
    const auto& [content, idx] = usable[pick_group(rng)];
    std::uniform_int_distribution<std::size_t> pick(0, idx->size() - 1);
    std::size_t a = (*idx)[pick(rng)];
    std::size_t b = (*idx)[pick(rng)];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (data[a].structure == data[b].structure) continue;
    if (!taken.insert({a, b}).second) continue;
    out.push_back({data[a], data[b], {normalize_role(key_role), content}});
  }
  return out;
}

std::vector<SentenceStructure> decode_interpolation(const FlowModel& model, const LatentVector& x1,
                                                    const LatentVector& x2, double step, const Decoder& decode) {
  Matrix ends(model.dim(), 2);
  ends.col(0) = x1;
  ends.col(1) = x2;
  const Matrix z = model.forward(ends).y;
  const InterpolationPath path = interpolate_path(z.col(0), z.col(1), step);
  Matrix latent(model.dim(), static_cast<Eigen::Index>(path.points.size()) + 2);
  latent.col(0) = path.source;
  for (std::size_t k = 0; k < path.points.size(); ++k) latent.col(static_cast<Eigen::Index>(k) + 1) = path.points[k];
  latent.col(latent.cols() - 1) = path.target;
  const Matrix back = model.inverse(latent).y;
  std::vector<SentenceStructure> out;
  out.reserve(static_cast<std::size_t>(back.cols()));
  for (Eigen::Index j = 0; j < back.cols(); ++j) out.push_back(decode(back.col(j)));
  return out;
}

LocalisationResult localisation_ratio(const FlowModel& model, const std::vector<SentencePair>& pairs, double step,
                                      const Decoder& decode, const Labeller& labeller) {
  if (pairs.empty()) throw InputError("localisation: no pairs");
  LocalisationResult r;
  r.ts = interpolate_path(LatentVector::Zero(1), LatentVector::Zero(1), step).ts;
  std::vector<int> kept(r.ts.size(), 0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& pr = pairs[p];
    if (!pr.first.structure.contains(pr.shared) || !pr.second.structure.contains(pr.shared)) {
      throw InputError("localisation: pair " + std::to_string(p) + " does not share " + pr.shared.str());
    }
    const auto seq = decode_interpolation(model, pr.first.vector, pr.second.vector, step, decode);
    for (std::size_t k = 0; k < r.ts.size(); ++k) kept[k] += labeller(seq[k + 1]).contains(pr.shared);
  }
  for (int k : kept) r.ratios.push_back(static_cast<double>(k) / static_cast<double>(pairs.size()));
  return r;
}

// ---------------------------------------------------------------------------
// Smoothness

std::pair<double, std::vector<int>> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ShapeError("assignment: cost matrix must be square");
  if (n == 0) return {0.0, {}};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Potentials formulation, 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += cost(i, assign[i]);
  return {total, assign};
}

double AssignmentDistance::operator()(const SentenceStructure& a, const SentenceStructure& b) const {
  const auto& sa = a.slots();
  const auto& sb = b.slots();
  const std::size_t n = std::max(sa.size(), sb.size());
  const int d = codebook_->dim();
  auto token = [&](const std::vector<Slot>& s, std::size_t i) -> LatentVector {
    return i < s.size() ? codebook_->prototype(s[i].role, s[i].content) : LatentVector::Zero(d);
  };
  Matrix cost(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = (token(sa, i) - token(sb, j)).norm();
  return min_cost_assignment(cost).first;
}

double path_smoothness(const std::vector<SentenceStructure>& path, const SemanticDistance& delta) {
  if (path.size() < 2) throw InputError("smoothness: path needs at least 2 sentences");
  const double direct = delta(path.front(), path.back());
  double walked = 0.0;
  for (std::size_t t = 0; t + 1 < path.size(); ++t) walked += delta(path[t], path[t + 1]);
  if (walked == 0.0) {
    if (direct == 0.0) return 1.0;
    throw Error(ErrorKind::invariant, "smoothness: zero path length with distinct endpoints");
  }
  return direct / walked;
}

SmoothnessStats interpolation_smoothness(const std::vector<std::vector<SentenceStructure>>& paths,
                                         const SemanticDistance& delta) {
  if (paths.empty()) throw InputError("smoothness: no paths");
  SmoothnessStats st;
  for (const auto& p : paths) st.values.push_back(path_smoothness(p, delta));
  double sum = 0.0;
  for (double v : st.values) sum += v;
  st.avg_is = sum / static_cast<double>(st.values.size());
  st.max_is = *std::max_element(st.values.begin(), st.values.end());
  st.min_is = *std::min_element(st.values.begin(), st.values.end());
  return st;
}

// ---------------------------------------------------------------------------
// Bootstrap

BootstrapResult bootstrap_significance(const std::vector<std::string>& preds_a, const std::vector<std::string>& preds_b,
                                       const std::vector<std::string>& golds, double alpha, int resamples,
                                       std::uint64_t seed) {
  if (preds_a.size() != golds.size() || preds_b.size() != golds.size()) {
    throw ShapeError("bootstrap: prediction and gold lengths differ");
  }
  if (golds.empty()) throw InputError("bootstrap: empty input");
  if (resamples < 1) throw ParameterError("bootstrap: resamples must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("bootstrap: alpha must lie in (0, 1)");

  const std::size_t n = golds.size();
  // Per-item accuracy difference in {-1, 0, 1}; sums stay integral.
  std::vector<int> diff(n);
  long observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = static_cast<int>(preds_a[i] == golds[i]) - static_cast<int>(preds_b[i] == golds[i]);
    observed += diff[i];
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  long hits = 0;
  for (int r = 0; r < resamples; ++r) {
    long s = 0;
    for (std::size_t i = 0; i < n; ++i) s += diff[pick(rng)];
    if (s >= 2 * observed) ++hits;
  }
  BootstrapResult res;
  res.delta_observed = static_cast<double>(observed) / static_cast<double>(n);
  res.p_value = static_cast<double>(hits) / static_cast<double>(resamples);
  res.significant = res.p_value < alpha;
  return res;
}

}  // namespace innlat
