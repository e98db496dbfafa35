#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "innlat/corpus.hpp"
#include "innlat/flow.hpp"

namespace innlat {

// ---------------------------------------------------------------------------
// Train/test split

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified split: each class contributes round(ratio * count) samples
/// (clamped to [1, count - 1]) to train. Index lists are ascending.
Split split_train_test(const std::vector<std::string>& labels, double ratio = 0.6, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Proxy classifiers

enum class ClassifierKind { knn, gaussian_nb, linear_svm };

const char* to_string(ClassifierKind kind);
inline constexpr ClassifierKind kAllClassifiers[] = {ClassifierKind::knn, ClassifierKind::gaussian_nb,
                                                     ClassifierKind::linear_svm};

struct KnnOptions {
  int k = 5;
};

struct SvmOptions {
  double lambda = 1e-3;
  int epochs = 500;
  double learning_rate = 0.1;  // step at epoch t is learning_rate / sqrt(t)
};

class ClassifierModel {
public:
  explicit ClassifierModel(ClassifierKind kind) : kind_(kind) {}

  ClassifierKind kind() const { return kind_; }
  bool trained() const { return !classes_.empty(); }
  const std::vector<std::string>& classes() const { return classes_; }

  /// `x` holds one sample per column.
  void fit(const Matrix& x, const std::vector<std::string>& labels);
  std::string predict(const LatentVector& x) const;
  std::vector<std::string> predict(const Matrix& x) const;

  KnnOptions knn;
  SvmOptions svm;

private:
  std::size_t predict_index(const LatentVector& x) const;

  ClassifierKind kind_;
  std::vector<std::string> classes_;
  // kNN
  Matrix train_x_;
  std::vector<std::size_t> train_y_;
  // Gaussian naive Bayes
  Matrix means_;      // d x C
  Matrix variances_;  // d x C
  Vector log_prior_;
  // Linear SVM, one-vs-rest
  Matrix weights_;  // d x C
  Vector bias_;
};

ClassifierModel fit_classifier(ClassifierKind kind, const Matrix& x, const std::vector<std::string>& labels);

// ---------------------------------------------------------------------------
// Macro metrics

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int support = 0;
};

struct MacroReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

MacroReport macro_report(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);

// ---------------------------------------------------------------------------
// Flow round trips through the decoder

struct ClusterRatio {
  ClusterKey key;
  double ratio = 0.0;
  int count = 0;
};

/// Fraction of each key-role cluster whose decode(T'(T(x))) keeps its
/// role-content. Sentences without `key_role` are skipped.
std::vector<ClusterRatio> invertibility_ratio(const FlowModel& model, const std::vector<EmbeddedSentence>& samples,
                                              const std::string& key_role, const Decoder& decode,
                                              const Labeller& labeller = identity_labeller);

/// Up to `per_cluster` sentences of each key-role content, seeded.
std::vector<EmbeddedSentence> sample_per_cluster(const std::vector<EmbeddedSentence>& data, const std::string& key_role,
                                                 int per_cluster, std::uint64_t seed);

struct SentencePair {
  EmbeddedSentence first;
  EmbeddedSentence second;
  ClusterKey shared;
};

/// Up to `count` random pairs sharing their key-role content and having
/// different structures, seeded.
std::vector<SentencePair> sample_pairs(const std::vector<EmbeddedSentence>& data, const std::string& key_role,
                                       int count, std::uint64_t seed);

/// Decoded sentences along the latent interpolation between two inputs:
/// endpoints plus every interior grid point, all mapped back through T'.
std::vector<SentenceStructure> decode_interpolation(const FlowModel& model, const LatentVector& x1,
                                                    const LatentVector& x2, double step, const Decoder& decode);

struct LocalisationResult {
  std::vector<double> ts;
  std::vector<double> ratios;
};

LocalisationResult localisation_ratio(const FlowModel& model, const std::vector<SentencePair>& pairs, double step,
                                      const Decoder& decode, const Labeller& labeller = identity_labeller);

// ---------------------------------------------------------------------------
// Interpolation smoothness

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm). Returns the cost and, per row, the assigned column.
std::pair<double, std::vector<int>> min_cost_assignment(const Matrix& cost);

/// Aligned semantic distance between two sentences: minimum-cost assignment
/// between their slot prototypes under Euclidean cost, with the smaller
/// sentence padded by null tokens at the origin.
class AssignmentDistance {
public:
  explicit AssignmentDistance(const Codebook& codebook) : codebook_(&codebook) {}
  double operator()(const SentenceStructure& a, const SentenceStructure& b) const;

private:
  const Codebook* codebook_;
};

using SemanticDistance = std::function<double(const SentenceStructure&, const SentenceStructure&)>;

struct SmoothnessStats {
  double avg_is = 0.0;
  double max_is = 0.0;
  double min_is = 0.0;
  std::vector<double> values;
};

/// IS of one path: distance between endpoints over the summed distance of
/// consecutive steps. A path that never moves scores 1.
double path_smoothness(const std::vector<SentenceStructure>& path, const SemanticDistance& delta);

SmoothnessStats interpolation_smoothness(const std::vector<std::vector<SentenceStructure>>& paths,
                                         const SemanticDistance& delta);

// ---------------------------------------------------------------------------
// Paired bootstrap on accuracy

struct BootstrapResult {
  double p_value = 1.0;
  double delta_observed = 0.0;  // acc_a - acc_b
  bool significant = false;     // p_value < alpha
};

/// Resamples test indices with replacement and counts resamples whose
/// accuracy difference reaches twice the observed one (delta* >= 2 delta).
/// A small p-value supports "a is more accurate than b".
BootstrapResult bootstrap_significance(const std::vector<std::string>& preds_a, const std::vector<std::string>& preds_b,
                                       const std::vector<std::string>& golds, double alpha = 0.05,
                                       int resamples = 10000, std::uint64_t seed = 0);

}  // namespace innlat
