#pragma once

// End-to-end experiment: synthetic corpus -> stratified split -> flows
// trained without and with cluster supervision -> proxy classifiers,
// round-trip ratios, interpolation metrics and bootstrap tests for each
// representation.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "innlat/corpus.hpp"
#include "innlat/eval.hpp"
#include "innlat/flow.hpp"
#include "innlat/train.hpp"

namespace innlat {

inline constexpr const char* kRegimeBaseline = "optimus-like-baseline";
inline constexpr const char* kRegimeUnsupervised = "unsupervised";
inline constexpr const char* kRegimeSupervised = "supervised";

struct EvalConfig {
  double split_ratio = 0.6;
  int invertibility_per_cluster = 100;
  int pairs = 200;
  double step = 0.1;
  int resamples = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  CorpusSpec corpus = CorpusSpec::default_arg0();
  FlowConfig flow;
  TrainingConfig training;
  EvalConfig eval;
};

struct RegimeReport {
  std::string regime;
  std::map<ClassifierKind, MacroReport> classifiers;
  std::map<ClassifierKind, std::vector<std::string>> test_predictions;
  std::vector<ClusterRatio> invertibility;  // empty without a decoder
  std::optional<LocalisationResult> localisation;
  std::optional<SmoothnessStats> smoothness;
  std::vector<double> loss_curve;
};

struct SignificanceRow {
  ClassifierKind classifier;
  std::string pair;  // "O-C": is the second regime more accurate than the first?
  BootstrapResult result;
};

struct ExperimentReport {
  std::string key_role;
  std::uint64_t seed = 0;
  std::vector<RegimeReport> regimes;
  std::vector<SignificanceRow> significance;

  const RegimeReport& regime(const std::string& name) const;
};

/// Labelled data after a split, with column-major design matrices.
struct SplitData {
  std::vector<EmbeddedSentence> train;
  std::vector<EmbeddedSentence> test;
  std::vector<std::string> train_labels;
  std::vector<std::string> test_labels;
};

/// Stratified split on the key-role content; sentences without it are dropped.
SplitData split_corpus(const std::vector<EmbeddedSentence>& corpus, const std::string& key_role, double ratio,
                       std::uint64_t seed);

Matrix design_matrix(const std::vector<EmbeddedSentence>& data);

/// Train one flow on `train` in the given mode.
FitResult train_flow(const std::vector<EmbeddedSentence>& train, const std::string& key_role, TrainMode mode,
                     const FlowConfig& flow, const TrainingConfig& training);

/// All metrics for one representation. `codebook` enables the decoder-based
/// metrics (invertibility, localisation, smoothness).
RegimeReport evaluate_regime(const std::string& name, const FlowModel& model, const SplitData& data,
                             const std::string& key_role, const Codebook* codebook, const EvalConfig& config);

/// Pairwise bootstrap tests O-C, U-C, O-U over whichever regimes are present.
std::vector<SignificanceRow> significance_tests(const std::vector<RegimeReport>& regimes,
                                                const std::vector<std::string>& test_labels, const EvalConfig& config);

using ProgressFn = std::function<void(const std::string&)>;

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Deterministic JSON report (no timestamps).
std::string report_to_json(const ExperimentReport& report);

/// classifier,regime,accuracy,precision,recall,f1
std::string classifier_table_csv(const ExperimentReport& report);

std::string loss_curve_csv(const std::vector<double>& losses);

}  // namespace innlat
