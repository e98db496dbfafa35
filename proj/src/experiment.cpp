#include "innlat/experiment.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "innlat/errors.hpp"
#include "innlat/io.hpp"

namespace innlat {

using nlohmann::json;

const RegimeReport& ExperimentReport::regime(const std::string& name) const {
  for (const auto& r : regimes)
    if (r.regime == name) return r;
  throw InputError("report has no regime " + name);
}

SplitData split_corpus(const std::vector<EmbeddedSentence>& corpus, const std::string& key_role, double ratio,
                       std::uint64_t seed) {
  std::vector<const EmbeddedSentence*> keyed;
  std::vector<std::string> labels;
  for (const auto& s : corpus) {
    if (auto c = s.structure.content_of(key_role)) {
      keyed.push_back(&s);
      labels.push_back(*c);
    }
  }
  if (keyed.empty()) throw InputError("split: no sentence carries role " + key_role);
  const Split sp = split_train_test(labels, ratio, seed);
  SplitData out;
  for (auto i : sp.train) {
    out.train.push_back(*keyed[i]);
    out.train_labels.push_back(labels[i]);
  }
  for (auto i : sp.test) {
    out.test.push_back(*keyed[i]);
    out.test_labels.push_back(labels[i]);
  }
  return out;
}

Matrix design_matrix(const std::vector<EmbeddedSentence>& data) {
  if (data.empty()) return Matrix();
  Matrix x(data.front().vector.size(), static_cast<Eigen::Index>(data.size()));
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (data[j].vector.size() != x.rows()) throw ShapeError("sentence " + data[j].id + " has a different dimension");
    x.col(static_cast<Eigen::Index>(j)) = data[j].vector;
  }
  return x;
}

FitResult train_flow(const std::vector<EmbeddedSentence>& train, const std::string& key_role, TrainMode mode,
                     const FlowConfig& flow, const TrainingConfig& training) {
  if (train.empty()) throw InputError("train: empty dataset");
  if (static_cast<int>(train.front().vector.size()) != flow.dim) {
    throw ShapeError("train: data dimension " + std::to_string(train.front().vector.size()) +
                     " differs from model dimension " + std::to_string(flow.dim));
  }
  TrainingConfig cfg = training;
  cfg.mode = mode;
  TrainingSet set;
  set.x = design_matrix(train);
  std::vector<ClusterSpec> clusters;
  if (mode == TrainMode::cluster_supervised) {
    clusters = compute_cluster_specs(train, key_role, cfg.sigma2);
    std::map<std::string, int> index;
    for (std::size_t c = 0; c < clusters.size(); ++c) index[clusters[c].key.content] = static_cast<int>(c);
    for (const auto& s : train) {
      auto c = s.structure.content_of(key_role);
      if (!c) throw InputError("train: sentence " + s.id + " lacks key role " + key_role);
      set.cluster.push_back(index.at(*c));
    }
  }
  FlowModel model = FlowModel::create(flow, cfg.seed ^ 0x5851f42d4c957f2dULL);
  return fit(std::move(model), set, std::move(clusters), cfg);
}

RegimeReport evaluate_regime(const std::string& name, const FlowModel& model, const SplitData& data,
                             const std::string& key_role, const Codebook* codebook, const EvalConfig& config) {
  RegimeReport r;
  r.regime = name;
  const Matrix train_z = model.forward(design_matrix(data.train)).y;
  const Matrix test_z = model.forward(design_matrix(data.test)).y;
  for (ClassifierKind kind : kAllClassifiers) {
    const ClassifierModel clf = fit_classifier(kind, train_z, data.train_labels);
    auto preds = clf.predict(test_z);
    r.classifiers[kind] = macro_report(preds, data.test_labels);
    r.test_predictions[kind] = std::move(preds);
  }
  if (codebook != nullptr) {
    const Decoder decode = [codebook](const LatentVector& v) { return codebook->decode(v); };
    const auto samples = sample_per_cluster(data.test, key_role, config.invertibility_per_cluster, config.seed + 11);
    r.invertibility = invertibility_ratio(model, samples, key_role, decode);
    const auto pairs = sample_pairs(data.test, key_role, config.pairs, config.seed + 13);
    if (!pairs.empty()) {
      r.localisation = localisation_ratio(model, pairs, config.step, decode);
      std::vector<std::vector<SentenceStructure>> paths;
      paths.reserve(pairs.size());
      for (const auto& p : pairs) paths.push_back(decode_interpolation(model, p.first.vector, p.second.vector, config.step, decode));
      const AssignmentDistance delta(*codebook);
      r.smoothness = interpolation_smoothness(paths, delta);
    }
  }
  return r;
}

std::vector<SignificanceRow> significance_tests(const std::vector<RegimeReport>& regimes,
                                                const std::vector<std::string>& test_labels, const EvalConfig& config) {
  auto find = [&regimes](const char* name) -> const RegimeReport* {
    for (const auto& r : regimes)
      if (r.regime == name) return &r;
    return nullptr;
  };
  const std::pair<const char*, const char*> names[] = {
      {kRegimeBaseline, "O"}, {kRegimeUnsupervised, "U"}, {kRegimeSupervised, "C"}};
  // (weaker, stronger) regime orderings in the reported table.
  const std::pair<int, int> order[] = {{0, 2}, {1, 2}, {0, 1}};
  std::vector<SignificanceRow> rows;
  for (ClassifierKind kind : kAllClassifiers) {
    for (auto [lo, hi] : order) {
      const RegimeReport* a = find(names[hi].first);
      const RegimeReport* b = find(names[lo].first);
      if (!a || !b) continue;
      SignificanceRow row;
      row.classifier = kind;
      row.pair = std::string(names[lo].second) + "-" + names[hi].second;
      row.result = bootstrap_significance(a->test_predictions.at(kind), b->test_predictions.at(kind), test_labels,
                                          config.alpha, config.resamples, config.seed + 17);
      rows.push_back(row);
    }
  }
  return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  auto say = [&progress](const std::string& m) {
    if (progress) progress(m);
  };
  const Codebook codebook(config.corpus);
  const auto corpus = synth_generate(config.corpus, codebook);
  const std::string& key = config.corpus.key_role;
  const SplitData data = split_corpus(corpus, key, config.eval.split_ratio, config.eval.seed);

  ExperimentReport report;
  report.key_role = key;
  report.seed = config.eval.seed;

  say("evaluating raw embeddings");
  const FlowModel identity = FlowModel::identity(config.flow.dim, 1, 1, config.flow.clamp);
  report.regimes.push_back(evaluate_regime(kRegimeBaseline, identity, data, key, &codebook, config.eval));

  for (TrainMode mode : {TrainMode::unsupervised, TrainMode::cluster_supervised}) {
    const char* name = mode == TrainMode::unsupervised ? kRegimeUnsupervised : kRegimeSupervised;
    say(std::string("training ") + name + " flow");
    FitResult fr = train_flow(data.train, key, mode, config.flow, config.training);
    say(std::string("evaluating ") + name + " flow");
    RegimeReport r = evaluate_regime(name, fr.model, data, key, &codebook, config.eval);
    r.loss_curve = std::move(fr.epoch_losses);
    report.regimes.push_back(std::move(r));
  }
  report.significance = significance_tests(report.regimes, data.test_labels, config.eval);
  return report;
}

namespace {

json macro_json(const MacroReport& m) {
  json j = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  j["per_class"] = json::array();
  for (const auto& c : m.per_class) {
    j["per_class"].push_back(
        {{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return j;
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  json j;
  j["key_role"] = report.key_role;
  j["seed"] = report.seed;
  j["regimes"] = json::array();
  for (const auto& r : report.regimes) {
    json rj;
    rj["regime"] = r.regime;
    rj["classifiers"] = json::object();
    for (const auto& [kind, m] : r.classifiers) rj["classifiers"][to_string(kind)] = macro_json(m);
    if (!r.invertibility.empty()) {
      rj["invertibility"] = json::array();
      for (const auto& c : r.invertibility) {
        rj["invertibility"].push_back({{"cluster", c.key.str()}, {"ratio", c.ratio}, {"count", c.count}});
      }
    }
    if (r.localisation) rj["localisation"] = {{"t", r.localisation->ts}, {"ratio", r.localisation->ratios}};
    if (r.smoothness) {
      rj["smoothness"] = {{"avg_IS", r.smoothness->avg_is},
                          {"max_IS", r.smoothness->max_is},
                          {"min_IS", r.smoothness->min_is},
                          {"paths", r.smoothness->values.size()}};
    }
    if (!r.loss_curve.empty()) rj["loss_curve"] = r.loss_curve;
    j["regimes"].push_back(std::move(rj));
  }
  j["significance"] = json::array();
  for (const auto& s : report.significance) {
    j["significance"].push_back({{"classifier", to_string(s.classifier)},
                                 {"pair", s.pair},
                                 {"p_value", s.result.p_value},
                                 {"delta_accuracy", s.result.delta_observed},
                                 {"significant", s.result.significant}});
  }
  return j.dump(2) + "\n";
}

std::string classifier_table_csv(const ExperimentReport& report) {
  std::string out = "classifier,regime,accuracy,precision,recall,f1\n";
  for (ClassifierKind kind : kAllClassifiers) {
    for (const auto& r : report.regimes) {
      auto it = r.classifiers.find(kind);
      if (it == r.classifiers.end()) continue;
      const auto& m = it->second;
      out += std::string(to_string(kind)) + "," + r.regime + "," + format_real(m.accuracy) + "," +
             format_real(m.precision) + "," + format_real(m.recall) + "," + format_real(m.f1) + "\n";
    }
  }
  return out;
}

std::string loss_curve_csv(const std::vector<double>& losses) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out += std::to_string(e) + "," + format_real(losses[e]) + "\n";
  return out;
}

}  // namespace innlat
