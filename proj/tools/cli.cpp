#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "innlat/checkpoint.hpp"
#include "innlat/corpus.hpp"
#include "innlat/errors.hpp"
#include "innlat/eval.hpp"
#include "innlat/experiment.hpp"
#include "innlat/geometry.hpp"
#include "innlat/io.hpp"

namespace innlat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags bound to (section, key) slots of the effective configuration. A
// flag given on the command line overrides the config-file value.
class Options {
public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file; flags override its values");
  }

  template <class T>
  CLI::Option* add(const std::string& flag, const std::string& section, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flag, *value, help);
    apply_.push_back([o, value, section, key](json& cfg) {
      if (o->count() > 0) cfg[section][key] = *value;
    });
    return o;
  }

  json resolve() const {
    json cfg = json::object();
    if (!config_path_.empty()) {
      if (!fs::exists(config_path_)) throw IoError("config file not found: " + config_path_);
      try {
        cfg = json::parse(read_file(config_path_));
      } catch (const json::parse_error& e) {
        throw ParameterError("config " + config_path_ + ": " + e.what());
      }
      if (!cfg.is_object()) throw ParameterError("config " + config_path_ + ": top level must be an object");
    }
    for (const auto& f : apply_) f(cfg);
    return cfg;
  }

private:
  CLI::App* app_;
  std::string config_path_;
  std::vector<std::function<void(json&)>> apply_;
};

template <class T>
T get(const json& cfg, const std::string& section, const std::string& key, T fallback) {
  if (!cfg.contains(section) || !cfg[section].contains(key)) return fallback;
  try {
    return cfg[section][key].get<T>();
  } catch (const json::exception&) {
    throw ParameterError("config: " + section + "." + key + " has the wrong type");
  }
}

template <class T>
T need(json& cfg, const std::string& section, const std::string& key, const std::string& flag) {
  if (!cfg.contains(section) || !cfg[section].contains(key)) throw ParameterError("missing required option " + flag);
  return get<T>(cfg, section, key, T{});
}

// Records defaults into the effective config so the echoed copy is complete.
template <class T>
T fill(json& cfg, const std::string& section, const std::string& key, T fallback) {
  T v = get<T>(cfg, section, key, fallback);
  cfg[section][key] = v;
  return v;
}

fs::path existing(const std::string& p, const char* what) {
  if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p);
  return p;
}

TrainMode parse_mode(const std::string& m) {
  if (m == "unsupervised") return TrainMode::unsupervised;
  if (m == "supervised" || m == "cluster_supervised" || m == "cluster-supervised") return TrainMode::cluster_supervised;
  throw ParameterError("unknown training mode '" + m + "' (expected unsupervised or supervised)");
}

void add_flow_flags(Options& o) {
  o.add<int>("--blocks", "flow", "blocks", "invertible blocks (default 10)");
  o.add<int>("--hidden", "flow", "hidden", "subnet hidden width (default 512)");
  o.add<double>("--clamp", "flow", "clamp", "log-scale soft clamp (default 2.0)");
}

void add_training_flags(Options& o) {
  o.add<int>("--epochs", "training", "epochs", "training epochs (default 50)");
  o.add<int>("--batch-size", "training", "batch_size", "mini-batch size (default 64)");
  o.add<double>("--lr", "training", "learning_rate", "AdamW learning rate (default 5e-4)");
  o.add<double>("--weight-decay", "training", "weight_decay", "AdamW weight decay (default 1e-2)");
  o.add<double>("--sigma2", "training", "sigma2", "cluster variance parameter; target variance is 1 - sigma2 (default 0.6)");
  o.add<std::string>("--centroids", "training", "centroids", "refreshed (default) or fixed");
}

void add_eval_flags(Options& o) {
  o.add<double>("--split", "eval", "split_ratio", "train fraction of the stratified split (default 0.6)");
  o.add<int>("--per-cluster", "eval", "invertibility_per_cluster", "invertibility samples per cluster (default 100)");
  o.add<int>("--pairs", "eval", "pairs", "interpolation pairs (default 200)");
  o.add<double>("--step", "eval", "step", "interpolation step (default 0.1)");
  o.add<int>("--resamples", "eval", "resamples", "bootstrap resamples (default 10000)");
  o.add<double>("--alpha", "eval", "alpha", "bootstrap significance level (default 0.05)");
}

FlowConfig read_flow(json& cfg, int dim) {
  FlowConfig f;
  f.dim = dim;
  cfg["flow"]["dim"] = dim;
  f.blocks = fill(cfg, "flow", "blocks", f.blocks);
  f.hidden = fill(cfg, "flow", "hidden", f.hidden);
  f.clamp = fill(cfg, "flow", "clamp", f.clamp);
  return f;
}

TrainingConfig read_training(json& cfg, std::uint64_t seed) {
  TrainingConfig t;
  t.seed = seed;
  t.epochs = fill(cfg, "training", "epochs", t.epochs);
  t.batch_size = fill(cfg, "training", "batch_size", t.batch_size);
  t.learning_rate = fill(cfg, "training", "learning_rate", t.learning_rate);
  t.weight_decay = fill(cfg, "training", "weight_decay", t.weight_decay);
  t.sigma2 = fill(cfg, "training", "sigma2", t.sigma2);
  const std::string c = fill<std::string>(cfg, "training", "centroids", "refreshed");
  if (c == "refreshed") t.centroid_mode = CentroidMode::refreshed_output;
  else if (c == "fixed") t.centroid_mode = CentroidMode::fixed_input;
  else throw ParameterError("unknown centroid mode '" + c + "' (expected refreshed or fixed)");
  t.validate();
  return t;
}

EvalConfig read_eval(json& cfg, std::uint64_t seed) {
  EvalConfig e;
  e.seed = seed;
  e.split_ratio = fill(cfg, "eval", "split_ratio", e.split_ratio);
  e.invertibility_per_cluster = fill(cfg, "eval", "invertibility_per_cluster", e.invertibility_per_cluster);
  e.pairs = fill(cfg, "eval", "pairs", e.pairs);
  e.step = fill(cfg, "eval", "step", e.step);
  e.resamples = fill(cfg, "eval", "resamples", e.resamples);
  e.alpha = fill(cfg, "eval", "alpha", e.alpha);
  return e;
}

CorpusSpec read_corpus_spec(json& cfg, std::uint64_t seed) {
  const std::string name = fill<std::string>(cfg, "corpus", "spec", "default");
  CorpusSpec s = CorpusSpec::named(name, seed);
  s.samples_per_cluster = fill(cfg, "corpus", "samples_per_cluster", s.samples_per_cluster);
  s.noise = fill(cfg, "corpus", "noise", s.noise);
  s.dim = fill(cfg, "corpus", "dim", s.dim);
  s.key_role = fill(cfg, "corpus", "key_role", s.key_role);
  json scales = json::object();
  for (auto& r : s.roles) {
    r.scale = get(cfg["corpus"], "scales", r.role, r.scale);
    scales[r.role] = r.scale;
  }
  cfg["corpus"]["scales"] = scales;
  s.validate();
  return s;
}

std::vector<EmbeddedSentence> read_corpus(const std::string& path) {
  auto data = load_embeddings(existing(path, "corpus"));
  if (data.empty()) throw InputError("corpus " + path + " is empty");
  return data;
}

// The output location is left out so a rerun into another directory writes
// identical files.
void echo_config(const fs::path& dir, const std::string& command, json cfg) {
  cfg["command"] = command;
  if (cfg.contains("io")) {
    cfg["io"].erase("out");
    if (cfg["io"].empty()) cfg.erase("io");
  }
  write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");
}

std::string labels_json(const SentenceStructure& s) {
  json a = json::array();
  for (const auto& sl : s.slots()) a.push_back({{"role", sl.role}, {"content", sl.content}});
  return a.dump();
}

std::string svg_scatter(const Matrix& xy, const std::vector<std::string>& groups) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::map<std::string, int> color;
  for (const auto& g : groups) color.emplace(g, 0);
  int k = 0;
  for (auto& [g, c] : color) c = k++ % 10;
  const double w = 640, h = 480, pad = 40;
  const double x0 = xy.row(0).minCoeff(), x1 = xy.row(0).maxCoeff();
  const double y0 = xy.row(1).minCoeff(), y1 = xy.row(1).maxCoeff();
  auto sx = [&](double x) { return pad + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (w - 2 * pad); };
  auto sy = [&](double y) { return h - pad - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (h - 2 * pad); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  char buf[160];
  for (Eigen::Index j = 0; j < xy.cols(); ++j) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" fill-opacity=\"0.6\"/>\n",
                  sx(xy(0, j)), sy(xy(1, j)), palette[color[groups[static_cast<std::size_t>(j)]]]);
    s << buf;
  }
  int row = 0;
  for (const auto& [g, c] : color) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"%d\" font-size=\"12\" fill=\"%s\">%s</text>\n", w - 150.0,
                  20 + 16 * row++, palette[c], g.empty() ? "(none)" : g.c_str());
    s << buf;
  }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(json cfg, std::ostream& out) {
  const auto seed = fill<std::uint64_t>(cfg, "corpus", "seed", 0);
  const CorpusSpec spec = read_corpus_spec(cfg, seed);
  const fs::path path = need<std::string>(cfg, "io", "out", "--out");
  const fs::path cb_path = fill<std::string>(cfg, "io", "codebook", path.string() + ".codebook.json");
  const Codebook cb(spec);
  const auto data = synth_generate(spec, cb);
  std::ostringstream s;
  write_embeddings(s, data);
  write_file_atomic(path, s.str());
  write_file_atomic(cb_path, codebook_to_json(cb));
  out << "wrote " << data.size() << " sentences to " << path.string() << "\n";
  return 0;
}

int cmd_train(json cfg, std::ostream& out) {
  const auto data = read_corpus(need<std::string>(cfg, "io", "corpus", "--corpus"));
  const fs::path dir = need<std::string>(cfg, "io", "out", "--out");
  const auto seed = fill<std::uint64_t>(cfg, "training", "seed", 0);
  const TrainMode mode = parse_mode(fill<std::string>(cfg, "training", "mode", "unsupervised"));
  const std::string key_role = normalize_role(fill<std::string>(cfg, "corpus", "key_role", "ARG0"));
  const FlowConfig flow = read_flow(cfg, static_cast<int>(data.front().vector.size()));
  const TrainingConfig training = read_training(cfg, seed);
  std::vector<EmbeddedSentence> train = data;
  if (mode == TrainMode::cluster_supervised) {
    std::erase_if(train, [&](const EmbeddedSentence& s) { return !s.structure.content_of(key_role); });
  }
  FitResult fr = train_flow(train, key_role, mode, flow, training);
  save_checkpoint(fr.model, dir / "model.json");
  write_file_atomic(dir / "loss.csv", loss_curve_csv(fr.epoch_losses));
  echo_config(dir, "train", cfg);
  out << "trained " << (mode == TrainMode::unsupervised ? "unsupervised" : "supervised") << " flow on " << train.size()
      << " sentences; final loss " << (fr.epoch_losses.empty() ? 0.0 : fr.epoch_losses.back()) << "\n";
  return 0;
}

std::optional<Codebook> read_codebook(json& cfg) {
  const std::string p = get<std::string>(cfg, "io", "codebook", "");
  if (p.empty()) return std::nullopt;
  return codebook_from_json(read_file(existing(p, "codebook")));
}

FlowModel read_model(json& cfg, const std::string& key, int dim) {
  const std::string p = get<std::string>(cfg, "io", key, "");
  if (p.empty()) return FlowModel::identity(dim, 1, 1);
  FlowModel m = load_checkpoint(existing(p, "checkpoint"));
  if (m.dim() != dim) {
    throw ShapeError("checkpoint " + p + " has dimension " + std::to_string(m.dim()) + ", corpus has " + std::to_string(dim));
  }
  return m;
}

int cmd_eval(json cfg, std::ostream& out) {
  const auto data = read_corpus(need<std::string>(cfg, "io", "corpus", "--corpus"));
  const fs::path dir = need<std::string>(cfg, "io", "out", "--out");
  const int dim = static_cast<int>(data.front().vector.size());
  const auto seed = fill<std::uint64_t>(cfg, "eval", "seed", 0);
  const std::string key_role = normalize_role(fill<std::string>(cfg, "corpus", "key_role", "ARG0"));
  const EvalConfig ec = read_eval(cfg, seed);
  const auto codebook = read_codebook(cfg);
  if (codebook && codebook->dim() != dim) throw ShapeError("codebook dimension differs from corpus dimension");

  const SplitData split = split_corpus(data, key_role, ec.split_ratio, ec.seed);
  ExperimentReport report;
  report.key_role = key_role;
  report.seed = seed;
  const Codebook* cb = codebook ? &*codebook : nullptr;
  report.regimes.push_back(evaluate_regime(kRegimeBaseline, FlowModel::identity(dim, 1, 1), split, key_role, cb, ec));
  for (const auto& [flag, name] : {std::pair{"unsupervised", kRegimeUnsupervised}, std::pair{"supervised", kRegimeSupervised}}) {
    if (get<std::string>(cfg, "io", flag, "").empty()) continue;
    report.regimes.push_back(evaluate_regime(name, read_model(cfg, flag, dim), split, key_role, cb, ec));
  }
  report.significance = significance_tests(report.regimes, split.test_labels, ec);
  write_file_atomic(dir / "report.json", report_to_json(report));
  write_file_atomic(dir / "classifiers.csv", classifier_table_csv(report));
  echo_config(dir, "eval", cfg);
  out << "evaluated " << report.regimes.size() << " representation(s); report in " << (dir / "report.json").string() << "\n";
  return 0;
}

int cmd_interpolate(json cfg, std::ostream& out) {
  const auto data = read_corpus(need<std::string>(cfg, "io", "corpus", "--corpus"));
  const fs::path path = need<std::string>(cfg, "io", "out", "--out");
  const int dim = static_cast<int>(data.front().vector.size());
  auto codebook = read_codebook(cfg);
  if (!codebook) throw ParameterError("missing required option --codebook");
  const FlowModel model = read_model(cfg, "model", dim);
  const std::string key_role = normalize_role(fill<std::string>(cfg, "corpus", "key_role", "ARG0"));
  const auto seed = fill<std::uint64_t>(cfg, "eval", "seed", 0);
  const int npairs = fill(cfg, "eval", "pairs", 200);
  const double step = fill(cfg, "eval", "step", 0.1);
  const auto pairs = sample_pairs(data, key_role, npairs, seed);
  const Decoder decode = [&](const LatentVector& v) { return codebook->decode(v); };
  const AssignmentDistance delta(*codebook);
  const auto ts = interpolate_path(LatentVector::Zero(1), LatentVector::Zero(1), step).ts;

  std::string body;
  for (const auto& p : pairs) {
    const auto seq = decode_interpolation(model, p.first.vector, p.second.vector, step, decode);
    json rec;
    rec["source"] = p.first.id;
    rec["target"] = p.second.id;
    rec["shared"] = p.shared.str();
    std::vector<double> grid{0.0};
    grid.insert(grid.end(), ts.begin(), ts.end());
    grid.push_back(1.0);
    rec["t"] = grid;
    rec["decoded"] = json::array();
    for (const auto& s : seq) rec["decoded"].push_back({{"labels", json::parse(labels_json(s))}, {"text", codebook->render(s)}});
    rec["IS"] = path_smoothness(seq, delta);
    body += rec.dump() + "\n";
  }
  write_file_atomic(path, body);
  out << "wrote " << pairs.size() << " interpolation paths to " << path.string() << "\n";
  return 0;
}

int cmd_augment(json cfg, std::ostream& out) {
  const auto data = read_corpus(need<std::string>(cfg, "io", "corpus", "--corpus"));
  const fs::path path = need<std::string>(cfg, "io", "out", "--out");
  auto codebook = read_codebook(cfg);
  if (!codebook) throw ParameterError("missing required option --codebook");
  const ClusterKey target{normalize_role(need<std::string>(cfg, "augment", "role", "--role")),
                          need<std::string>(cfg, "augment", "content", "--content")};
  AugmentConfig ac;
  ac.budget = fill(cfg, "augment", "budget", ac.budget);
  ac.window.half_width = fill(cfg, "augment", "window", ac.window.half_width);
  ac.attempts_per_pair = fill(cfg, "augment", "attempts_per_pair", ac.attempts_per_pair);
  ac.seed = fill<std::uint64_t>(cfg, "augment", "seed", 0);
  const auto res = augment_cluster(
      data, target, [](const EmbeddedSentence& s) { return s.vector; },
      [&](const LatentVector& v) { return codebook->decode(v); }, identity_labeller, ac);
  std::ostringstream s;
  auto sentences = res.sentences;
  for (auto& e : sentences) e.text = codebook->render(e.structure);
  write_embeddings(s, sentences);
  write_file_atomic(path, s.str());
  out << "kept " << sentences.size() << " of " << res.attempts << " decoded neighbours for " << target.str() << "\n";
  return 0;
}

int cmd_project(json cfg, std::ostream& out) {
  const auto data = read_corpus(need<std::string>(cfg, "io", "corpus", "--corpus"));
  const fs::path path = need<std::string>(cfg, "io", "out", "--out");
  const int dim = static_cast<int>(data.front().vector.size());
  const FlowModel model = read_model(cfg, "model", dim);
  const int k = fill(cfg, "project", "k", 4);
  const std::string key_role = normalize_role(fill<std::string>(cfg, "corpus", "key_role", "ARG0"));
  const Matrix z = model.forward(design_matrix(data)).y;
  const PcaResult pca = pca_project(z, k);
  if (k < 2) throw ParameterError("project: k must be >= 2 for a planar projection");

  std::string csv = "id,x,y,role,content\n";
  std::vector<std::string> groups;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const auto content = data[j].structure.content_of(key_role).value_or("");
    groups.push_back(content);
    csv += json(data[j].id).dump() + "," + format_real(pca.projections(0, static_cast<Eigen::Index>(j))) + "," +
           format_real(pca.projections(1, static_cast<Eigen::Index>(j))) + "," + key_role + "," + content + "\n";
  }
  write_file_atomic(path, csv);
  const std::string svg = get<std::string>(cfg, "io", "svg", "");
  if (!svg.empty()) write_file_atomic(svg, svg_scatter(pca.projections.topRows(2), groups));
  out << "projected " << data.size() << " points; explained variance";
  for (Eigen::Index c = 0; c < pca.explained_variance_ratio.size(); ++c) out << " " << pca.explained_variance_ratio(c);
  out << "\n";
  return 0;
}

int cmd_experiment(json cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir = need<std::string>(cfg, "io", "out", "--out");
  const auto seed = fill<std::uint64_t>(cfg, "experiment", "seed", 0);
  ExperimentConfig ec;
  ec.corpus = read_corpus_spec(cfg, seed);
  ec.flow = read_flow(cfg, ec.corpus.dim);
  ec.training = read_training(cfg, seed);
  ec.eval = read_eval(cfg, seed);
  const ExperimentReport report = run_experiment(ec, [&err](const std::string& m) { err << m << "\n"; });
  write_file_atomic(dir / "report.json", report_to_json(report));
  write_file_atomic(dir / "classifiers.csv", classifier_table_csv(report));
  write_file_atomic(dir / "loss_unsupervised.csv", loss_curve_csv(report.regime(kRegimeUnsupervised).loss_curve));
  write_file_atomic(dir / "loss_supervised.csv", loss_curve_csv(report.regime(kRegimeSupervised).loss_curve));
  echo_config(dir, "experiment", cfg);
  out << classifier_table_csv(report);
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invertible flows over sentence embeddings: training, latent geometry and disentanglement metrics",
               "innlat"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic compositional corpus (JSONL + codebook)");
  Options gen_o(gen);
  gen_o.add<std::string>("--spec", "corpus", "spec", "default | arg0 | pred | gaussian");
  gen_o.add<std::uint64_t>("--seed", "corpus", "seed", "generator seed (default 0)");
  gen_o.add<int>("--samples-per-cluster", "corpus", "samples_per_cluster", "sentences per key-role content");
  gen_o.add<double>("--noise", "corpus", "noise", "composition noise std");
  gen_o.add<int>("--dim", "corpus", "dim", "embedding dimension");
  gen_o.add<std::string>("--out", "io", "out", "output JSONL path");
  gen_o.add<std::string>("--codebook", "io", "codebook", "codebook path (default <out>.codebook.json)");

  auto* train = app.add_subcommand("train", "Train a flow; writes model.json, loss.csv, config.json");
  Options train_o(train);
  train_o.add<std::string>("--corpus", "io", "corpus", "input JSONL");
  train_o.add<std::string>("--out", "io", "out", "output directory");
  train_o.add<std::string>("--mode", "training", "mode", "unsupervised | supervised");
  train_o.add<std::string>("--key-role", "corpus", "key_role", "role whose contents define clusters (default ARG0)");
  train_o.add<std::uint64_t>("--seed", "training", "seed", "training seed (default 0)");
  add_flow_flags(train_o);
  add_training_flags(train_o);

  auto* eval = app.add_subcommand("eval", "Evaluate raw, unsupervised and supervised representations");
  Options eval_o(eval);
  eval_o.add<std::string>("--corpus", "io", "corpus", "input JSONL");
  eval_o.add<std::string>("--codebook", "io", "codebook", "synthetic codebook (enables decoder-based metrics)");
  eval_o.add<std::string>("--unsupervised", "io", "unsupervised", "checkpoint of the unsupervised flow");
  eval_o.add<std::string>("--supervised", "io", "supervised", "checkpoint of the cluster-supervised flow");
  eval_o.add<std::string>("--out", "io", "out", "output directory");
  eval_o.add<std::string>("--key-role", "corpus", "key_role", "role under study (default ARG0)");
  eval_o.add<std::uint64_t>("--seed", "eval", "seed", "evaluation seed (default 0)");
  add_eval_flags(eval_o);

  auto* interp = app.add_subcommand("interpolate", "Decode interpolation paths between sentence pairs");
  Options interp_o(interp);
  interp_o.add<std::string>("--corpus", "io", "corpus", "input JSONL");
  interp_o.add<std::string>("--codebook", "io", "codebook", "synthetic codebook");
  interp_o.add<std::string>("--model", "io", "model", "flow checkpoint (raw space if omitted)");
  interp_o.add<std::string>("--out", "io", "out", "output JSONL of decoded paths");
  interp_o.add<std::string>("--key-role", "corpus", "key_role", "role shared by each pair (default ARG0)");
  interp_o.add<std::uint64_t>("--seed", "eval", "seed", "pair sampling seed (default 0)");
  interp_o.add<int>("--pairs", "eval", "pairs", "number of pairs (default 200)");
  interp_o.add<double>("--step", "eval", "step", "interpolation step (default 0.1)");

  auto* aug = app.add_subcommand("augment", "Average-and-traverse augmentation of one role-content cluster");
  Options aug_o(aug);
  aug_o.add<std::string>("--corpus", "io", "corpus", "input JSONL");
  aug_o.add<std::string>("--codebook", "io", "codebook", "synthetic codebook");
  aug_o.add<std::string>("--out", "io", "out", "output JSONL");
  aug_o.add<std::string>("--role", "augment", "role", "target role");
  aug_o.add<std::string>("--content", "augment", "content", "target content");
  aug_o.add<int>("--budget", "augment", "budget", "sentences to emit (default 100)");
  aug_o.add<double>("--window", "augment", "window", "quantile half-width (default 0.005)");
  aug_o.add<int>("--attempts-per-pair", "augment", "attempts_per_pair", "neighbours drawn per pair (default 1)");
  aug_o.add<std::uint64_t>("--seed", "augment", "seed", "traversal seed (default 0)");

  auto* proj = app.add_subcommand("project", "PCA projection of raw or flow-mapped embeddings (CSV, optional SVG)");
  Options proj_o(proj);
  proj_o.add<std::string>("--corpus", "io", "corpus", "input JSONL");
  proj_o.add<std::string>("--model", "io", "model", "flow checkpoint (raw space if omitted)");
  proj_o.add<std::string>("--out", "io", "out", "output CSV");
  proj_o.add<std::string>("--svg", "io", "svg", "optional SVG scatter");
  proj_o.add<int>("--k", "project", "k", "principal components (default 4)");
  proj_o.add<std::string>("--key-role", "corpus", "key_role", "role used for colouring (default ARG0)");

  auto* exp = app.add_subcommand("experiment", "Full pipeline on a synthetic corpus: train both flows and evaluate");
  Options exp_o(exp);
  exp_o.add<std::string>("--spec", "corpus", "spec", "default | arg0 | pred");
  exp_o.add<std::uint64_t>("--seed", "experiment", "seed", "seed for corpus, training and evaluation (default 0)");
  exp_o.add<int>("--samples-per-cluster", "corpus", "samples_per_cluster", "sentences per key-role content");
  exp_o.add<std::string>("--out", "io", "out", "output directory");
  add_flow_flags(exp_o);
  add_training_flags(exp_o);
  add_eval_flags(exp_o);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "innlat: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::config);
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(gen_o.resolve(), out);
    if (train->parsed()) return cmd_train(train_o.resolve(), out);
    if (eval->parsed()) return cmd_eval(eval_o.resolve(), out);
    if (interp->parsed()) return cmd_interpolate(interp_o.resolve(), out);
    if (aug->parsed()) return cmd_augment(aug_o.resolve(), out);
    if (proj->parsed()) return cmd_project(proj_o.resolve(), out);
    if (exp->parsed()) return cmd_experiment(exp_o.resolve(), out, err);
  } catch (const Error& e) {
    err << "innlat: error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "innlat: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::invariant);
  }
  return static_cast<int>(ErrorKind::config);
}

}  // namespace innlat::cli
