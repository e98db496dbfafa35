#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "innlat/checkpoint.hpp"
#include "innlat/corpus.hpp"
#include "innlat/errors.hpp"
#include "innlat/eval.hpp"
#include "innlat/experiment.hpp"
#include "innlat/flow.hpp"
#include "innlat/geometry.hpp"
#include "innlat/train.hpp"

namespace py = pybind11;
using namespace innlat;

namespace {

std::vector<const ClusterSpec*> target_pointers(const std::vector<ClusterSpec>& specs, const std::vector<int>& idx) {
  std::vector<const ClusterSpec*> out;
  out.reserve(idx.size());
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= specs.size()) throw ParameterError("cluster index out of range");
    out.push_back(&specs[static_cast<std::size_t>(i)]);
  }
  return out;
}

TrainMode parse_mode(const std::string& s) {
  if (s == "unsupervised") return TrainMode::unsupervised;
  if (s == "supervised" || s == "cluster_supervised") return TrainMode::cluster_supervised;
  throw ParameterError("unknown training mode " + s);
}

ClassifierKind parse_kind(const std::string& s) {
  for (ClassifierKind k : kAllClassifiers)
    if (s == to_string(k)) return k;
  throw ParameterError("unknown classifier " + s);
}

}  // namespace

PYBIND11_MODULE(_innlat, m) {
  m.doc() = "Invertible flows over sentence embeddings";

  static py::exception<Error> base(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParameterError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  // flow
  py::class_<FlowConfig>(m, "FlowConfig")
      .def(py::init<>())
      .def(py::init([](int dim, int blocks, int hidden, double clamp) { return FlowConfig{dim, blocks, hidden, clamp}; }),
           py::arg("dim") = 32, py::arg("blocks") = 10, py::arg("hidden") = 512, py::arg("clamp") = 2.0)
      .def_readwrite("dim", &FlowConfig::dim)
      .def_readwrite("blocks", &FlowConfig::blocks)
      .def_readwrite("hidden", &FlowConfig::hidden)
      .def_readwrite("clamp", &FlowConfig::clamp);

  py::class_<FlowModel>(m, "FlowModel")
      .def_static(
          "create",
          [](const FlowConfig& c, std::uint64_t seed, bool random) {
            return FlowModel::create(c, seed, random ? SubnetInit::random : SubnetInit::identity);
          },
          py::arg("config"), py::arg("seed") = 0, py::arg("random") = false)
      .def_static("identity", &FlowModel::identity, py::arg("dim"), py::arg("blocks"), py::arg("hidden"),
                  py::arg("clamp") = 2.0)
      .def_property_readonly("dim", &FlowModel::dim)
      .def_property_readonly("block_count", &FlowModel::block_count)
      .def_property_readonly("initialized", &FlowModel::initialized)
      .def("initialize_actnorm", &FlowModel::initialize_actnorm, py::arg("batch"))
      .def(
          "forward", [](const FlowModel& f, const Matrix& x) {
            auto o = f.forward(x);
            return py::make_tuple(o.y, o.logdet);
          },
          py::arg("x"), "Columns are samples. Returns (z, logdet).")
      .def(
          "inverse", [](const FlowModel& f, const Matrix& z) {
            auto o = f.inverse(z);
            return py::make_tuple(o.y, o.logdet);
          },
          py::arg("z"))
      .def("parameter_names", &FlowModel::parameter_names)
      .def("to_json", &checkpoint_to_string)
      .def_static("from_json", &checkpoint_from_string)
      .def("save", &save_checkpoint, py::arg("path"))
      .def_static("load", &load_checkpoint, py::arg("path"));

  // train
  py::class_<ClusterKey>(m, "ClusterKey")
      .def(py::init([](std::string role, std::string content) { return ClusterKey{std::move(role), std::move(content)}; }))
      .def_readwrite("role", &ClusterKey::role)
      .def_readwrite("content", &ClusterKey::content)
      .def("__str__", &ClusterKey::str)
      .def("__eq__", [](const ClusterKey& a, const ClusterKey& b) { return a == b; });

  py::class_<ClusterSpec>(m, "ClusterSpec")
      .def(py::init([](ClusterKey key, LatentVector mu, double sigma2) { return ClusterSpec{std::move(key), std::move(mu), sigma2}; }),
           py::arg("key"), py::arg("mu"), py::arg("sigma2") = 0.6)
      .def_readwrite("key", &ClusterSpec::key)
      .def_readwrite("mu", &ClusterSpec::mu)
      .def_readwrite("sigma2", &ClusterSpec::sigma2)
      .def_property_readonly("variance", &ClusterSpec::variance);

  m.def("loss_unsupervised", &loss_unsupervised, py::arg("z"), py::arg("logdet"));
  m.def("loss_cluster_supervised", &loss_cluster_supervised, py::arg("z"), py::arg("logdet"), py::arg("spec"));
  m.def(
      "batch_loss",
      [](const FlowModel& f, const Matrix& x, const std::string& mode, const std::vector<ClusterSpec>& specs,
         const std::vector<int>& clusters) {
        const auto t = target_pointers(specs, clusters);
        return batch_loss(f, x, parse_mode(mode), t);
      },
      py::arg("model"), py::arg("x"), py::arg("mode") = "unsupervised", py::arg("specs") = std::vector<ClusterSpec>{},
      py::arg("clusters") = std::vector<int>{});
  m.def(
      "gradients",
      [](const FlowModel& f, const Matrix& x, const std::string& mode, const std::vector<ClusterSpec>& specs,
         const std::vector<int>& clusters) {
        const auto t = target_pointers(specs, clusters);
        auto r = backprop_gradients(f, x, parse_mode(mode), t);
        return py::make_tuple(r.mean_loss, r.grads.tensors);
      },
      py::arg("model"), py::arg("x"), py::arg("mode") = "unsupervised", py::arg("specs") = std::vector<ClusterSpec>{},
      py::arg("clusters") = std::vector<int>{}, "Returns (mean_loss, [gradient per parameter tensor]).");

  // corpus
  py::class_<SentenceStructure>(m, "SentenceStructure")
      .def(py::init([](const std::vector<std::pair<std::string, std::string>>& slots) {
        std::vector<Slot> s;
        for (const auto& [r, c] : slots) s.push_back({r, c});
        return SentenceStructure(std::move(s));
      }))
      .def("slots",
           [](const SentenceStructure& s) {
             std::vector<std::pair<std::string, std::string>> out;
             for (const auto& sl : s.slots()) out.emplace_back(sl.role, sl.content);
             return out;
           })
      .def("content_of", &SentenceStructure::content_of)
      .def("key", &SentenceStructure::key)
      .def("__str__", &SentenceStructure::key)
      .def("__eq__", [](const SentenceStructure& a, const SentenceStructure& b) { return a == b; })
      .def("__hash__", [](const SentenceStructure& s) { return py::hash(py::str(s.key())); });

  py::class_<EmbeddedSentence>(m, "EmbeddedSentence")
      .def(py::init([](std::string id, LatentVector v, SentenceStructure s, std::optional<std::string> text) {
             return EmbeddedSentence{std::move(id), std::move(v), std::move(s), std::move(text)};
           }),
           py::arg("id"), py::arg("vector"), py::arg("structure"), py::arg("text") = std::nullopt)
      .def_readwrite("id", &EmbeddedSentence::id)
      .def_readwrite("vector", &EmbeddedSentence::vector)
      .def_readwrite("structure", &EmbeddedSentence::structure)
      .def_readwrite("text", &EmbeddedSentence::text);

  py::class_<CorpusSpec>(m, "CorpusSpec")
      .def_static("named", &CorpusSpec::named, py::arg("name"), py::arg("seed") = 0)
      .def_readwrite("dim", &CorpusSpec::dim)
      .def_readwrite("key_role", &CorpusSpec::key_role)
      .def_readwrite("samples_per_cluster", &CorpusSpec::samples_per_cluster)
      .def_readwrite("noise", &CorpusSpec::noise)
      .def_readwrite("seed", &CorpusSpec::seed);

  py::class_<Codebook>(m, "Codebook")
      .def(py::init<const CorpusSpec&>())
      .def("encode", &Codebook::encode)
      .def("decode", &Codebook::decode)
      .def("render", &Codebook::render)
      .def("to_json", &codebook_to_json)
      .def_static("from_json", &codebook_from_json);

  m.def("synth_generate", py::overload_cast<const CorpusSpec&, const Codebook&>(&synth_generate), py::arg("spec"),
        py::arg("codebook"));
  m.def("load_embeddings", &load_embeddings, py::arg("path"), py::arg("expected_dim") = 0);
  m.def("compute_cluster_specs", &compute_cluster_specs, py::arg("data"), py::arg("key_role"), py::arg("sigma2") = 0.6);

  // geometry
  m.def(
      "interpolate", [](const LatentVector& a, const LatentVector& b, double step) {
        auto p = interpolate_path(a, b, step);
        return py::make_tuple(p.ts, p.points);
      },
      py::arg("z1"), py::arg("z2"), py::arg("step") = 0.1);
  m.def("latent_average", &latent_average);
  m.def("normal_quantile", &normal_quantile);
  m.def(
      "augment_cluster",
      [](const std::vector<EmbeddedSentence>& corpus, const ClusterKey& target, const Codebook& cb, int budget,
         double half_width, std::uint64_t seed) {
        AugmentConfig cfg;
        cfg.budget = budget;
        cfg.window.half_width = half_width;
        cfg.seed = seed;
        const Encoder enc = [](const EmbeddedSentence& s) { return s.vector; };
        const Decoder dec = [&cb](const LatentVector& v) { return cb.decode(v); };
        auto r = augment_cluster(corpus, target, enc, dec, identity_labeller, cfg);
        return py::make_tuple(r.sentences, r.attempts);
      },
      py::arg("corpus"), py::arg("target"), py::arg("codebook"), py::arg("budget") = 100, py::arg("half_width") = 0.005,
      py::arg("seed") = 0, "Returns (sentences, attempts).");
  m.def(
      "pca_project", [](const Matrix& x, int k) {
        auto r = pca_project(x, k);
        return py::make_tuple(r.projections, r.components, r.explained_variance_ratio);
      },
      py::arg("points"), py::arg("k") = 4);

  // eval
  m.def(
      "classify",
      [](const std::string& kind, const Matrix& train_x, const std::vector<std::string>& labels, const Matrix& test_x) {
        return fit_classifier(parse_kind(kind), train_x, labels).predict(test_x);
      },
      py::arg("kind"), py::arg("train_x"), py::arg("labels"), py::arg("test_x"));
  m.def(
      "macro_f1",
      [](const std::vector<std::string>& p, const std::vector<std::string>& g) { return macro_report(p, g).f1; });
  m.def(
      "path_smoothness",
      [](const std::vector<SentenceStructure>& path, const Codebook& cb) {
        return path_smoothness(path, AssignmentDistance(cb));
      },
      py::arg("path"), py::arg("codebook"));
  m.def(
      "bootstrap",
      [](const std::vector<std::string>& a, const std::vector<std::string>& b, const std::vector<std::string>& g,
         double alpha, int resamples, std::uint64_t seed) {
        auto r = bootstrap_significance(a, b, g, alpha, resamples, seed);
        return py::make_tuple(r.p_value, r.delta_observed, r.significant);
      },
      py::arg("preds_a"), py::arg("preds_b"), py::arg("golds"), py::arg("alpha") = 0.05, py::arg("resamples") = 10000,
      py::arg("seed") = 0, "Returns (p_value, delta_accuracy, significant).");
  m.def(
      "run_experiment",
      [](const std::string& spec, std::uint64_t seed, int epochs, int hidden) {
        ExperimentConfig c;
        c.corpus = CorpusSpec::named(spec, seed);
        c.flow.dim = c.corpus.dim;
        c.training.seed = seed;
        c.eval.seed = seed;
        if (epochs > 0) c.training.epochs = epochs;
        if (hidden > 0) c.flow.hidden = hidden;
        py::gil_scoped_release release;
        return report_to_json(run_experiment(c));
      },
      py::arg("spec") = "default", py::arg("seed") = 0, py::arg("epochs") = 0, py::arg("hidden") = 0,
      "Runs the full experiment and returns the JSON report text.");
}
