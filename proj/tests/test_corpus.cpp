#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>

#include "innlat/corpus.hpp"
#include "innlat/errors.hpp"
#include "innlat/train.hpp"
#include "test_util.hpp"

using namespace innlat;

namespace {

// Every structure the template inventory can express.
std::vector<SentenceStructure> all_structures(const CorpusSpec& spec) {
  std::map<std::string, std::vector<std::string>> vocab;
  for (const auto& r : spec.roles) vocab[r.role] = r.contents;
  std::vector<SentenceStructure> out;
  for (const auto& t : spec.templates) {
    std::vector<std::size_t> odo(t.roles.size(), 0);
    while (true) {
      std::vector<Slot> slots;
      for (std::size_t a = 0; a < t.roles.size(); ++a) slots.push_back({t.roles[a], vocab[t.roles[a]][odo[a]]});
      out.emplace_back(std::move(slots));
      std::size_t pos = 0;
      while (pos < odo.size() && ++odo[pos] == vocab[t.roles[pos]].size()) odo[pos++] = 0;
      if (pos == odo.size()) break;
    }
  }
  return out;
}

SentenceStructure st(std::vector<Slot> s) { return SentenceStructure(std::move(s)); }

}  // namespace

TEST_CASE("structure: roles, alias and canonical key") {
  const auto s = st({{"V", "require"}, {"ARG0", "animal"}});
  CHECK(s.content_of("PRED") == "require");
  CHECK(s.content_of("V") == "require");
  CHECK(s.key() == "ARG0=animal|PRED=require");
  CHECK(s == st({{"ARG0", "animal"}, {"PRED", "require"}}));
  CHECK(s.contains({"ARG0", "animal"}));
  CHECK_FALSE(s.contains({"ARG0", "human"}));
  CHECK_THROWS_AS(st({{"ARG0", "a"}, {"ARG0", "b"}}), InputError);
}

TEST_CASE("spec: named presets and validation") {
  CHECK(CorpusSpec::named("default", 3).key_role == "ARG0");
  CHECK(CorpusSpec::named("pred", 3).key_role == "PRED");
  CHECK(CorpusSpec::named("default", 3).seed == 3);
  CHECK_THROWS_AS(CorpusSpec::named("nope", 0), ParameterError);
  CorpusSpec s = CorpusSpec::default_arg0();
  s.dim = 0;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  s = CorpusSpec::default_arg0();
  s.key_role = "ARGM-TMP";
  CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("codebook: encode is the prototype sum") {
  const Codebook cb(CorpusSpec::default_arg0(0));
  CHECK(cb.encode(st({{"V", "is"}})) == cb.prototype("PRED", "is"));
  CHECK((cb.encode(st({{"ARG0", "animal"}, {"PRED", "is"}})) -
         (cb.prototype("ARG0", "animal") + cb.prototype("PRED", "is")))
            .lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK_THROWS_AS(cb.encode(st({{"ARG0", "robot"}})), InputError);
}

TEST_CASE("codebook: decode(encode(s)) = s over the whole template inventory") {
  const CorpusSpec spec = CorpusSpec::default_arg0(0);
  const Codebook cb(spec);
  const auto all = all_structures(spec);
  CHECK(all.size() == 13164);
  int wrong = 0;
  for (const auto& s : all) wrong += cb.decode(cb.encode(s)) == s ? 0 : 1;
  CHECK(wrong == 0);
}

TEST_CASE("codebook: decode tolerates perturbations below half the margin") {
  const CorpusSpec spec = CorpusSpec::default_arg0(0);
  const Codebook cb(spec);
  const auto target = st({{"ARG0", "animal"}, {"V", "require"}});
  const LatentVector v = cb.encode(target);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& s : all_structures(spec)) {
    if (s == target) continue;
    margin = std::min(margin, (cb.encode(s) - v).norm());
  }
  REQUIRE(margin > 0.0);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    LatentVector dir = innlat::test::random_matrix(spec.dim, 1, rng);
    dir *= 0.49 * margin / dir.norm();
    CHECK(cb.decode(v + dir) == target);
  }
}

TEST_CASE("codebook: JSON round trip preserves prototypes and decoding") {
  const Codebook cb(CorpusSpec::default_pred(5));
  const Codebook back = codebook_from_json(codebook_to_json(cb));
  CHECK(back.prototypes() == cb.prototypes());
  CHECK(back.spec().key_role == "PRED");
  CHECK_THROWS_AS(codebook_from_json("{\"version\":1}"), Error);
}

TEST_CASE("synth_generate: pure function of the spec") {
  CorpusSpec spec = CorpusSpec::default_arg0(7);
  spec.samples_per_cluster = 20;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  REQUIRE(a.size() == 80);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].vector == b[i].vector);
    CHECK(a[i].structure == b[i].structure);
  }
  CHECK(a.front().id == "ARG0-human-0000");
  spec.seed = 8;
  CHECK(synth_generate(spec).front().vector != a.front().vector);
}

TEST_CASE("synth_generate: noiseless sentences with equal structures coincide") {
  CorpusSpec spec = CorpusSpec::default_arg0(1);
  spec.noise = 0.0;
  spec.samples_per_cluster = 200;
  const Codebook cb(spec);
  const auto data = synth_generate(spec, cb);
  std::map<std::string, LatentVector> seen;
  int repeats = 0;
  for (const auto& s : data) {
    auto [it, fresh] = seen.emplace(s.structure.key(), s.vector);
    if (!fresh) {
      ++repeats;
      CHECK(it->second == s.vector);
    }
    CHECK(s.vector == cb.encode(s.structure));
  }
  CHECK(repeats > 0);
}

TEST_CASE("synth_generate: single-slot clusters concentrate at the prototype") {
  CorpusSpec spec = CorpusSpec::default_arg0(2);
  spec.templates = {{{"ARG0"}, 1.0}};
  const Codebook cb(spec);
  const auto data = synth_generate(spec, cb);
  const auto specs = compute_cluster_specs(data, "ARG0");
  REQUIRE(specs.size() == 4);
  const double bound = 2.0 * spec.noise / std::sqrt(500.0);
  for (const auto& c : specs) {
    const LatentVector dev = c.mu - cb.prototype("ARG0", c.key.content);
    const double rms = dev.norm() / std::sqrt(static_cast<double>(spec.dim));
    CAPTURE(c.key.content);
    CHECK(rms < bound);
  }
  // Per-dimension spread equals the noise level.
  double ss = 0.0;
  int n = 0;
  for (const auto& s : data) {
    ss += (s.vector - cb.prototype("ARG0", *s.structure.content_of("ARG0"))).squaredNorm();
    n += spec.dim;
  }
  CHECK(std::sqrt(ss / n) == doctest::Approx(spec.noise).epsilon(0.02));
}

TEST_CASE("synth_generate: default corpus is separable by nearest centroid") {
  const auto data = synth_generate(CorpusSpec::default_arg0(0));
  const auto specs = compute_cluster_specs(data, "ARG0");
  int correct = 0;
  for (const auto& s : data) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < specs.size(); ++c)
      if ((s.vector - specs[c].mu).squaredNorm() < (s.vector - specs[best].mu).squaredNorm()) best = c;
    correct += specs[best].key.content == *s.structure.content_of("ARG0") ? 1 : 0;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(data.size());
  MESSAGE("nearest-centroid accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("jsonl: parsing") {
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK(parse_embeddings(in).empty());
  }
  SUBCASE("single zero record") {
    std::string vec = "[0";
    for (int i = 1; i < 32; ++i) vec += ",0";
    vec += "]";
    std::istringstream in("{\"id\":\"a\",\"vec\":" + vec + ",\"labels\":[{\"role\":\"ARG0\",\"content\":\"animal\"}]}\n");
    const auto d = parse_embeddings(in, 32);
    REQUIRE(d.size() == 1);
    CHECK(d[0].id == "a");
    CHECK(d[0].vector.isZero(0.0));
    CHECK(d[0].structure.content_of("ARG0") == "animal");
  }
  SUBCASE("short vector names line 1") {
    std::string vec = "[0";
    for (int i = 1; i < 31; ++i) vec += ",0";
    vec += "]";
    std::istringstream in("{\"id\":\"a\",\"vec\":" + vec + "}\n");
    try {
      parse_embeddings(in, 32);
      FAIL("expected an error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
  SUBCASE("malformed and duplicate records") {
    std::istringstream bad("{\"id\":\"a\",\"vec\":[1]}\n{not json\n");
    CHECK_THROWS_WITH_AS(parse_embeddings(bad), doctest::Contains("line 2"), IoError);
    std::istringstream dup("{\"id\":\"a\",\"vec\":[1]}\n{\"id\":\"a\",\"vec\":[2]}\n");
    CHECK_THROWS_WITH_AS(parse_embeddings(dup), doctest::Contains("duplicate"), IoError);
  }
  SUBCASE("round trip is value-exact") {
    CorpusSpec spec = CorpusSpec::default_pred(3);
    spec.samples_per_cluster = 5;
    const auto data = synth_generate(spec);
    std::stringstream io;
    write_embeddings(io, data);
    const auto back = parse_embeddings(io);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(back[i].vector == data[i].vector);
      CHECK(back[i].structure == data[i].structure);
      CHECK(back[i].text == data[i].text);
    }
  }
  CHECK_THROWS_AS(load_embeddings("/nonexistent/corpus.jsonl"), IoError);
}

TEST_CASE("cluster specs") {
  auto sentence = [](const std::string& id, LatentVector v, const std::string& c) {
    return EmbeddedSentence{id, std::move(v), st({{"ARG0", c}}), std::nullopt};
  };
  SUBCASE("two points give their midpoint") {
    LatentVector e1 = LatentVector::Zero(3);
    e1(0) = 2.0;
    const auto specs = compute_cluster_specs({sentence("a", LatentVector::Zero(3), "x"), sentence("b", e1, "x")}, "ARG0");
    REQUIRE(specs.size() == 1);
    CHECK(specs[0].mu == e1 / 2.0);
    CHECK(specs[0].sigma2 == 0.6);
  }
  SUBCASE("singleton cluster") {
    LatentVector v(2);
    v << 0.1, -3.0;
    CHECK(compute_cluster_specs({sentence("a", v, "y")}, "ARG0")[0].mu == v);
  }
  SUBCASE("permutation invariance is exact") {
    CorpusSpec spec = CorpusSpec::default_arg0(4);
    spec.samples_per_cluster = 50;
    auto data = synth_generate(spec);
    const auto a = compute_cluster_specs(data, "ARG0");
    std::mt19937_64 rng(1);
    std::shuffle(data.begin(), data.end(), rng);
    const auto b = compute_cluster_specs(data, "ARG0");
    REQUIRE(a.size() == b.size());
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c].mu == b[c].mu);
  }
  CHECK_THROWS_AS(compute_cluster_specs({sentence("a", LatentVector::Zero(2), "x")}, "ARG1"), InputError);
}
