#include "innlat/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "innlat/errors.hpp"
#include "innlat/io.hpp"

namespace innlat {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SentenceStructure

std::string normalize_role(const std::string& role) { return role == "V" ? "PRED" : role; }

SentenceStructure::SentenceStructure(std::vector<Slot> slots) : slots_(std::move(slots)) {
  std::set<std::string> seen;
  for (auto& s : slots_) {
    s.role = normalize_role(s.role);
    if (s.role.empty() || s.content.empty()) throw InputError("structure: empty role or content");
    if (!seen.insert(s.role).second) throw InputError("structure: role " + s.role + " appears twice");
  }
}

bool SentenceStructure::contains(const ClusterKey& key) const {
  const std::string role = normalize_role(key.role);
  return std::any_of(slots_.begin(), slots_.end(),
                     [&](const Slot& s) { return s.role == role && s.content == key.content; });
}

std::optional<std::string> SentenceStructure::content_of(const std::string& role) const {
  const std::string r = normalize_role(role);
  for (const auto& s : slots_)
    if (s.role == r) return s.content;
  return std::nullopt;
}

std::string SentenceStructure::key() const {
  std::vector<const Slot*> sorted;
  for (const auto& s : slots_) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const Slot* a, const Slot* b) { return a->role < b->role; });
  std::string out;
  for (const Slot* s : sorted) {
    if (!out.empty()) out += '|';
    out += s->role + "=" + s->content;
  }
  return out;
}

SentenceStructure identity_labeller(const SentenceStructure& s) { return s; }

// ---------------------------------------------------------------------------
// CorpusSpec

void CorpusSpec::validate() const {
  if (dim < 2 || dim % 2 != 0) throw ParameterError("corpus: dim must be even and >= 2");
  if (!(noise >= 0.0)) throw ParameterError("corpus: noise must be >= 0");
  if (roles.empty()) throw ParameterError("corpus: no roles declared");
  std::set<std::string> names;
  for (const auto& r : roles) {
    if (!names.insert(r.role).second) throw ParameterError("corpus: role " + r.role + " declared twice");
    if (r.contents.empty()) throw ParameterError("corpus: role " + r.role + " has no contents");
    if (!(r.scale >= 0.0)) throw ParameterError("corpus: role " + r.role + " has negative scale");
    std::set<std::string> cs(r.contents.begin(), r.contents.end());
    if (cs.size() != r.contents.size()) throw ParameterError("corpus: role " + r.role + " repeats a content");
  }
  if (templates.empty()) throw ParameterError("corpus: no structure templates");
  for (const auto& t : templates) {
    std::set<std::string> tr;
    if (t.roles.empty()) throw ParameterError("corpus: empty template");
    for (const auto& r : t.roles) {
      if (!names.count(r)) throw ParameterError("corpus: template uses undeclared role " + r);
      if (!tr.insert(r).second) throw ParameterError("corpus: template repeats role " + r);
    }
    if (!(t.weight >= 0.0)) throw ParameterError("corpus: negative template weight");
  }
  if (!names.count(key_role)) throw ParameterError("corpus: key role " + key_role + " is not declared");
  if (samples_per_cluster < 1) throw ParameterError("corpus: samples_per_cluster must be >= 1");
  const bool sampleable = std::any_of(templates.begin(), templates.end(), [&](const StructureTemplate& t) {
    return t.weight > 0.0 && std::find(t.roles.begin(), t.roles.end(), key_role) != t.roles.end();
  });
  if (!sampleable) throw ParameterError("corpus: no weighted template contains key role " + key_role);
}

namespace {

CorpusSpec base_vocabulary(std::uint64_t seed) {
  CorpusSpec s;
  s.seed = seed;
  s.roles = {
      {"ARG0", {"human", "animal", "plant", "something"}, 0.6},
      {"PRED", {"is", "are", "cause", "require"}, 0.5},
      {"ARG1", {"food", "oxygen", "sun", "water"}, 1.0},
      {"ARG2",
       {"organisms", "energy", "survival", "growth", "heat", "light", "nutrients", "living things", "a source",
        "a kind", "shelter", "protection"},
       0.8},
      {"ARGM-LOC",
       {"in the forest", "in water", "in the soil", "on earth", "in the ocean", "in the desert", "in the air",
        "underground", "in a cell", "in the sky", "in a cave", "near the surface"},
       0.8},
  };
  s.templates = {
      {{"PRED"}, 0.0},
      {{"ARG0"}, 0.0},
      {{"ARG1"}, 0.0},
      {{"ARG0", "PRED"}, 0.0},
      {{"PRED", "ARG1"}, 0.0},
      {{"ARG0", "PRED", "ARG1"}, 1.0},
      {{"ARG0", "PRED", "ARG1", "ARG2"}, 1.0},
      {{"ARG0", "PRED", "ARG1", "ARGM-LOC"}, 1.0},
      {{"ARG0", "PRED", "ARG2", "ARGM-LOC"}, 1.0},
      {{"ARG0", "PRED", "ARG1", "ARG2", "ARGM-LOC"}, 1.0},
  };
  return s;
}

}  // namespace

CorpusSpec CorpusSpec::default_arg0(std::uint64_t seed) {
  CorpusSpec s = base_vocabulary(seed);
  s.key_role = "ARG0";
  return s;
}

CorpusSpec CorpusSpec::default_pred(std::uint64_t seed) {
  CorpusSpec s = base_vocabulary(seed);
  s.key_role = "PRED";
  return s;
}

CorpusSpec CorpusSpec::gaussian_sanity(std::uint64_t seed) {
  CorpusSpec s = base_vocabulary(seed);
  for (auto& r : s.roles) r.scale = 0.0;
  s.noise = 1.0;
  s.samples_per_cluster = 100;
  return s;
}

CorpusSpec CorpusSpec::named(const std::string& name, std::uint64_t seed) {
  if (name == "default" || name == "arg0") return default_arg0(seed);
  if (name == "pred") return default_pred(seed);
  if (name == "gaussian") return gaussian_sanity(seed);
  throw ParameterError("unknown corpus spec '" + name + "' (expected default, arg0, pred or gaussian)");
}

// ---------------------------------------------------------------------------
// Codebook

Codebook::Codebook(const CorpusSpec& spec) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& r : spec_.roles) {
    for (const auto& c : r.contents) {
      LatentVector p(spec_.dim);
      for (int i = 0; i < spec_.dim; ++i) p(i) = r.scale * normal(rng);
      prototypes_.emplace(std::make_pair(r.role, c), std::move(p));
    }
  }
  build_index();
}

Codebook::Codebook(CorpusSpec spec, std::map<std::pair<std::string, std::string>, LatentVector> prototypes)
    : spec_(std::move(spec)), prototypes_(std::move(prototypes)) {
  spec_.validate();
  for (const auto& r : spec_.roles)
    for (const auto& c : r.contents) {
      auto it = prototypes_.find({r.role, c});
      if (it == prototypes_.end()) throw InputError("codebook: missing prototype for " + r.role + "-" + c);
      if (it->second.size() != spec_.dim) throw ShapeError("codebook: prototype " + r.role + "-" + c + " has wrong dimension");
    }
  build_index();
}

void Codebook::build_index() {
  int count = 0;
  for (const auto& r : spec_.roles) count += static_cast<int>(r.contents.size());
  proto_matrix_.resize(spec_.dim, count);
  role_proto_ids_.clear();
  role_index_.clear();
  int k = 0;
  for (std::size_t ri = 0; ri < spec_.roles.size(); ++ri) {
    const auto& r = spec_.roles[ri];
    role_index_[r.role] = static_cast<int>(ri);
    std::vector<int> ids;
    for (const auto& c : r.contents) {
      proto_matrix_.col(k) = prototypes_.at({r.role, c});
      ids.push_back(k++);
    }
    role_proto_ids_.push_back(std::move(ids));
  }
  gram_ = proto_matrix_.transpose() * proto_matrix_;
}

const LatentVector& Codebook::prototype(const std::string& role, const std::string& content) const {
  auto it = prototypes_.find({normalize_role(role), content});
  if (it == prototypes_.end()) throw InputError("vocabulary: unknown role-content " + role + "-" + content);
  return it->second;
}

void Codebook::check_vocabulary(const SentenceStructure& s) const {
  if (s.empty()) throw InputError("vocabulary: empty structure");
  for (const auto& slot : s.slots()) prototype(slot.role, slot.content);
}

LatentVector Codebook::encode(const SentenceStructure& s) const {
  check_vocabulary(s);
  LatentVector v = LatentVector::Zero(spec_.dim);
  for (const auto& slot : s.slots()) v += prototype(slot.role, slot.content);
  return v;
}

SentenceStructure Codebook::decode(const LatentVector& v) const {
  if (v.size() != spec_.dim) throw ShapeError("decode: expected dimension " + std::to_string(spec_.dim));
  if (!v.allFinite()) throw NumericError("decode: non-finite vector");
  // ||v - sum p||^2 = ||v||^2 - 2 sum v.p_i + sum_ij p_i.p_j; the first term is common.
  const Vector vp = proto_matrix_.transpose() * v;

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_ids;
  std::size_t best_template = 0;

  for (std::size_t ti = 0; ti < spec_.templates.size(); ++ti) {
    const auto& tpl = spec_.templates[ti];
    std::vector<const std::vector<int>*> choices;
    for (const auto& r : tpl.roles) choices.push_back(&role_proto_ids_[role_index_.at(r)]);
    const std::size_t k = choices.size();
    std::vector<std::size_t> odo(k, 0);
    std::vector<int> ids(k);
    while (true) {
      double score = 0.0;
      for (std::size_t a = 0; a < k; ++a) {
        ids[a] = (*choices[a])[odo[a]];
        score -= 2.0 * vp(ids[a]);
        score += gram_(ids[a], ids[a]);
        for (std::size_t b = 0; b < a; ++b) score += 2.0 * gram_(ids[a], ids[b]);
      }
      if (score < best) {
        best = score;
        best_ids = ids;
        best_template = ti;
      }
      std::size_t pos = 0;
      while (pos < k && ++odo[pos] == choices[pos]->size()) odo[pos++] = 0;
      if (pos == k) break;
    }
  }

  const auto& tpl = spec_.templates[best_template];
  std::vector<Slot> slots;
  for (std::size_t a = 0; a < tpl.roles.size(); ++a) {
    const auto& role = spec_.roles[role_index_.at(tpl.roles[a])];
    const int local = best_ids[a] - role_proto_ids_[role_index_.at(tpl.roles[a])].front();
    slots.push_back({role.role, role.contents[static_cast<std::size_t>(local)]});
  }
  return SentenceStructure(std::move(slots));
}

std::string Codebook::render(const SentenceStructure& s) const {
  std::string out;
  for (const auto& r : spec_.roles) {
    if (auto c = s.content_of(r.role)) {
      if (!out.empty()) out += ' ';
      out += *c;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

std::vector<EmbeddedSentence> synth_generate(const CorpusSpec& spec) { return synth_generate(spec, Codebook(spec)); }

std::vector<EmbeddedSentence> synth_generate(const CorpusSpec& spec, const Codebook& codebook) {
  spec.validate();
  if (codebook.dim() != spec.dim) throw ShapeError("synth_generate: codebook dimension differs from spec");

  std::vector<const StructureTemplate*> usable;
  std::vector<double> weights;
  for (const auto& t : spec.templates) {
    if (t.weight > 0.0 && std::find(t.roles.begin(), t.roles.end(), spec.key_role) != t.roles.end()) {
      usable.push_back(&t);
      weights.push_back(t.weight);
    }
  }
  std::map<std::string, const RoleVocabulary*> vocab;
  for (const auto& r : spec.roles) vocab[r.role] = &r;

  // Independent stream from the prototype draw.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::discrete_distribution<std::size_t> pick_template(weights.begin(), weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<EmbeddedSentence> out;
  const auto& key_contents = vocab.at(spec.key_role)->contents;
  out.reserve(key_contents.size() * static_cast<std::size_t>(spec.samples_per_cluster));
  for (const auto& key_content : key_contents) {
    for (int k = 0; k < spec.samples_per_cluster; ++k) {
      const StructureTemplate& tpl = *usable[pick_template(rng)];
      std::vector<Slot> slots;
      // Slots follow role declaration order.
      for (const auto& r : spec.roles) {
        if (std::find(tpl.roles.begin(), tpl.roles.end(), r.role) == tpl.roles.end()) continue;
        if (r.role == spec.key_role) {
          slots.push_back({r.role, key_content});
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, r.contents.size() - 1);
          slots.push_back({r.role, r.contents[pick(rng)]});
        }
      }
      SentenceStructure st(std::move(slots));
      LatentVector v = codebook.encode(st);
      for (int i = 0; i < spec.dim; ++i) v(i) += spec.noise * normal(rng);

      char idbuf[32];
      std::snprintf(idbuf, sizeof idbuf, "%04d", k);
      EmbeddedSentence es;
      es.id = spec.key_role + "-" + key_content + "-" + idbuf;
      es.text = codebook.render(st);
      es.vector = std::move(v);
      es.structure = std::move(st);
      out.push_back(std::move(es));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::string embedding_record(const EmbeddedSentence& s) {
  std::string out = "{\"id\":" + json(s.id).dump() + ",\"vec\":";
  out += format_reals(std::span<const double>(s.vector.data(), static_cast<std::size_t>(s.vector.size())));
  out += ",\"labels\":[";
  for (std::size_t i = 0; i < s.structure.slots().size(); ++i) {
    const auto& sl = s.structure.slots()[i];
    if (i) out += ',';
    out += "{\"role\":" + json(sl.role).dump() + ",\"content\":" + json(sl.content).dump() + "}";
  }
  out += "]";
  if (s.text) out += ",\"text\":" + json(*s.text).dump();
  out += "}";
  return out;
}

void write_embeddings(std::ostream& out, const std::vector<EmbeddedSentence>& data) {
  for (const auto& s : data) out << embedding_record(s) << '\n';
}

std::vector<EmbeddedSentence> parse_embeddings(std::istream& in, int expected_dim) {
  std::vector<EmbeddedSentence> out;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  int dim = expected_dim;
  auto fail = [&line_no](const std::string& msg) -> IoError {
    return IoError("embeddings line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) throw fail("record is not an object");
    if (!rec.contains("id") || !rec["id"].is_string()) throw fail("missing string field 'id'");
    if (!rec.contains("vec") || !rec["vec"].is_array()) throw fail("missing array field 'vec'");
    EmbeddedSentence s;
    s.id = rec["id"].get<std::string>();
    const auto& vec = rec["vec"];
    if (dim == 0) dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim) {
      throw fail("'vec' has " + std::to_string(vec.size()) + " entries, expected " + std::to_string(dim));
    }
    s.vector.resize(dim);
    for (int i = 0; i < dim; ++i) {
      if (!vec[i].is_number()) throw fail("'vec' entry " + std::to_string(i) + " is not a number");
      s.vector(i) = vec[i].get<double>();
    }
    if (!s.vector.allFinite()) throw fail("'vec' has non-finite entries");
    std::vector<Slot> slots;
    if (rec.contains("labels")) {
      if (!rec["labels"].is_array()) throw fail("'labels' is not an array");
      for (const auto& l : rec["labels"]) {
        if (!l.is_object() || !l.contains("role") || !l.contains("content") || !l["role"].is_string() ||
            !l["content"].is_string()) {
          throw fail("label entries need string 'role' and 'content'");
        }
        slots.push_back({l["role"].get<std::string>(), l["content"].get<std::string>()});
      }
    }
    try {
      s.structure = SentenceStructure(std::move(slots));
    } catch (const InputError& e) {
      throw fail(e.what());
    }
    if (rec.contains("text") && !rec["text"].is_null()) {
      if (!rec["text"].is_string()) throw fail("'text' is not a string");
      s.text = rec["text"].get<std::string>();
    }
    if (!ids.insert(s.id).second) throw fail("duplicate id '" + s.id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<EmbeddedSentence> load_embeddings(const std::filesystem::path& path, int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_embeddings(in, expected_dim);
}

// ---------------------------------------------------------------------------
// Clusters

std::vector<ClusterSpec> compute_cluster_specs(const std::vector<EmbeddedSentence>& data, const std::string& key_role,
                                               double sigma2) {
  std::map<std::string, std::vector<const LatentVector*>> groups;
  const std::string role = normalize_role(key_role);
  for (const auto& s : data) {
    if (auto c = s.structure.content_of(role)) groups[*c].push_back(&s.vector);
  }
  if (groups.empty()) throw InputError("cluster specs: no sentence carries role " + role);

  std::vector<ClusterSpec> out;
  for (auto& [content, members] : groups) {
    // Sum in a canonical order so the centroid does not depend on input order.
    std::sort(members.begin(), members.end(), [](const LatentVector* a, const LatentVector* b) {
      return std::lexicographical_compare(a->data(), a->data() + a->size(), b->data(), b->data() + b->size());
    });
    const auto d = members.front()->size();
    LatentVector sum = LatentVector::Zero(d);
    for (const auto* m : members) {
      if (m->size() != d) throw ShapeError("cluster specs: inconsistent vector dimensions");
      sum += *m;
    }
    out.push_back({{role, content}, sum / static_cast<double>(members.size()), sigma2});
  }
  return out;
}

std::vector<std::string> cluster_labels(const std::vector<EmbeddedSentence>& data, const std::string& key_role) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.structure.content_of(key_role).value_or(""));
  return out;
}

// ---------------------------------------------------------------------------
// Codebook JSON

std::string codebook_to_json(const Codebook& cb) {
  const auto& s = cb.spec();
  json j;
  j["version"] = 1;
  j["dim"] = s.dim;
  j["key_role"] = s.key_role;
  j["samples_per_cluster"] = s.samples_per_cluster;
  j["noise"] = s.noise;
  j["seed"] = s.seed;
  j["roles"] = json::array();
  for (const auto& r : s.roles) j["roles"].push_back({{"role", r.role}, {"contents", r.contents}, {"scale", r.scale}});
  j["templates"] = json::array();
  for (const auto& t : s.templates) j["templates"].push_back({{"roles", t.roles}, {"weight", t.weight}});
  j["prototypes"] = json::array();
  for (const auto& r : s.roles)
    for (const auto& c : r.contents) {
      const auto& p = cb.prototype(r.role, c);
      j["prototypes"].push_back({{"role", r.role}, {"content", c}, {"vec", std::vector<double>(p.data(), p.data() + p.size())}});
    }
  return j.dump(1) + "\n";
}

Codebook codebook_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("codebook: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) throw IoError("codebook: unsupported version");
    CorpusSpec s;
    s.dim = j.at("dim").get<int>();
    s.key_role = j.at("key_role").get<std::string>();
    s.samples_per_cluster = j.at("samples_per_cluster").get<int>();
    s.noise = j.at("noise").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("roles"))
      s.roles.push_back({r.at("role").get<std::string>(), r.at("contents").get<std::vector<std::string>>(), r.at("scale").get<double>()});
    for (const auto& t : j.at("templates"))
      s.templates.push_back({t.at("roles").get<std::vector<std::string>>(), t.at("weight").get<double>()});
    std::map<std::pair<std::string, std::string>, LatentVector> protos;
    for (const auto& p : j.at("prototypes")) {
      auto v = p.at("vec").get<std::vector<double>>();
      protos[{p.at("role").get<std::string>(), p.at("content").get<std::string>()}] =
          Eigen::Map<const LatentVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    return Codebook(std::move(s), std::move(protos));
  } catch (const json::exception& e) {
    throw IoError(std::string("codebook: ") + e.what());
  }
}

}  // namespace innlat
