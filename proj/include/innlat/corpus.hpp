#pragma once

// Synthetic compositional sentence space and embedding ingestion.
//
// A sentence is a set of (role, content) slots. The synthetic encoder maps
// it to the sum of one fixed prototype vector per slot; the decoder searches
// a finite inventory of role templates for the slot assignment whose
// prototype sum is nearest to a given vector.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "innlat/flow.hpp"
#include "innlat/train.hpp"

namespace innlat {

struct Slot {
  std::string role;
  std::string content;

  bool operator==(const Slot&) const = default;
};

/// Ordered (role, content) slots with at most one slot per role. Equality
/// ignores slot order.
class SentenceStructure {
public:
  SentenceStructure() = default;
  explicit SentenceStructure(std::vector<Slot> slots);
  SentenceStructure(std::initializer_list<Slot> slots) : SentenceStructure(std::vector<Slot>(slots)) {}

  const std::vector<Slot>& slots() const { return slots_; }
  bool empty() const { return slots_.empty(); }

  bool contains(const ClusterKey& key) const;
  std::optional<std::string> content_of(const std::string& role) const;

  /// Canonical string form, slots sorted by role: "ARG0=animal|PRED=require".
  std::string key() const;

  bool operator==(const SentenceStructure& other) const { return key() == other.key(); }

private:
  std::vector<Slot> slots_;
};

/// "V" is accepted as an alias of the predicate role "PRED".
std::string normalize_role(const std::string& role);

struct RoleVocabulary {
  std::string role;
  std::vector<std::string> contents;
  double scale = 1.0;  // per-coordinate std of this role's prototypes
};

struct StructureTemplate {
  std::vector<std::string> roles;
  double weight = 0.0;  // sampling weight in synth_generate; 0 = decode-only
};

struct CorpusSpec {
  int dim = 32;
  std::vector<RoleVocabulary> roles;
  std::vector<StructureTemplate> templates;
  std::string key_role = "ARG0";
  int samples_per_cluster = 500;
  double noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const;

  /// ARG0 clusters {human, animal, plant, something}, 500 each, d=32, noise 0.3.
  static CorpusSpec default_arg0(std::uint64_t seed = 0);
  /// Same vocabulary keyed on PRED {is, are, cause, require}.
  static CorpusSpec default_pred(std::uint64_t seed = 0);
  /// Prototype-free corpus whose vectors are standard Gaussian noise.
  static CorpusSpec gaussian_sanity(std::uint64_t seed = 0);
  /// Lookup by name: "default" / "arg0", "pred", "gaussian".
  static CorpusSpec named(const std::string& name, std::uint64_t seed);
};

struct EmbeddedSentence {
  std::string id;
  LatentVector vector;
  SentenceStructure structure;
  std::optional<std::string> text;
};

using Decoder = std::function<SentenceStructure(const LatentVector&)>;
using Labeller = std::function<SentenceStructure(const SentenceStructure&)>;

/// Labeller for decoders that already emit role-annotated structures.
SentenceStructure identity_labeller(const SentenceStructure& s);

/// Prototype table plus template inventory: the synthetic encoder/decoder.
class Codebook {
public:
  Codebook() = default;
  /// Draws the prototypes from spec.seed.
  explicit Codebook(const CorpusSpec& spec);
  Codebook(CorpusSpec spec, std::map<std::pair<std::string, std::string>, LatentVector> prototypes);

  const CorpusSpec& spec() const { return spec_; }
  int dim() const { return spec_.dim; }

  const LatentVector& prototype(const std::string& role, const std::string& content) const;
  const std::map<std::pair<std::string, std::string>, LatentVector>& prototypes() const { return prototypes_; }

  /// Noiseless prototype sum. Throws InputError on unknown role/content.
  LatentVector encode(const SentenceStructure& s) const;

  /// Exhaustive nearest prototype-sum over the template inventory.
  SentenceStructure decode(const LatentVector& v) const;

  /// Renders slots as a plain-text sentence.
  std::string render(const SentenceStructure& s) const;

  /// Checks that the structure uses declared roles/contents only.
  void check_vocabulary(const SentenceStructure& s) const;

private:
  void build_index();

  CorpusSpec spec_;
  std::map<std::pair<std::string, std::string>, LatentVector> prototypes_;
  // Flattened prototype table and its Gram matrix for fast decode scoring.
  std::vector<std::vector<int>> role_proto_ids_;  // per declared role
  std::map<std::string, int> role_index_;
  Matrix proto_matrix_;  // dim x P
  Matrix gram_;          // P x P
};

/// Draw a corpus: samples_per_cluster sentences for each content of the key
/// role, embedded as prototype sum plus N(0, noise^2 I).
std::vector<EmbeddedSentence> synth_generate(const CorpusSpec& spec);
std::vector<EmbeddedSentence> synth_generate(const CorpusSpec& spec, const Codebook& codebook);

/// JSONL ingestion. `expected_dim` of 0 takes the first record's dimension.
std::vector<EmbeddedSentence> load_embeddings(const std::filesystem::path& path, int expected_dim = 0);
std::vector<EmbeddedSentence> parse_embeddings(std::istream& in, int expected_dim = 0);
void write_embeddings(std::ostream& out, const std::vector<EmbeddedSentence>& data);
std::string embedding_record(const EmbeddedSentence& s);

/// One spec per content of `key_role`; centroid is the exact coordinate mean.
/// Sentences without the key role are ignored. Output sorted by key.
std::vector<ClusterSpec> compute_cluster_specs(const std::vector<EmbeddedSentence>& data,
                                               const std::string& key_role, double sigma2 = 0.6);

/// Content of `key_role` per sentence (empty string when absent).
std::vector<std::string> cluster_labels(const std::vector<EmbeddedSentence>& data, const std::string& key_role);

/// Codebook serialization (spec + prototypes) as JSON text.
std::string codebook_to_json(const Codebook& cb);
Codebook codebook_from_json(const std::string& text);

}  // namespace innlat
