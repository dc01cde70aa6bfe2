#pragma once

#include "protoco/instance.hpp"
#include "protoco/prompting.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protoco {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- JSONL ----------------------------------------------------------------------
// One object per line: id, claim, evidence, optional label (SUPPORTS,
// REFUTES, NEI), optional domain.

std::vector<Instance> load_jsonl(const std::filesystem::path& path);
std::vector<Instance> parse_jsonl(std::istream& in, const std::string& source_name = "<stream>");
void write_jsonl(const std::filesystem::path& path, std::span<const Instance> instances);

// ---- samplers ---------------------------------------------------------------------

// K labelled instances per class drawn uniformly without replacement, 3K total.
std::vector<Instance> sample_k_shot(std::span<const Instance> instances, std::size_t k, std::uint64_t seed);

enum class ZeroShotSampling {
  Uniform,   // 3 * per_class instances regardless of label
  PerClass,  // per_class of each gold class, labels dropped afterwards
};

std::vector<UnlabeledInstance> sample_zero_shot(std::span<const Instance> instances, std::uint64_t seed,
                                                std::size_t per_class = 30,
                                                ZeroShotSampling mode = ZeroShotSampling::Uniform);

std::size_t count_label(std::span<const Instance> instances, Verdict v);

// ---- synthetic world ----------------------------------------------------------------

enum class Relation { LocatedIn, BornIn, InventedBy, WorksFor };

struct Fact {
  Relation relation;
  std::string subject;
  std::string object;
  bool operator==(const Fact&) const = default;
};

// A fact as read back from text, with the claim's polarity.
struct ParsedStatement {
  Relation relation;
  std::string subject;
  std::string object;
  bool negated = false;
};

struct EntityCounts {
  int cities = 40;
  int countries = 12;
  int persons = 40;
  int inventions = 24;
  int companies = 12;
};

// Entities with one true object per (subject, functional relation).
class WorldModel {
 public:
  WorldModel(std::string domain, const EntityCounts& counts, std::span<const std::string> names, Rng& rng);

  const std::string& domain() const { return domain_; }
  const std::vector<Fact>& facts() const { return facts_; }
  std::optional<std::string> true_object(Relation r, const std::string& subject) const;
  const std::vector<std::string>& objects_for(Relation r) const;

  static std::string evidence_text(const Fact& f);
  static std::string claim_text(const Fact& f, bool negated);

  // Support, Refute or NEI claim with evidence, labelled by construction.
  Instance make_instance(Verdict label, const std::string& id, Rng& rng) const;

 private:
  std::string domain_;
  std::vector<std::string> cities_, countries_, persons_, inventions_, companies_;
  std::vector<Fact> facts_;
};

// Independent rule-based reading of a generated pair: parses both sentences
// back into facts and decides the verdict. nullopt when a sentence does not
// match any known verbalisation.
std::optional<ParsedStatement> parse_evidence(const std::string& text);
std::optional<ParsedStatement> parse_claim(const std::string& text);
std::optional<Verdict> entailment_oracle(const Instance& instance);

struct CorpusSizes {
  std::size_t pretrain_per_class = 1000;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 300;
};

struct Corpus {
  std::vector<Instance> pretrain;  // source domain
  std::vector<Instance> train;     // target domain
  std::vector<Instance> test;      // target domain
};

// Source and target splits use disjoint entity names and shared relation
// wording. Every split is exactly class balanced.
Corpus generate_corpus(std::uint64_t world_seed, const CorpusSizes& sizes, const EntityCounts& counts = {});

// All texts a tokenizer for this corpus must cover.
std::vector<std::string> corpus_texts(const Corpus& corpus);

// Writes pretrain.jsonl, train.jsonl, test.jsonl, vocab.txt and manifest.json.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, std::uint64_t world_seed,
                  const CorpusSizes& sizes, std::span<const PromptTemplate> pool, const MarkerWords& markers = {});

}  // namespace protoco
