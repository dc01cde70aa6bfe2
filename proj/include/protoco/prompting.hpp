#pragma once

#include "protoco/instance.hpp"
#include "protoco/tokenizer.hpp"
#include "protoco/verdict.hpp"

#include <array>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protoco {

using Rng = std::mt19937_64;

// Response words indexed by Verdict.
using Choices = std::array<std::string, 3>;

inline Choices default_choices() { return {"Yes", "Maybe", "No"}; }

// Input pattern with one {evidence} and one {claim} slot, plus the label to
// response-word mapping.
struct PromptTemplate {
  std::string id;
  std::string input_pattern;
  Choices choices = default_choices();

  // Throws std::invalid_argument unless each slot appears exactly once and
  // the choices are three distinct non-empty words.
  void validate() const;
  std::string render_input(std::string_view evidence, std::string_view claim) const;
};

// Marker word w in "it is {w} that", per variant relation.
struct MarkerWords {
  std::string confirmation = "true";
  std::string uncertainty = "unclear";
  std::string negation = "false";

  const std::string& for_relation(VariantRelation r) const;
};

std::vector<PromptTemplate> builtin_templates();
// One pattern per non-empty line; ids are "file:<line>".
std::vector<PromptTemplate> load_template_pool(const std::filesystem::path& path,
                                               const Choices& choices = default_choices());

// Claim text for a relation: verbatim for Original, "it is {w} that {claim}" otherwise.
std::string variant_claim(std::string_view claim, VariantRelation relation, const MarkerWords& markers = {});

struct PromptedExample {
  TokenSequence input;
  TokenSequence target;
  VariantRelation relation = VariantRelation::Original;
  Verdict label = Verdict::Support;
  std::string source_id;
  std::string template_id;
  // Tokenized response word of every label, indexed by Verdict; target is
  // choices[label].
  std::array<TokenSequence, 3> choices;
};

// Turns instances into token-level prompted examples.
class Prompter {
 public:
  explicit Prompter(const Tokenizer& tokenizer, MarkerWords markers = {});

  std::string render_text(const PromptTemplate& tmpl, std::string_view claim, std::string_view evidence,
                          VariantRelation relation) const;

  PromptedExample render(const PromptTemplate& tmpl, const Instance& instance, VariantRelation relation,
                         Verdict label) const;
  PromptedExample render(const PromptTemplate& tmpl, const UnlabeledInstance& instance,
                         VariantRelation relation, Verdict label) const;

  std::array<TokenSequence, 3> tokenize_choices(const PromptTemplate& tmpl) const;

  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const MarkerWords& markers() const { return markers_; }

 private:
  PromptedExample render_impl(const PromptTemplate& tmpl, const std::string& id, const std::string& claim,
                              const std::string& evidence, VariantRelation relation, Verdict label) const;

  const Tokenizer* tokenizer_;
  MarkerWords markers_;
};

// Uniform draw from the pool.
const PromptTemplate& sample_template(std::span<const PromptTemplate> pool, Rng& rng);

// Every word a prompt can contain besides instance text; used to seed the vocabulary.
std::vector<std::string> prompt_vocabulary_texts(std::span<const PromptTemplate> pool,
                                                 const MarkerWords& markers = {});

}  // namespace protoco
