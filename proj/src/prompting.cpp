#include "protoco/prompting.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace protoco {

namespace {

constexpr std::string_view kEvidenceSlot = "{evidence}";
constexpr std::string_view kClaimSlot = "{claim}";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

void PromptTemplate::validate() const {
  for (auto slot : {kEvidenceSlot, kClaimSlot}) {
    const auto n = count_occurrences(input_pattern, slot);
    if (n != 1) {
      throw std::invalid_argument("PromptTemplate '" + id + "': slot " + std::string(slot) + " appears " +
                                  std::to_string(n) + " times, expected exactly once");
    }
  }
  const std::set<std::string> distinct(choices.begin(), choices.end());
  if (distinct.size() != 3 || distinct.contains("")) {
    throw std::invalid_argument("PromptTemplate '" + id + "': choices must be three distinct non-empty words");
  }
}

std::string PromptTemplate::render_input(std::string_view evidence, std::string_view claim) const {
  validate();
  // Later slot first, so the earlier offset stays valid and slot-like text
  // inside the values is never re-substituted.
  const auto ev_pos = input_pattern.find(kEvidenceSlot);
  const auto cl_pos = input_pattern.find(kClaimSlot);
  std::string out = input_pattern;
  if (ev_pos < cl_pos) {
    out.replace(cl_pos, kClaimSlot.size(), claim);
    out.replace(ev_pos, kEvidenceSlot.size(), evidence);
  } else {
    out.replace(ev_pos, kEvidenceSlot.size(), evidence);
    out.replace(cl_pos, kClaimSlot.size(), claim);
  }
  return out;
}

const std::string& MarkerWords::for_relation(VariantRelation r) const {
  switch (r) {
    case VariantRelation::Confirmation: return confirmation;
    case VariantRelation::Uncertainty: return uncertainty;
    case VariantRelation::Negation: return negation;
    case VariantRelation::Original: break;
  }
  throw std::invalid_argument("MarkerWords: the original claim has no marker word");
}

std::vector<PromptTemplate> builtin_templates() {
  std::vector<PromptTemplate> pool = {
      {"suppose_infer", "Suppose {evidence}. Can we infer {claim}?"},
      {"given_follow", "Given that {evidence}, does it follow that {claim}?"},
      {"evidence_claim", "Evidence: {evidence}. Claim: {claim}. Is the claim supported by the evidence?"},
      {"based_on", "{evidence}. Based on the previous passage, is it correct that {claim}?"},
  };
  for (const auto& t : pool) t.validate();
  return pool;
}

std::vector<PromptTemplate> load_template_pool(const std::filesystem::path& path, const Choices& choices) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_template_pool: cannot open " + path.string());
  std::vector<PromptTemplate> pool;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    PromptTemplate t{"file:" + std::to_string(lineno), line, choices};
    t.validate();
    pool.push_back(std::move(t));
  }
  if (pool.empty()) throw std::runtime_error("load_template_pool: " + path.string() + " has no templates");
  return pool;
}

std::string variant_claim(std::string_view claim, VariantRelation relation, const MarkerWords& markers) {
  if (relation == VariantRelation::Original) return std::string(claim);
  return "it is " + markers.for_relation(relation) + " that " + std::string(claim);
}

Prompter::Prompter(const Tokenizer& tokenizer, MarkerWords markers)
    : tokenizer_(&tokenizer), markers_(std::move(markers)) {}

std::string Prompter::render_text(const PromptTemplate& tmpl, std::string_view claim, std::string_view evidence,
                                  VariantRelation relation) const {
  if (claim.empty()) throw std::invalid_argument("render: empty claim");
  if (evidence.empty()) throw std::invalid_argument("render: empty evidence");
  return tmpl.render_input(evidence, variant_claim(claim, relation, markers_));
}

std::array<TokenSequence, 3> Prompter::tokenize_choices(const PromptTemplate& tmpl) const {
  std::array<TokenSequence, 3> out;
  for (Verdict v : kVerdicts) {
    out[index_of(v)] = tokenizer_->encode(tmpl.choices[index_of(v)], SequenceRole::Target);
    if (out[index_of(v)].ids.empty()) {
      throw std::invalid_argument("PromptTemplate '" + tmpl.id + "': choice for " + std::string(to_string(v)) +
                                  " tokenizes to nothing");
    }
  }
  return out;
}

PromptedExample Prompter::render_impl(const PromptTemplate& tmpl, const std::string& id, const std::string& claim,
                                      const std::string& evidence, VariantRelation relation, Verdict label) const {
  PromptedExample ex;
  ex.input = tokenizer_->encode(render_text(tmpl, claim, evidence, relation), SequenceRole::Input);
  ex.choices = tokenize_choices(tmpl);
  ex.target = ex.choices[index_of(label)];
  ex.relation = relation;
  ex.label = label;
  ex.source_id = id;
  ex.template_id = tmpl.id;
  return ex;
}

PromptedExample Prompter::render(const PromptTemplate& tmpl, const Instance& instance, VariantRelation relation,
                                 Verdict label) const {
  return render_impl(tmpl, instance.id, instance.claim, instance.evidence, relation, label);
}

PromptedExample Prompter::render(const PromptTemplate& tmpl, const UnlabeledInstance& instance,
                                 VariantRelation relation, Verdict label) const {
  return render_impl(tmpl, instance.id(), instance.claim(), instance.evidence(), relation, label);
}

const PromptTemplate& sample_template(std::span<const PromptTemplate> pool, Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_template: empty template pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

std::vector<std::string> prompt_vocabulary_texts(std::span<const PromptTemplate> pool, const MarkerWords& markers) {
  std::vector<std::string> texts;
  for (const auto& t : pool) {
    texts.push_back(t.render_input("", ""));
    texts.insert(texts.end(), t.choices.begin(), t.choices.end());
  }
  for (auto r : {VariantRelation::Confirmation, VariantRelation::Uncertainty, VariantRelation::Negation}) {
    texts.push_back(variant_claim("", r, markers));
  }
  return texts;
}

}  // namespace protoco
