#pragma once

#include "protoco/instance.hpp"
#include "protoco/prompting.hpp"
#include "protoco/verdict.hpp"

#include <array>
#include <map>
#include <span>
#include <vector>

namespace protoco {

struct VariantLabels {
  Verdict confirmation;
  Verdict uncertainty;
  Verdict negation;

  Verdict for_relation(VariantRelation r) const;
  bool operator==(const VariantLabels&) const = default;
};

// Labels implied for the "it is {true, unclear, false} that" variants of a
// claim whose original label is known:
//   Support -> (Support, Refute, Refute)
//   Refute  -> (Refute, Refute, Support)
//   NEI     -> (NEI, Support, NEI)
VariantLabels derive_variant_labels(Verdict original);

enum class LabelSource { GroundTruth, PseudoLabel };

// The original example and its three variants, in ORG, CON, UNC, NEG order.
struct VariantSet {
  std::array<PromptedExample, 4> examples;
  LabelSource label_source = LabelSource::GroundTruth;

  const PromptedExample& original() const { return examples[0]; }
  const PromptedExample& at(VariantRelation r) const { return examples[index_of(r)]; }
};

// Templates are drawn independently per example. A PseudoLabel source on an
// instance that carries a gold label is rejected.
VariantSet build_variant_set(const Instance& instance, Verdict label, LabelSource source, const Prompter& prompter,
                             std::span<const PromptTemplate> pool, Rng& rng);
VariantSet build_variant_set(const UnlabeledInstance& instance, Verdict pseudo_label, const Prompter& prompter,
                             std::span<const PromptTemplate> pool, Rng& rng);

struct ConsistencyCheck {
  bool consistent = false;
  std::vector<VariantRelation> violations;
};

// predictions must hold all four relations.
ConsistencyCheck check_consistency(const std::map<VariantRelation, Verdict>& predictions);

}  // namespace protoco
