#include "protoco/consistency.hpp"

#include <stdexcept>

namespace protoco {

Verdict VariantLabels::for_relation(VariantRelation r) const {
  switch (r) {
    case VariantRelation::Confirmation: return confirmation;
    case VariantRelation::Uncertainty: return uncertainty;
    case VariantRelation::Negation: return negation;
    case VariantRelation::Original: break;
  }
  throw std::invalid_argument("VariantLabels: no derived label for the original relation");
}

VariantLabels derive_variant_labels(Verdict original) {
  switch (original) {
    case Verdict::Support: return {Verdict::Support, Verdict::Refute, Verdict::Refute};
    case Verdict::Refute: return {Verdict::Refute, Verdict::Refute, Verdict::Support};
    case Verdict::Nei: return {Verdict::Nei, Verdict::Support, Verdict::Nei};
  }
  throw std::invalid_argument("derive_variant_labels: invalid verdict");
}

namespace {

template <typename InstanceT>
VariantSet build(const InstanceT& instance, Verdict label, LabelSource source, const Prompter& prompter,
                 std::span<const PromptTemplate> pool, Rng& rng) {
  const VariantLabels derived = derive_variant_labels(label);
  VariantSet set;
  set.label_source = source;
  for (VariantRelation r : kRelations) {
    const Verdict y = r == VariantRelation::Original ? label : derived.for_relation(r);
    set.examples[index_of(r)] = prompter.render(sample_template(pool, rng), instance, r, y);
  }
  return set;
}

}  // namespace

VariantSet build_variant_set(const Instance& instance, Verdict label, LabelSource source, const Prompter& prompter,
                             std::span<const PromptTemplate> pool, Rng& rng) {
  if (source == LabelSource::PseudoLabel && instance.label.has_value()) {
    throw std::invalid_argument("build_variant_set: pseudo-labelled variant set requested for labelled instance '" +
                                instance.id + "'");
  }
  return build(instance, label, source, prompter, pool, rng);
}

VariantSet build_variant_set(const UnlabeledInstance& instance, Verdict pseudo_label, const Prompter& prompter,
                             std::span<const PromptTemplate> pool, Rng& rng) {
  return build(instance, pseudo_label, LabelSource::PseudoLabel, prompter, pool, rng);
}

ConsistencyCheck check_consistency(const std::map<VariantRelation, Verdict>& predictions) {
  for (VariantRelation r : kRelations) {
    if (!predictions.contains(r)) {
      throw std::invalid_argument("check_consistency: missing prediction for " + std::string(to_string(r)));
    }
  }
  const VariantLabels want = derive_variant_labels(predictions.at(VariantRelation::Original));
  ConsistencyCheck out;
  for (VariantRelation r : {VariantRelation::Confirmation, VariantRelation::Uncertainty, VariantRelation::Negation}) {
    if (predictions.at(r) != want.for_relation(r)) out.violations.push_back(r);
  }
  out.consistent = out.violations.empty();
  return out;
}

}  // namespace protoco
