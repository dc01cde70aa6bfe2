#include "doctest.h"
#include "support.hpp"

#include <set>

using namespace protoco;

namespace {

using V = Verdict;
using R = VariantRelation;

const Tokenizer& tok() {
  static const Tokenizer t = protoco::testing::toy_tokenizer();
  return t;
}

std::map<R, V> preds(V org, V con, V unc, V neg) {
  return {{R::Original, org}, {R::Confirmation, con}, {R::Uncertainty, unc}, {R::Negation, neg}};
}

}  // namespace

TEST_CASE("variant label table, all nine cells") {
  CHECK(derive_variant_labels(V::Support) == VariantLabels{V::Support, V::Refute, V::Refute});
  CHECK(derive_variant_labels(V::Refute) == VariantLabels{V::Refute, V::Refute, V::Support});
  CHECK(derive_variant_labels(V::Nei) == VariantLabels{V::Nei, V::Support, V::Nei});
}

TEST_CASE("derived triples are pairwise distinct") {
  std::set<std::tuple<V, V, V>> seen;
  for (V v : kVerdicts) {
    const auto d = derive_variant_labels(v);
    seen.emplace(d.confirmation, d.uncertainty, d.negation);
  }
  CHECK(seen.size() == 3);
}

TEST_CASE("check_consistency") {
  CHECK(check_consistency(preds(V::Support, V::Support, V::Refute, V::Refute)).consistent);

  const auto bad_con = check_consistency(preds(V::Support, V::Refute, V::Refute, V::Refute));
  CHECK_FALSE(bad_con.consistent);
  CHECK(bad_con.violations == std::vector<R>{R::Confirmation});

  const auto all_nei = check_consistency(preds(V::Nei, V::Nei, V::Nei, V::Nei));
  CHECK_FALSE(all_nei.consistent);
  CHECK(all_nei.violations == std::vector<R>{R::Uncertainty});

  for (V v : kVerdicts) {
    const auto d = derive_variant_labels(v);
    CHECK(check_consistency(preds(v, d.confirmation, d.uncertainty, d.negation)).consistent);
  }

  std::map<R, V> missing = preds(V::Support, V::Support, V::Refute, V::Refute);
  missing.erase(R::Negation);
  CHECK_THROWS(check_consistency(missing));
}

TEST_CASE("variant set for a Support instance") {
  const Prompter p(tok());
  const auto pool = builtin_templates();
  Rng rng(5);
  const VariantSet set =
      build_variant_set(protoco::testing::paris_instance(), V::Support, LabelSource::GroundTruth, p, pool, rng);
  const char* expected[] = {"yes", "yes", "no", "no"};
  for (R r : kRelations) {
    CHECK(set.at(r).relation == r);
    CHECK(tok().decode(set.at(r).target.ids) == expected[index_of(r)]);
  }
  CHECK(set.label_source == LabelSource::GroundTruth);
}

TEST_CASE("templates are drawn per example") {
  const Prompter p(tok());
  const auto pool = builtin_templates();
  Rng rng(11);
  std::set<std::string> used;
  for (int i = 0; i < 10; ++i) {
    const auto set = build_variant_set(protoco::testing::paris_instance(), V::Nei, LabelSource::GroundTruth, p,
                                       pool, rng);
    std::set<std::string> within;
    for (const auto& ex : set.examples) within.insert(ex.template_id);
    used.insert(within.begin(), within.end());
    if (within.size() > 1) break;
  }
  CHECK(used.size() > 1);
}

TEST_CASE("pseudo labels are refused on labeled instances") {
  const Prompter p(tok());
  const auto pool = builtin_templates();
  Rng rng(1);
  CHECK_THROWS(build_variant_set(protoco::testing::paris_instance(), V::Support, LabelSource::PseudoLabel, p, pool,
                                 rng));
  const UnlabeledInstance u(protoco::testing::paris_instance());
  const auto set = build_variant_set(u, V::Refute, p, pool, rng);
  CHECK(set.label_source == LabelSource::PseudoLabel);
  CHECK(set.at(R::Negation).label == V::Support);
}

TEST_CASE("empty evidence fails in rendering") {
  const Prompter p(tok());
  const auto pool = builtin_templates();
  Rng rng(1);
  Instance inst = protoco::testing::paris_instance();
  inst.evidence.clear();
  CHECK_THROWS_AS(build_variant_set(inst, V::Support, LabelSource::GroundTruth, p, pool, rng),
                  std::invalid_argument);
}
