#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace protoco;
using protoco::testing::set_head_logits;

namespace {

const Tokenizer& tok() {
  static const Tokenizer t = protoco::testing::toy_tokenizer({"a b c"});
  return t;
}

Model tiny_model(std::uint64_t seed) { return Model(protoco::testing::tiny_config(tok().vocab_size()), seed); }

PromptTemplate with_choices(Choices c) {
  PromptTemplate t{"toy", "Suppose {evidence}. Can we infer {claim}?"};
  t.choices = std::move(c);
  return t;
}

}  // namespace

TEST_CASE("single-token target with probability 0.5") {
  Model m = tiny_model(1);
  set_head_logits(m, tok(), {{"a", 0.0}, {"b", 0.0}});
  const double beta = beta_score(m, tok().encode("paris"), tok().encode("a", SequenceRole::Target));
  CHECK(std::abs(beta - std::log(0.5)) < 1e-15);
}

TEST_CASE("uniform head scores -ln V for any target") {
  Model m = tiny_model(2);
  m.params().base.at("head.w").mutable_value().setZero();
  m.params().base.at("head.b").mutable_value().setZero();
  const double beta = beta_score(m, tok().encode("paris is in france"), tok().encode("a b c", SequenceRole::Target));
  CHECK(std::abs(beta + std::log(static_cast<double>(tok().vocab_size()))) < 1e-12);
}

TEST_CASE("beta is the mean of reference per-token log-probs") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Model m = tiny_model(10 + s);
    protoco::testing::randomize_ia3(m, s);
    const auto in = tok().encode("suppose france's capital is paris . can we infer paris is in france ?");
    const auto tgt = tok().encode("a c b", SequenceRole::Target);
    const auto ref = protoco::testing::ReferenceModel(m).token_logprobs(in.ids, tgt.ids);
    double mean = 0.0;
    for (double v : ref) mean += v / static_cast<double>(ref.size());
    CHECK(std::abs(beta_score(m, in, tgt) - mean) < 1e-10);
  }
}

TEST_CASE("q from beta") {
  const auto eq = scores_from_beta({-0.7, -0.7, -0.7});
  for (double q : eq.q) CHECK(std::abs(q - 1.0 / 3.0) < 1e-15);

  const auto s = scores_from_beta({std::log(2.0), 0.0, 0.0});
  CHECK(std::abs(s.q[0] - 0.5) < 1e-15);
  CHECK(std::abs(s.q[1] - 0.25) < 1e-15);
  CHECK(std::abs(s.q[2] - 0.25) < 1e-15);

  Rng rng(3);
  std::uniform_real_distribution<double> u(-5.0, 0.0);
  for (int i = 0; i < 100; ++i) {
    const std::array<double, 3> b{u(rng), u(rng), u(rng)};
    const double c = u(rng) * 10.0;
    const auto q1 = scores_from_beta(b);
    const auto q2 = scores_from_beta({b[0] + c, b[1] + c, b[2] + c});
    double z = 0.0;
    for (double x : b) z += std::exp(x);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::abs(q1.q[k] - q2.q[k]) < 1e-12);
      CHECK(std::abs(q1.q[k] - std::exp(b[k]) / z) < 1e-15);
    }
  }
}

TEST_CASE("rank_classify") {
  CHECK(rank_classify(scores_from_beta({-0.1, -0.5, -0.9})) == Verdict::Support);
  CHECK(rank_classify(scores_from_beta({-0.9, -0.5, -0.1})) == Verdict::Refute);
  CHECK(rank_classify(scores_from_beta({-0.3, -0.3, -0.9})) == Verdict::Support);
  CHECK(rank_classify(scores_from_beta({-0.9, -0.3, -0.3})) == Verdict::Nei);
  CHECK(rank_classify(scores_from_beta({-0.3, -0.3, -0.3})) == Verdict::Support);

  Rng rng(4);
  std::uniform_real_distribution<double> u(-5.0, 0.0);
  for (int i = 0; i < 200; ++i) {
    const std::array<double, 3> b{u(rng), u(rng), u(rng)};
    const auto s = scores_from_beta(b);
    const auto q_arg = static_cast<std::size_t>(std::max_element(s.q.begin(), s.q.end()) - s.q.begin());
    CHECK(index_of(rank_classify(s)) == q_arg);
    // strictly increasing transform applied to every beta
    const auto t = scores_from_beta({std::exp(3.0 * b[0]) + b[0], std::exp(3.0 * b[1]) + b[1],
                                     std::exp(3.0 * b[2]) + b[2]});
    CHECK(rank_classify(t) == rank_classify(s));
  }
}

TEST_CASE("class scores on random models") {
  const Instance inst = protoco::testing::paris_instance();
  for (std::uint64_t s = 0; s < 10; ++s) {
    Model m = tiny_model(40 + s);
    protoco::testing::randomize_ia3(m, s);
    const Prompter p(tok());
    for (const auto& t : builtin_templates()) {
      const ClassScores cs = class_scores(m, p, inst, t, VariantRelation::Negation);
      double total = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(cs.beta[k] <= 0.0);
        CHECK(std::isfinite(cs.beta[k]));
        total += cs.q[k];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("equal-length targets rank the same with or without length normalisation") {
  Model m = tiny_model(5);
  protoco::testing::randomize_ia3(m, 5);
  const auto in = tok().encode("paris is in france");
  const std::vector<std::string> targets = {"a b", "b a", "c c", "a a", "b c"};
  for (const auto& x : targets) {
    for (const auto& y : targets) {
      const auto tx = tok().encode(x, SequenceRole::Target);
      const auto ty = tok().encode(y, SequenceRole::Target);
      const double sx = 2.0 * beta_score(m, in, tx);
      const double sy = 2.0 * beta_score(m, in, ty);
      CHECK((beta_score(m, in, tx) > beta_score(m, in, ty)) == (sx > sy));
    }
  }
}

TEST_CASE("length normalisation changes the ranking for unequal lengths") {
  // p(a) = 1/2, p(b) = p(c) = 1/4 at every position. Search every pair of
  // targets up to length 3 for one where the mean and the sum disagree.
  Model m = tiny_model(6);
  set_head_logits(m, tok(), {{"a", std::log(2.0)}, {"b", 0.0}, {"c", 0.0}});
  const auto in = tok().encode("paris is in france");
  std::vector<std::string> targets;
  for (const char* x : {"a", "b", "c"}) {
    targets.emplace_back(x);
    for (const char* y : {"a", "b", "c"}) {
      targets.push_back(std::string(x) + " " + y);
      for (const char* z : {"a", "b", "c"}) targets.push_back(std::string(x) + " " + y + " " + z);
    }
  }
  std::optional<std::pair<std::string, std::string>> found;
  for (const auto& x : targets) {
    for (const auto& y : targets) {
      const auto tx = tok().encode(x, SequenceRole::Target);
      const auto ty = tok().encode(y, SequenceRole::Target);
      const double bx = beta_score(m, in, tx), by = beta_score(m, in, ty);
      const double sx = bx * static_cast<double>(tx.size()), sy = by * static_cast<double>(ty.size());
      if (!found && bx > by && sx < sy) found.emplace(x, y);
    }
  }
  REQUIRE(found.has_value());
  CHECK(found->first == "a a a");
  CHECK(found->second == "b");

  // Pinned regression: "a a a" outranks "b" under beta although its summed
  // log-probability is lower.
  const Prompter p(tok());
  const auto ex = p.render(with_choices({"a a a", "b", "c c"}), protoco::testing::paris_instance(),
                           VariantRelation::Original, Verdict::Support);
  const ClassScores cs = class_scores(m, ex);
  CHECK(std::abs(cs.beta[0] - std::log(0.5)) < 1e-12);
  CHECK(std::abs(cs.beta[1] - std::log(0.25)) < 1e-12);
  CHECK(rank_classify(cs) == Verdict::Support);
  CHECK(3.0 * cs.beta[0] < 1.0 * cs.beta[1]);
}
