#include "protoco/scoring.hpp"

#include <cmath>
#include <stdexcept>

namespace protoco {

double beta_score(const Model& model, const TokenSequence& input, const TokenSequence& target) {
  if (target.ids.empty()) throw std::invalid_argument("beta_score: empty target");
  NoGradGuard no_grad;
  return model.target_logprobs(input, target).value().mean();
}

ClassScores scores_from_beta(const std::array<double, 3>& beta) {
  ClassScores s;
  s.beta = beta;
  double m = beta[0];
  for (double b : beta) m = std::max(m, b);
  double z = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    s.q[i] = std::exp(beta[i] - m);
    z += s.q[i];
  }
  for (double& q : s.q) q /= z;
  return s;
}

ScoreGraph score_graph(const Model& model, const PromptedExample& example) {
  ScoreGraph g;
  const Tensor memory = model.encode(example.input.ids);
  for (Verdict v : kVerdicts) {
    const std::size_t i = index_of(v);
    g.token_logprobs[i] = model.target_logprobs(memory, example.choices[i].ids);
    g.beta[i] = mean(g.token_logprobs[i]);
  }
  g.beta_row = concat(g.beta, 1);
  return g;
}

ClassScores class_scores(const Model& model, const PromptedExample& example) {
  NoGradGuard no_grad;
  const ScoreGraph g = score_graph(model, example);
  return scores_from_beta({g.beta[0].item(), g.beta[1].item(), g.beta[2].item()});
}

ClassScores class_scores(const Model& model, const Prompter& prompter, const Instance& instance,
                         const PromptTemplate& tmpl, VariantRelation relation) {
  return class_scores(model, prompter.render(tmpl, instance, relation, Verdict::Support));
}

ClassScores class_scores(const Model& model, const Prompter& prompter, const UnlabeledInstance& instance,
                         const PromptTemplate& tmpl, VariantRelation relation) {
  return class_scores(model, prompter.render(tmpl, instance, relation, Verdict::Support));
}

Verdict rank_classify(const ClassScores& scores) {
  Verdict best = Verdict::Support;
  for (Verdict v : kVerdicts) {
    if (scores.beta_of(v) > scores.beta_of(best)) best = v;
  }
  return best;
}

}  // namespace protoco
