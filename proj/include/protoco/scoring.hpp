#pragma once

#include "protoco/model.hpp"
#include "protoco/prompting.hpp"
#include "protoco/tensor.hpp"
#include "protoco/verdict.hpp"

#include <array>

namespace protoco {

// Per-label length-normalised log-likelihood beta and its softmax q.
struct ClassScores {
  std::array<double, 3> beta{};
  std::array<double, 3> q{};

  double beta_of(Verdict v) const { return beta[index_of(v)]; }
  double q_of(Verdict v) const { return q[index_of(v)]; }
};

// Mean teacher-forced token log-probability of target given input.
double beta_score(const Model& model, const TokenSequence& input, const TokenSequence& target);

// q = softmax(beta).
ClassScores scores_from_beta(const std::array<double, 3>& beta);

// Differentiable pieces shared by scoring and the losses. The encoder runs
// once; the decoder runs once per label.
struct ScoreGraph {
  std::array<Tensor, 3> token_logprobs;  // |choice| x 1 each
  std::array<Tensor, 3> beta;            // 1 x 1 each
  Tensor beta_row;                       // 1 x 3, Verdict order
};

ScoreGraph score_graph(const Model& model, const PromptedExample& example);

ClassScores class_scores(const Model& model, const PromptedExample& example);
ClassScores class_scores(const Model& model, const Prompter& prompter, const Instance& instance,
                         const PromptTemplate& tmpl, VariantRelation relation = VariantRelation::Original);
ClassScores class_scores(const Model& model, const Prompter& prompter, const UnlabeledInstance& instance,
                         const PromptTemplate& tmpl, VariantRelation relation = VariantRelation::Original);

// Label with the largest beta; exact ties go to the earliest of
// Support, NEI, Refute.
Verdict rank_classify(const ClassScores& scores);

}  // namespace protoco
