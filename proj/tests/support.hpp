#pragma once

// Small fixtures shared by the unit tests and the acceptance runner.

#include "protoco/protoco.hpp"
#include "reference_model.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace protoco::testing {

inline Instance paris_instance() {
  return {"paris", "Paris is in France", "France's capital is Paris", Verdict::Support, "demo"};
}

inline std::vector<Instance> toy_instances() {
  return {
      paris_instance(),
      {"rome", "Rome is in Spain", "Italy's capital is Rome", Verdict::Refute, "demo"},
      {"tea", "Tea was invented by Kappa", "Tea grows in China", Verdict::Nei, "demo"},
      {"ada", "Ada was born in London", "Ada was born in London", Verdict::Support, "demo"},
  };
}

// Vocabulary covering the toy instances, the built-in templates and any
// extra words.
inline Tokenizer toy_tokenizer(const std::vector<std::string>& extra = {}) {
  std::vector<std::string> texts = prompt_vocabulary_texts(builtin_templates());
  for (const auto& inst : toy_instances()) {
    texts.push_back(inst.claim);
    texts.push_back(inst.evidence);
  }
  texts.insert(texts.end(), extra.begin(), extra.end());
  return Tokenizer::build(texts);
}

inline ModelConfig tiny_config(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.max_seq_len = 48;
  return c;
}

inline void randomize_ia3(Model& model, std::uint64_t seed, double lo = 0.5, double hi = 1.5) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& [name, t] : model.params().ia3) {
    for (Index i = 0; i < t.size(); ++i) t.mutable_value().data()[i] = u(rng);
  }
}

// Head weights zeroed so every position predicts softmax(bias); tokens not
// listed get logit -1000, which underflows to probability 0.
inline void set_head_logits(Model& model, const Tokenizer& tok, const std::map<std::string, double>& logits) {
  auto& w = model.params().base.at("head.w");
  auto& b = model.params().base.at("head.b");
  w.mutable_value().setZero();
  b.mutable_value().setConstant(-1000.0);
  for (const auto& [word, l] : logits) b.mutable_value()(0, tok.id_of(word)) = l;
}

inline PromptedExample toy_example(const Prompter& prompter, const PromptTemplate& tmpl, Verdict label,
                                   VariantRelation rel = VariantRelation::Original) {
  return prompter.render(tmpl, paris_instance(), rel, label);
}

// Loss terms recomputed in plain doubles from the scalar reference forward pass.
struct ScalarLosses {
  double lm, cls, ul, total;
};

inline ScalarLosses reference_losses(const Model& model, const PromptedExample& ex) {
  const ReferenceModel ref(model);
  std::array<std::vector<double>, 3> lp;
  std::array<double, 3> beta{};
  for (std::size_t k = 0; k < 3; ++k) {
    lp[k] = ref.token_logprobs(ex.input.ids, ex.choices[k].ids);
    double s = 0.0;
    for (double v : lp[k]) s += v;
    beta[k] = s / static_cast<double>(lp[k].size());
  }
  const std::size_t y = index_of(ex.label);
  double z = 0.0;
  for (double b : beta) z += std::exp(b);
  ScalarLosses out{};
  out.lm = -beta[y];
  out.cls = -std::log(std::exp(beta[y]) / z);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (k == y) continue;
    for (double v : lp[k]) num += std::log(1.0 - std::exp(v));
    den += static_cast<double>(lp[k].size());
  }
  out.ul = -num / den;
  out.total = out.lm + out.cls + out.ul;
  return out;
}

// Largest |autodiff - central difference| over all elements of the given
// inputs, divided by the largest gradient magnitude seen.
inline double gradient_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                             double eps = 1e-5) {
  {
    TapeScope scope;
    for (auto& t : inputs) t.zero_grad();
    backward(loss_fn());
  }
  double max_diff = 0.0;
  double scale_ref = 1e-12;
  for (auto& t : inputs) {
    const Matrix analytic = t.grad();
    for (Index i = 0; i < t.size(); ++i) {
      double& x = t.mutable_value().data()[i];
      const double orig = x;
      double up, down;
      {
        NoGradGuard ng;
        x = orig + eps;
        up = loss_fn().item();
        x = orig - eps;
        down = loss_fn().item();
      }
      x = orig;
      const double numeric = (up - down) / (2.0 * eps);
      max_diff = std::max(max_diff, std::abs(numeric - analytic.data()[i]));
      scale_ref = std::max({scale_ref, std::abs(numeric), std::abs(analytic.data()[i])});
    }
    t.zero_grad();
  }
  Tape::current().reset();
  return max_diff / scale_ref;
}

inline Tensor random_tensor(Index rows, Index cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return Tensor(std::move(m), true);
}

}  // namespace protoco::testing
