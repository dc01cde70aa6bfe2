#pragma once

#include "protoco/consistency.hpp"
#include "protoco/instance.hpp"
#include "protoco/model.hpp"
#include "protoco/prompting.hpp"
#include "protoco/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace protoco {

struct LossBreakdown {
  double lm = 0.0;
  double cls = 0.0;
  double ul = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

// Differentiable per-example loss terms.
struct LossTerms {
  Tensor lm;   // -beta(correct)
  Tensor cls;  // -log softmax(beta)[correct]
  Tensor ul;   // mean over incorrect-target tokens of -log(1 - p)
  Tensor total;
};

// Probabilities above 1 - 1e-12 inside the unlikelihood log are clamped;
// each clamp increments *clamp_count.
LossTerms loss_terms(const Model& model, const PromptedExample& example, std::size_t* clamp_count = nullptr);

double lm_loss(const Model& model, const PromptedExample& example);
double cls_loss(const Model& model, const PromptedExample& example);
double ul_loss(const Model& model, const PromptedExample& example, std::size_t* clamp_count = nullptr);

struct BatchLoss {
  Tensor total;
  LossBreakdown breakdown;
};

// Sum over the batch of lm + cls + ul.
BatchLoss total_loss(const Model& model, std::span<const PromptedExample> batch, std::size_t* clamp_count = nullptr);

// Adam with bias correction over a fixed parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // Throws TrainingError naming step_index on a non-finite gradient.
  void step(int step_index);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TrainMode { FewShot, ZeroShot };
std::string_view to_string(TrainMode m);

struct TrainConfig {
  int total_steps = 1500;
  int batch_size = 4;
  double learning_rate = 1e-4;
  double warmup_fraction = 0.5;  // few-shot only
  TrainMode mode = TrainMode::FewShot;
  std::uint64_t seed = 0;
  bool include_org_pseudo = false;  // zero-shot only
  TuningMode tuning = TuningMode::Peft;

  void validate() const;
  int warmup_steps() const;
  // batch_size, or the shot count when the pool is smaller than batch_size.
  int effective_batch_size(std::size_t pool_size, std::size_t shots) const;
};

enum class Phase { Pretrain, Warmup, Variants, ZeroShot };
std::string_view to_string(Phase p);

struct StepRecord {
  int step = 0;
  Phase phase = Phase::Warmup;
  LossBreakdown loss;
};

struct PseudoLabelEvent {
  int step = 0;
  std::string instance_id;
  Verdict label = Verdict::Support;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<PseudoLabelEvent> pseudo_labels;
  std::size_t clamp_count = 0;

  // step,phase,lm,cls,ul,total
  void write_csv(const std::filesystem::path& path) const;
};

// Draws batches without replacement, reshuffling after each pass.
class BatchSampler {
 public:
  BatchSampler(std::size_t pool_size, Rng& rng);
  std::vector<std::size_t> next(std::size_t batch_size);

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng* rng_;
};

// Called with every batch right before its optimizer step.
using BatchObserver = std::function<void(int step, Phase phase, std::span<const PromptedExample> batch)>;

// Warm-up on original examples with gold labels, then variant sets with
// labels derived from gold. Only parameters enabled by config.tuning change.
TrainLog train_few_shot(Model& model, std::span<const Instance> labeled, const TrainConfig& config,
                        const Prompter& prompter, std::span<const PromptTemplate> pool,
                        const BatchObserver& observer = {});

// Each step pseudo-labels the sampled originals with the current model and
// trains on the derived variants (and the original when include_org_pseudo).
TrainLog train_zero_shot(Model& model, std::span<const UnlabeledInstance> unlabeled, const TrainConfig& config,
                         const Prompter& prompter, std::span<const PromptTemplate> pool,
                         const BatchObserver& observer = {});

struct PretrainConfig {
  int total_steps = 5000;
  int batch_size = 8;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  bool freeze_token_embeddings = true;
};

// Language-modelling loss on original prompts with gold labels, all base
// weights trainable except (optionally) the token embedding table.
TrainLog pretrain(Model& model, std::span<const Instance> corpus, const PretrainConfig& config,
                  const Prompter& prompter, std::span<const PromptTemplate> pool);

}  // namespace protoco
