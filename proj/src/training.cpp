#include "protoco/training.hpp"

#include "protoco/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace protoco {

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  lm += o.lm;
  cls += o.cls;
  ul += o.ul;
  total += o.total;
  return *this;
}

// ---- losses ---------------------------------------------------------------------

LossTerms loss_terms(const Model& model, const PromptedExample& example, std::size_t* clamp_count) {
  const ScoreGraph g = score_graph(model, example);
  const std::size_t correct = index_of(example.label);
  const int correct_col[] = {static_cast<int>(correct)};

  LossTerms t;
  t.lm = scale(g.beta[correct], -1.0);
  t.cls = scale(pick(log_softmax(g.beta_row), correct_col), -1.0);

  std::vector<Tensor> penalties;
  Index n_tokens = 0;
  for (Verdict v : kVerdicts) {
    const std::size_t k = index_of(v);
    if (k == correct) continue;
    penalties.push_back(log1m(exp(g.token_logprobs[k]), clamp_count));
    n_tokens += g.token_logprobs[k].rows();
  }
  t.ul = scale(sum(concat(penalties, 0)), -1.0 / static_cast<double>(n_tokens));
  t.total = add(add(t.lm, t.cls), t.ul);
  return t;
}

double lm_loss(const Model& model, const PromptedExample& example) {
  NoGradGuard no_grad;
  return loss_terms(model, example).lm.item();
}

double cls_loss(const Model& model, const PromptedExample& example) {
  NoGradGuard no_grad;
  return loss_terms(model, example).cls.item();
}

double ul_loss(const Model& model, const PromptedExample& example, std::size_t* clamp_count) {
  NoGradGuard no_grad;
  return loss_terms(model, example, clamp_count).ul.item();
}

BatchLoss total_loss(const Model& model, std::span<const PromptedExample> batch, std::size_t* clamp_count) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  BatchLoss out;
  std::vector<Tensor> totals;
  totals.reserve(batch.size());
  for (const auto& ex : batch) {
    LossTerms t = loss_terms(model, ex, clamp_count);
    out.breakdown.lm += t.lm.item();
    out.breakdown.cls += t.cls.item();
    out.breakdown.ul += t.ul.item();
    totals.push_back(std::move(t.total));
  }
  out.total = sum(concat(totals, 0));
  out.breakdown.total = out.total.item();
  return out;
}

// ---- optimizer ------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double learning_rate, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamOptimizer::step(int step_index) {
  for (const Tensor& p : params_) {
    if (p.has_grad() && !p.grad().allFinite()) {
      throw TrainingError("optimizer: non-finite gradient at step " + std::to_string(step_index));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const Matrix g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    p.mutable_value().array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

// ---- configuration -------------------------------------------------------------------

std::string_view to_string(TrainMode m) { return m == TrainMode::FewShot ? "few" : "zero"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Warmup: return "warmup";
    case Phase::Variants: return "variants";
    case Phase::ZeroShot: return "zeroshot";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw std::invalid_argument("TrainConfig: warmup_fraction must lie in [0, 1]");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
}

int TrainConfig::warmup_steps() const {
  return static_cast<int>(std::lround(warmup_fraction * static_cast<double>(total_steps)));
}

int TrainConfig::effective_batch_size(std::size_t pool_size, std::size_t shots) const {
  if (pool_size < static_cast<std::size_t>(batch_size)) return static_cast<int>(std::max<std::size_t>(shots, 1));
  return batch_size;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("TrainLog: cannot write " + path.string());
  out << "step,phase,lm,cls,ul,total\n" << std::setprecision(17);
  for (const auto& s : steps) {
    out << s.step << ',' << to_string(s.phase) << ',' << s.loss.lm << ',' << s.loss.cls << ',' << s.loss.ul << ','
        << s.loss.total << '\n';
  }
}

// ---- sampling ----------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t pool_size, Rng& rng) : order_(pool_size), rng_(&rng) {
  if (pool_size == 0) throw std::invalid_argument("BatchSampler: empty pool");
  for (std::size_t i = 0; i < pool_size; ++i) order_[i] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), *rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  while (out.size() < batch_size) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

// ---- training loops -----------------------------------------------------------------

namespace {

LossBreakdown optimize_step(const Model& model, AdamOptimizer& opt, std::span<const PromptedExample> batch,
                            int step, std::size_t& clamp_count) {
  TapeScope scope;
  opt.zero_grad();
  BatchLoss loss = total_loss(model, batch, &clamp_count);
  backward(loss.total);
  opt.step(step);
  return loss.breakdown;
}

}  // namespace

TrainLog train_few_shot(Model& model, std::span<const Instance> labeled, const TrainConfig& config,
                        const Prompter& prompter, std::span<const PromptTemplate> pool,
                        const BatchObserver& observer) {
  config.validate();
  if (config.mode != TrainMode::FewShot) throw std::invalid_argument("train_few_shot: config mode is not FewShot");
  if (labeled.empty()) throw std::invalid_argument("train_few_shot: empty training set");
  for (const auto& inst : labeled) {
    if (!inst.label) throw std::invalid_argument("train_few_shot: instance '" + inst.id + "' has no label");
  }

  model.params().set_tuning_mode(config.tuning);
  Rng rng(config.seed);
  BatchSampler sampler(labeled.size(), rng);
  AdamOptimizer opt(model.params().trainable(), config.learning_rate);
  const std::size_t shots = labeled.size() / 3;
  const auto batch = static_cast<std::size_t>(config.effective_batch_size(labeled.size(), shots));
  const int warmup = config.warmup_steps();

  TrainLog log;
  for (int step = 0; step < config.total_steps; ++step) {
    const Phase phase = step < warmup ? Phase::Warmup : Phase::Variants;
    std::vector<PromptedExample> examples;
    for (std::size_t idx : sampler.next(batch)) {
      const Instance& inst = labeled[idx];
      if (phase == Phase::Warmup) {
        examples.push_back(
            prompter.render(sample_template(pool, rng), inst, VariantRelation::Original, *inst.label));
      } else {
        VariantSet set = build_variant_set(inst, *inst.label, LabelSource::GroundTruth, prompter, pool, rng);
        for (auto& ex : set.examples) examples.push_back(std::move(ex));
      }
    }
    if (observer) observer(step, phase, examples);
    log.steps.push_back({step, phase, optimize_step(model, opt, examples, step, log.clamp_count)});
  }
  model.params().zero_grad();
  return log;
}

TrainLog train_zero_shot(Model& model, std::span<const UnlabeledInstance> unlabeled, const TrainConfig& config,
                         const Prompter& prompter, std::span<const PromptTemplate> pool,
                         const BatchObserver& observer) {
  config.validate();
  if (config.mode != TrainMode::ZeroShot) throw std::invalid_argument("train_zero_shot: config mode is not ZeroShot");
  if (unlabeled.empty()) throw std::invalid_argument("train_zero_shot: empty training set");

  model.params().set_tuning_mode(config.tuning);
  Rng rng(config.seed);
  BatchSampler sampler(unlabeled.size(), rng);
  AdamOptimizer opt(model.params().trainable(), config.learning_rate);
  const auto batch = static_cast<std::size_t>(config.effective_batch_size(unlabeled.size(), unlabeled.size() / 3));

  TrainLog log;
  for (int step = 0; step < config.total_steps; ++step) {
    std::vector<PromptedExample> examples;
    for (std::size_t idx : sampler.next(batch)) {
      const UnlabeledInstance& inst = unlabeled[idx];
      const Verdict pseudo = rank_classify(class_scores(model, prompter, inst, sample_template(pool, rng)));
      log.pseudo_labels.push_back({step, inst.id(), pseudo});
      VariantSet set = build_variant_set(inst, pseudo, prompter, pool, rng);
      for (VariantRelation r : kRelations) {
        if (r == VariantRelation::Original && !config.include_org_pseudo) continue;
        examples.push_back(std::move(set.examples[index_of(r)]));
      }
    }
    if (observer) observer(step, Phase::ZeroShot, examples);
    log.steps.push_back({step, Phase::ZeroShot, optimize_step(model, opt, examples, step, log.clamp_count)});
  }
  model.params().zero_grad();
  return log;
}

TrainLog pretrain(Model& model, std::span<const Instance> corpus, const PretrainConfig& config,
                  const Prompter& prompter, std::span<const PromptTemplate> pool) {
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (config.batch_size < 1 || config.total_steps < 0) throw std::invalid_argument("pretrain: bad config");
  for (const auto& inst : corpus) {
    if (!inst.label) throw std::invalid_argument("pretrain: instance '" + inst.id + "' has no label");
  }

  auto& params = model.params();
  for (auto& [name, t] : params.base) {
    t.set_requires_grad(!(config.freeze_token_embeddings && name == "embed.token"));
  }
  for (auto& [name, t] : params.ia3) t.set_requires_grad(false);

  Rng rng(config.seed);
  BatchSampler sampler(corpus.size(), rng);
  AdamOptimizer opt(params.trainable(), config.learning_rate);
  TrainLog log;
  for (int step = 0; step < config.total_steps; ++step) {
    TapeScope scope;
    opt.zero_grad();
    std::vector<Tensor> terms;
    LossBreakdown b;
    for (std::size_t idx : sampler.next(static_cast<std::size_t>(config.batch_size))) {
      const Instance& inst = corpus[idx];
      const PromptedExample ex =
          prompter.render(sample_template(pool, rng), inst, VariantRelation::Original, *inst.label);
      Tensor lm = scale(mean(model.target_logprobs(ex.input, ex.target)), -1.0);
      b.lm += lm.item();
      terms.push_back(std::move(lm));
    }
    const Tensor loss = sum(concat(terms, 0));
    b.total = loss.item();
    backward(loss);
    opt.step(step);
    log.steps.push_back({step, Phase::Pretrain, b});
  }
  params.zero_grad();
  params.set_tuning_mode(TuningMode::Peft);
  return log;
}

}  // namespace protoco
