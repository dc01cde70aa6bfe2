#pragma once

#include "protoco/data.hpp"
#include "protoco/model.hpp"
#include "protoco/prompting.hpp"
#include "protoco/scoring.hpp"
#include "protoco/training.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protoco {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::array<ClassMetrics, 3> per_class{};
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  // Fraction of instances whose four relation predictions pass
  // check_consistency; nullopt when not measured.
  std::optional<double> consistency_rate;
  // confusion[gold][predicted]
  std::array<std::array<std::size_t, 3>, 3> confusion{};
  std::uint64_t seed = 0;
  std::string config_fingerprint;

  nlohmann::ordered_json to_json() const;
};

// Per-class F1 is 0 when precision + recall is 0.
EvalReport macro_f1(std::span<const Verdict> predictions, std::span<const Verdict> gold);

struct InstancePrediction {
  std::string id;
  Verdict gold = Verdict::Support;
  Verdict predicted = Verdict::Support;
  ClassScores scores;
  std::string template_id;
  // Rank-classified label per relation, ORG/CON/UNC/NEG; filled when
  // consistency is measured.
  std::optional<std::array<Verdict, 4>> relation_predictions;
  bool consistent = false;

  nlohmann::ordered_json to_json() const;
};

struct Evaluation {
  EvalReport report;
  std::vector<InstancePrediction> predictions;
};

// One template is sampled per instance; with_consistency also scores the
// three variants under that same template.
Evaluation evaluate(const Model& model, const Prompter& prompter, std::span<const PromptTemplate> pool,
                    std::span<const Instance> test, std::uint64_t eval_seed, bool with_consistency = true);

struct ExperimentConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::size_t k = 4;                 // few-shot shots per class
  std::size_t zero_shot_per_class = 30;
  ZeroShotSampling zero_shot_sampling = ZeroShotSampling::Uniform;
  std::uint64_t eval_seed = 20230707;
  bool with_consistency = true;

  nlohmann::ordered_json to_json() const;
};

// CRC-32 (hex) over the canonical config JSON and the base model bytes.
std::string config_fingerprint(const ExperimentConfig& config, const Model& base);

// Evaluation RNG seed for one experiment seed; independent of training RNG.
std::uint64_t eval_seed_for(const ExperimentConfig& config, std::uint64_t seed);

struct ExperimentSummary {
  std::vector<EvalReport> reports;
  double mean_macro_f1 = 0.0;
  double std_macro_f1 = 0.0;  // sample (n - 1) deviation; 0 for one seed
  bool single_seed = false;
  std::optional<double> mean_consistency_rate;
  std::string config_fingerprint;

  nlohmann::ordered_json to_json() const;
};

// Sample standard deviation; 0 for fewer than two values.
double sample_stddev(std::span<const double> values);

ExperimentSummary summarize(std::vector<EvalReport> reports, std::string fingerprint);

// For every seed: sample the training split, fine-tune a copy of base,
// evaluate on test. When run_dir is given, writes config.json,
// summary.json and per seed checkpoint.ptco, steps.csv, report.json.
ExperimentSummary run_experiment(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                                 std::span<const PromptTemplate> pool, std::span<const Instance> train_pool,
                                 std::span<const Instance> test,
                                 const std::optional<std::filesystem::path>& run_dir = std::nullopt);

// Untouched base model evaluated with the per-seed evaluation RNG of each seed.
ExperimentSummary evaluate_base(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                                std::span<const PromptTemplate> pool, std::span<const Instance> test);

struct AblationResult {
  ExperimentSummary baseline;  // warm-up only
  ExperimentSummary full;      // warm-up then variants
  std::string table() const;   // one row per method, one column per seed
};

AblationResult run_ablation(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                            std::span<const PromptTemplate> pool, std::span<const Instance> train_pool,
                            std::span<const Instance> test,
                            const std::optional<std::filesystem::path>& run_dir = std::nullopt);

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace protoco
