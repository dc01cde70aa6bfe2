#include "protoco/eval.hpp"

#include "protoco/checkpoint.hpp"
#include "protoco/consistency.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace protoco {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json verdict_triple(const std::array<double, 3>& v) {
  return ordered_json{{"Support", v[0]}, {"NEI", v[1]}, {"Refute", v[2]}};
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// ---- metrics ------------------------------------------------------------------------

ordered_json EvalReport::to_json() const {
  ordered_json per = ordered_json::object();
  for (Verdict v : kVerdicts) {
    const auto& m = per_class[index_of(v)];
    per[std::string(to_string(v))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  ordered_json cm = ordered_json::array();
  for (const auto& row : confusion) cm.push_back(row);
  ordered_json j;
  j["seed"] = seed;
  j["macro_f1"] = macro_f1;
  j["accuracy"] = accuracy;
  j["consistency_rate"] = consistency_rate ? ordered_json(*consistency_rate) : ordered_json(nullptr);
  j["per_class"] = per;
  j["confusion_gold_by_predicted"] = cm;
  j["config_fingerprint"] = config_fingerprint;
  return j;
}

EvalReport macro_f1(std::span<const Verdict> predictions, std::span<const Verdict> gold) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("macro_f1: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(gold.size()) + " gold labels");
  }
  if (gold.empty()) throw std::invalid_argument("macro_f1: empty input");
  EvalReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++r.confusion[index_of(gold[i])][index_of(predictions[i])];
    correct += gold[i] == predictions[i] ? 1 : 0;
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    const std::size_t tp = r.confusion[c][c];
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < 3; ++o) {
      predicted += r.confusion[o][c];
      actual += r.confusion[c][o];
    }
    ClassMetrics& m = r.per_class[c];
    m.support = actual;
    m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    m.recall = actual == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(actual);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / 3.0;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  return r;
}

// ---- evaluation ---------------------------------------------------------------------

ordered_json InstancePrediction::to_json() const {
  ordered_json j;
  j["id"] = id;
  j["gold"] = std::string(to_string(gold));
  j["predicted"] = std::string(to_string(predicted));
  j["template"] = template_id;
  j["beta"] = verdict_triple(scores.beta);
  j["q"] = verdict_triple(scores.q);
  if (relation_predictions) {
    ordered_json rel = ordered_json::object();
    for (VariantRelation r : kRelations) {
      rel[std::string(short_name(r))] = std::string(to_string((*relation_predictions)[index_of(r)]));
    }
    j["relations"] = rel;
    j["consistent"] = consistent;
  }
  return j;
}

Evaluation evaluate(const Model& model, const Prompter& prompter, std::span<const PromptTemplate> pool,
                    std::span<const Instance> test, std::uint64_t eval_seed, bool with_consistency) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Rng rng(eval_seed);
  Evaluation out;
  std::vector<Verdict> predicted, gold;
  std::size_t consistent = 0;
  for (const auto& inst : test) {
    if (!inst.label) throw std::invalid_argument("evaluate: test instance '" + inst.id + "' has no label");
    const PromptTemplate& tmpl = sample_template(pool, rng);
    InstancePrediction p;
    p.id = inst.id;
    p.gold = *inst.label;
    p.template_id = tmpl.id;
    p.scores = class_scores(model, prompter, inst, tmpl);
    p.predicted = rank_classify(p.scores);
    if (with_consistency) {
      std::map<VariantRelation, Verdict> rel{{VariantRelation::Original, p.predicted}};
      std::array<Verdict, 4> arr{};
      arr[0] = p.predicted;
      for (VariantRelation r : {VariantRelation::Confirmation, VariantRelation::Uncertainty, VariantRelation::Negation}) {
        const Verdict v = rank_classify(class_scores(model, prompter, inst, tmpl, r));
        rel[r] = v;
        arr[index_of(r)] = v;
      }
      p.relation_predictions = arr;
      p.consistent = check_consistency(rel).consistent;
      consistent += p.consistent ? 1 : 0;
    }
    predicted.push_back(p.predicted);
    gold.push_back(p.gold);
    out.predictions.push_back(std::move(p));
  }
  out.report = macro_f1(predicted, gold);
  if (with_consistency) {
    out.report.consistency_rate = static_cast<double>(consistent) / static_cast<double>(test.size());
  }
  return out;
}

// ---- experiments -----------------------------------------------------------------------

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["mode"] = std::string(to_string(train.mode));
  j["total_steps"] = train.total_steps;
  j["batch_size"] = train.batch_size;
  j["learning_rate"] = train.learning_rate;
  j["warmup_fraction"] = train.warmup_fraction;
  j["include_org_pseudo"] = train.include_org_pseudo;
  j["tuning"] = train.tuning == TuningMode::Full ? "full" : "peft";
  j["seeds"] = seeds;
  j["k"] = k;
  j["zero_shot_per_class"] = zero_shot_per_class;
  j["zero_shot_sampling"] = zero_shot_sampling == ZeroShotSampling::Uniform ? "uniform" : "per_class";
  j["eval_seed"] = eval_seed;
  j["with_consistency"] = with_consistency;
  return j;
}

std::string config_fingerprint(const ExperimentConfig& config, const Model& base) {
  const std::string text = config.to_json().dump();
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  const auto bytes = serialize_model(base);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return hex32(static_cast<std::uint32_t>(crc));
}

std::uint64_t eval_seed_for(const ExperimentConfig& config, std::uint64_t seed) {
  return mix(config.eval_seed ^ mix(seed));
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

ExperimentSummary summarize(std::vector<EvalReport> reports, std::string fingerprint) {
  if (reports.empty()) throw std::invalid_argument("summarize: no reports");
  ExperimentSummary s;
  std::vector<double> f1;
  double consistency = 0.0;
  bool all_consistency = true;
  for (const auto& r : reports) {
    f1.push_back(r.macro_f1);
    if (r.consistency_rate) {
      consistency += *r.consistency_rate;
    } else {
      all_consistency = false;
    }
  }
  s.mean_macro_f1 = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
  s.std_macro_f1 = sample_stddev(f1);
  s.single_seed = reports.size() == 1;
  if (all_consistency) s.mean_consistency_rate = consistency / static_cast<double>(reports.size());
  s.reports = std::move(reports);
  s.config_fingerprint = std::move(fingerprint);
  return s;
}

ordered_json ExperimentSummary::to_json() const {
  ordered_json j;
  j["config_fingerprint"] = config_fingerprint;
  j["seeds"] = reports.size();
  j["mean_macro_f1"] = mean_macro_f1;
  j["std_macro_f1"] = std_macro_f1;
  j["std_convention"] = "sample (n-1)";
  if (single_seed) j["note"] = "single seed: std reported as 0";
  j["mean_consistency_rate"] = mean_consistency_rate ? ordered_json(*mean_consistency_rate) : ordered_json(nullptr);
  ordered_json per = ordered_json::array();
  for (const auto& r : reports) per.push_back({{"seed", r.seed}, {"macro_f1", r.macro_f1}});
  j["per_seed"] = per;
  return j;
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentSummary run_experiment(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                                 std::span<const PromptTemplate> pool, std::span<const Instance> train_pool,
                                 std::span<const Instance> test, const std::optional<std::filesystem::path>& run_dir) {
  if (config.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
  const std::string fingerprint = config_fingerprint(config, base);
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    ordered_json cfg = config.to_json();
    cfg["fingerprint"] = fingerprint;
    write_json(*run_dir / "config.json", cfg);
  }

  std::vector<EvalReport> reports;
  for (std::uint64_t seed : config.seeds) {
    try {
      Model model = base.clone();
      TrainConfig tc = config.train;
      tc.seed = seed;
      TrainLog log;
      if (tc.mode == TrainMode::FewShot) {
        const auto split = sample_k_shot(train_pool, config.k, seed);
        log = train_few_shot(model, split, tc, prompter, pool);
      } else {
        const auto split = sample_zero_shot(train_pool, seed, config.zero_shot_per_class, config.zero_shot_sampling);
        log = train_zero_shot(model, split, tc, prompter, pool);
      }
      Evaluation ev =
          evaluate(model, prompter, pool, test, eval_seed_for(config, seed), config.with_consistency);
      ev.report.seed = seed;
      ev.report.config_fingerprint = fingerprint;
      if (run_dir) {
        const auto dir = *run_dir / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        save_checkpoint(model, dir / "checkpoint.ptco");
        log.write_csv(dir / "steps.csv");
        write_json(dir / "report.json", ev.report.to_json());
      }
      reports.push_back(std::move(ev.report));
    } catch (const std::exception& e) {
      throw std::runtime_error("run_experiment: seed " + std::to_string(seed) + " failed: " + e.what());
    }
  }
  ExperimentSummary summary = summarize(std::move(reports), fingerprint);
  if (run_dir) write_json(*run_dir / "summary.json", summary.to_json());
  return summary;
}

ExperimentSummary evaluate_base(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                                std::span<const PromptTemplate> pool, std::span<const Instance> test) {
  std::vector<EvalReport> reports;
  for (std::uint64_t seed : config.seeds) {
    Evaluation ev = evaluate(base, prompter, pool, test, eval_seed_for(config, seed), config.with_consistency);
    ev.report.seed = seed;
    reports.push_back(std::move(ev.report));
  }
  return summarize(std::move(reports), config_fingerprint(config, base));
}

std::string AblationResult::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(12) << "method";
  for (const auto& r : baseline.reports) os << std::setw(12) << ("seed " + std::to_string(r.seed));
  os << std::setw(12) << "mean" << "std\n";
  auto row = [&](const char* name, const ExperimentSummary& s) {
    os << std::setw(12) << name;
    for (const auto& r : s.reports) os << std::setw(12) << r.macro_f1;
    os << std::setw(12) << s.mean_macro_f1 << s.std_macro_f1 << '\n';
  };
  row("warmup-only", baseline);
  row("protoco", full);
  return os.str();
}

AblationResult run_ablation(const ExperimentConfig& config, const Model& base, const Prompter& prompter,
                            std::span<const PromptTemplate> pool, std::span<const Instance> train_pool,
                            std::span<const Instance> test, const std::optional<std::filesystem::path>& run_dir) {
  if (config.train.mode != TrainMode::FewShot) throw std::invalid_argument("run_ablation: few-shot mode only");
  ExperimentConfig baseline_cfg = config;
  baseline_cfg.train.warmup_fraction = 1.0;
  AblationResult r;
  r.baseline = run_experiment(baseline_cfg, base, prompter, pool, train_pool, test,
                              run_dir ? std::optional(*run_dir / "warmup_only") : std::nullopt);
  r.full = run_experiment(config, base, prompter, pool, train_pool, test,
                          run_dir ? std::optional(*run_dir / "protoco") : std::nullopt);
  if (run_dir) {
    std::ofstream out(*run_dir / "ablation.txt", std::ios::binary);
    out << r.table();
  }
  return r;
}

}  // namespace protoco
