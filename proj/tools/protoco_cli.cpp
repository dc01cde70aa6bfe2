// Command-line front end: corpus generation, pre-training, few/zero-shot
// consistency training, evaluation, single-pair prediction and ablation.

#include "protoco/protoco.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace protoco;
using nlohmann::json;

namespace {

constexpr const char* kRunRootEnv = "PROTOCO_RUN_ROOT";

struct Common {
  std::string data_dir = "data";
  std::string vocab;
  std::string templates;
  std::string config;
};

struct RunConfig {
  ExperimentConfig experiment;
  Choices choices = default_choices();
  MarkerWords markers;
  std::string templates;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run config " + path);
  const json j = json::parse(in);
  auto& e = rc.experiment;
  auto& t = e.train;
  t.total_steps = j.value("total_steps", t.total_steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.warmup_fraction = j.value("warmup_fraction", t.warmup_fraction);
  t.include_org_pseudo = j.value("include_org_pseudo", t.include_org_pseudo);
  e.k = j.value("k", e.k);
  e.seeds = j.value("seeds", e.seeds);
  e.eval_seed = j.value("eval_seed", e.eval_seed);
  e.zero_shot_per_class = j.value("zero_shot_per_class", e.zero_shot_per_class);
  if (j.value("zero_shot_sampling", std::string("uniform")) == "per_class") {
    e.zero_shot_sampling = ZeroShotSampling::PerClass;
  }
  if (j.contains("choices")) {
    const auto& c = j.at("choices");
    rc.choices = {c.value("Support", rc.choices[0]), c.value("NEI", rc.choices[1]), c.value("Refute", rc.choices[2])};
  }
  if (j.contains("markers")) {
    const auto& m = j.at("markers");
    rc.markers.confirmation = m.value("confirmation", rc.markers.confirmation);
    rc.markers.uncertainty = m.value("uncertainty", rc.markers.uncertainty);
    rc.markers.negation = m.value("negation", rc.markers.negation);
  }
  rc.templates = j.value("templates", std::string());
  return rc;
}

std::vector<PromptTemplate> template_pool(const std::string& path, const Choices& choices) {
  if (!path.empty()) return load_template_pool(path, choices);
  auto pool = builtin_templates();
  for (auto& t : pool) t.choices = choices;
  return pool;
}

Tokenizer load_tokenizer(const Common& c) {
  return Tokenizer::load(c.vocab.empty() ? fs::path(c.data_dir) / "vocab.txt" : fs::path(c.vocab));
}

fs::path run_directory(const std::string& flag, const std::string& name) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv(kRunRootEnv);
  return fs::path(root ? root : "runs") / name;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--data", c.data_dir, "Corpus directory from generate-data")->capture_default_str();
  cmd->add_option("--vocab", c.vocab, "Vocabulary file (default <data>/vocab.txt)");
  cmd->add_option("--templates", c.templates, "Template pool file, one pattern per line");
  cmd->add_option("--config", c.config, "Run config JSON; flags given explicitly override it");
}

void print_scores(const ClassScores& s) {
  std::cout << std::fixed << std::setprecision(6);
  for (Verdict v : kVerdicts) {
    std::cout << "  " << std::left << std::setw(8) << to_string(v) << " beta=" << s.beta_of(v) << " q=" << s.q_of(v)
              << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consistency-constrained (IA)^3 fine-tuning for claim verification"};
  app.require_subcommand(1);

  // generate-data
  std::string gen_out = "data";
  std::uint64_t world_seed = 7;
  CorpusSizes sizes;
  auto* gen = app.add_subcommand("generate-data", "Write the synthetic source/target corpus");
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--world-seed", world_seed)->capture_default_str();
  gen->add_option("--pretrain-per-class", sizes.pretrain_per_class)->capture_default_str();
  gen->add_option("--train-per-class", sizes.train_per_class)->capture_default_str();
  gen->add_option("--test-per-class", sizes.test_per_class)->capture_default_str();

  // pretrain
  Common pre_common;
  PretrainConfig pre_cfg;
  std::string pre_out = "base.ptco";
  std::uint64_t init_seed = 11;
  auto* pre = app.add_subcommand("pretrain", "Train the base model on the source-domain prompts");
  add_common(pre, pre_common);
  pre->add_option("--out", pre_out, "Checkpoint path")->capture_default_str();
  pre->add_option("--steps", pre_cfg.total_steps)->capture_default_str();
  pre->add_option("--batch", pre_cfg.batch_size)->capture_default_str();
  pre->add_option("--lr", pre_cfg.learning_rate)->capture_default_str();
  pre->add_option("--seed", pre_cfg.seed, "Batch/template sampling seed")->capture_default_str();
  pre->add_option("--init-seed", init_seed, "Weight initialisation seed")->capture_default_str();
  pre->add_option("--log", "Step log CSV path");

  // train / ablate share these
  Common train_common;
  std::string base_path = "base.ptco";
  std::string mode = "few";
  std::size_t k = 4, n_seeds = 4;
  int steps = 1500, batch = 4;
  double lr = 1e-4, warmup = 0.5;
  bool include_org = false;
  std::string run_dir;
  auto add_train_opts = [&](CLI::App* cmd) {
    add_common(cmd, train_common);
    cmd->add_option("--base", base_path, "Base checkpoint")->capture_default_str();
    cmd->add_option("--k", k, "Shots per class")->capture_default_str();
    cmd->add_option("--seeds", n_seeds, "Number of seeds (1..N)")->capture_default_str();
    cmd->add_option("--steps", steps)->capture_default_str();
    cmd->add_option("--batch", batch)->capture_default_str();
    cmd->add_option("--lr", lr)->capture_default_str();
    cmd->add_option("--warmup-fraction", warmup)->capture_default_str();
    cmd->add_option("--run-dir", run_dir, std::string("Output directory (default $") + kRunRootEnv + "/<name>)");
  };
  auto* train = app.add_subcommand("train", "Few- or zero-shot consistency training over several seeds");
  add_train_opts(train);
  train->add_option("--mode", mode)->check(CLI::IsMember({"few", "zero"}))->capture_default_str();
  train->add_flag("--include-org-pseudo", include_org, "Zero-shot: also train the original on its pseudo-label");
  auto* ablate = app.add_subcommand("ablate", "Warm-up-only vs full training, same seeds and splits");
  add_train_opts(ablate);

  // eval
  Common eval_common;
  std::string ckpt_path, test_path, dump_path;
  std::uint64_t eval_seed = 20230707;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled JSONL file");
  add_common(eval, eval_common);
  eval->add_option("--checkpoint", ckpt_path)->required();
  eval->add_option("--test", test_path, "Test JSONL (default <data>/test.jsonl)");
  eval->add_option("--seed", eval_seed, "Template sampling seed")->capture_default_str();
  eval->add_option("--dump-scores", dump_path, "Write per-instance scores as JSON lines");

  // predict
  Common pred_common;
  std::string claim, evidence, template_id;
  auto* predict = app.add_subcommand("predict", "Verdict, scores and variant consistency for one pair");
  add_common(predict, pred_common);
  predict->add_option("--checkpoint", ckpt_path)->required();
  predict->add_option("--claim", claim)->required();
  predict->add_option("--evidence", evidence)->required();
  predict->add_option("--template", template_id, "Template id (default: first in pool)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const Corpus corpus = generate_corpus(world_seed, sizes);
      write_corpus(gen_out, corpus, world_seed, sizes, builtin_templates());
      std::cout << "wrote " << corpus.pretrain.size() << " pretrain, " << corpus.train.size() << " train, "
                << corpus.test.size() << " test instances to " << gen_out << '\n';
      return 0;
    }

    if (*pre) {
      const RunConfig rc = load_run_config(pre_common.config);
      const Tokenizer tok = load_tokenizer(pre_common);
      const Prompter prompter(tok, rc.markers);
      const auto pool = template_pool(pre_common.templates.empty() ? rc.templates : pre_common.templates, rc.choices);
      const auto corpus = load_jsonl(fs::path(pre_common.data_dir) / "pretrain.jsonl");
      ModelConfig mc;
      mc.vocab_size = tok.vocab_size();
      Model model(mc, init_seed);
      const TrainLog log = pretrain(model, corpus, pre_cfg, prompter, pool);
      save_checkpoint(model, pre_out);
      if (auto* opt = pre->get_option("--log"); opt->count() > 0) log.write_csv(opt->as<std::string>());
      std::cout << "pretrained " << pre_cfg.total_steps << " steps, final lm loss "
                << (log.steps.empty() ? 0.0 : log.steps.back().loss.lm / pre_cfg.batch_size) << " -> " << pre_out
                << '\n';
      return 0;
    }

    if (*train || *ablate) {
      CLI::App* cmd = *train ? train : ablate;
      RunConfig rc = load_run_config(train_common.config);
      ExperimentConfig& ec = rc.experiment;
      auto given = [&](const char* flag) { return cmd->get_option(flag)->count() > 0 || train_common.config.empty(); };
      if (given("--steps")) ec.train.total_steps = steps;
      if (given("--batch")) ec.train.batch_size = batch;
      if (given("--lr")) ec.train.learning_rate = lr;
      if (given("--warmup-fraction")) ec.train.warmup_fraction = warmup;
      if (given("--k")) ec.k = k;
      if (given("--seeds")) {
        ec.seeds.clear();
        for (std::size_t s = 1; s <= n_seeds; ++s) ec.seeds.push_back(s);
      }
      ec.train.mode = (*train && mode == "zero") ? TrainMode::ZeroShot : TrainMode::FewShot;
      if (include_org) ec.train.include_org_pseudo = true;

      const Tokenizer tok = load_tokenizer(train_common);
      const Prompter prompter(tok, rc.markers);
      const auto pool =
          template_pool(train_common.templates.empty() ? rc.templates : train_common.templates, rc.choices);
      const Model base = load_checkpoint(base_path, tok.vocab_size());
      const auto train_pool = load_jsonl(fs::path(train_common.data_dir) / "train.jsonl");
      const auto test = load_jsonl(fs::path(train_common.data_dir) / "test.jsonl");

      if (*train) {
        const fs::path dir = run_directory(run_dir, std::string(to_string(ec.train.mode)) + "_k" + std::to_string(ec.k));
        const ExperimentSummary s = run_experiment(ec, base, prompter, pool, train_pool, test, dir);
        std::cout << s.to_json().dump(2) << '\n' << "artifacts in " << dir.string() << '\n';
      } else {
        const fs::path dir = run_directory(run_dir, "ablate_k" + std::to_string(ec.k));
        const AblationResult r = run_ablation(ec, base, prompter, pool, train_pool, test, dir);
        std::cout << r.table() << "artifacts in " << dir.string() << '\n';
      }
      return 0;
    }

    if (*eval) {
      const RunConfig rc = load_run_config(eval_common.config);
      const Tokenizer tok = load_tokenizer(eval_common);
      const Prompter prompter(tok, rc.markers);
      const auto pool = template_pool(eval_common.templates.empty() ? rc.templates : eval_common.templates, rc.choices);
      const Model model = load_checkpoint(ckpt_path, tok.vocab_size());
      const auto test = load_jsonl(test_path.empty() ? fs::path(eval_common.data_dir) / "test.jsonl" : fs::path(test_path));
      const Evaluation ev = evaluate(model, prompter, pool, test, eval_seed);
      if (!dump_path.empty()) {
        std::ofstream out(dump_path, std::ios::binary);
        for (const auto& p : ev.predictions) out << p.to_json().dump() << '\n';
      }
      EvalReport report = ev.report;
      report.seed = eval_seed;
      std::cout << report.to_json().dump(2) << '\n';
      return 0;
    }

    if (*predict) {
      const RunConfig rc = load_run_config(pred_common.config);
      const Tokenizer tok = load_tokenizer(pred_common);
      const Prompter prompter(tok, rc.markers);
      const auto pool = template_pool(pred_common.templates.empty() ? rc.templates : pred_common.templates, rc.choices);
      const PromptTemplate* tmpl = &pool.front();
      if (!template_id.empty()) {
        tmpl = nullptr;
        for (const auto& t : pool) {
          if (t.id == template_id) tmpl = &t;
        }
        if (!tmpl) throw std::runtime_error("unknown template id '" + template_id + "'");
      }
      const Model model = load_checkpoint(ckpt_path, tok.vocab_size());
      const Instance inst{"cli", claim, evidence, std::nullopt, "cli"};
      std::map<VariantRelation, Verdict> preds;
      for (VariantRelation r : kRelations) {
        const ClassScores s = class_scores(model, prompter, inst, *tmpl, r);
        preds[r] = rank_classify(s);
        if (r == VariantRelation::Original) {
          std::cout << "verdict: " << to_string(preds[r]) << "  (template " << tmpl->id << ")\n";
          print_scores(s);
        }
      }
      std::cout << "variants:\n";
      for (VariantRelation r : kRelations) std::cout << "  " << short_name(r) << ": " << to_string(preds[r]) << '\n';
      const ConsistencyCheck check = check_consistency(preds);
      std::cout << "consistent: " << (check.consistent ? "yes" : "no");
      for (VariantRelation r : check.violations) std::cout << " [" << short_name(r) << " violates]";
      std::cout << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
