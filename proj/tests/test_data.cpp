#include "doctest.h"
#include "support.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace protoco;
namespace fs = std::filesystem;

namespace {

template <typename T>
concept HasLabelField = requires(const T& t) { t.label; };
template <typename T>
concept HasLabelAccessor = requires(const T& t) { t.label(); };

std::vector<Instance> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_jsonl(in, "mem.jsonl");
}

std::string parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const Corpus& corpus() {
  static const Corpus c = generate_corpus(7, CorpusSizes{});
  return c;
}

std::set<std::string> ids_of(const std::vector<Instance>& v) {
  std::set<std::string> out;
  for (const auto& i : v) out.insert(i.id);
  return out;
}

}  // namespace

TEST_CASE("JSONL schema mapping") {
  const auto v = parse(R"({"id":"1","claim":"c","evidence":"e","label":"SUPPORTS"})"
                       "\n"
                       R"({"id":2,"claim":"c2","evidence":"e2"})"
                       "\n\n"
                       R"({"id":"3","claim":"c3","evidence":"e3","label":"NOT ENOUGH INFO","domain":"x"})");
  REQUIRE(v.size() == 3);
  CHECK(v[0].label == Verdict::Support);
  CHECK(v[0].claim == "c");
  CHECK(v[1].id == "2");
  CHECK_FALSE(v[1].label.has_value());
  CHECK(v[2].label == Verdict::Nei);
  CHECK(v[2].domain == "x");
  CHECK(parse(R"({"id":"r","claim":"c","evidence":"e","label":"REFUTES"})")[0].label == Verdict::Refute);
}

TEST_CASE("JSONL errors carry the line number") {
  CHECK(parse_error(R"({"id":"1","claim":"c","evidence":"e","label":"MAYBE"})") ==
        "mem.jsonl:1: unknown label 'MAYBE'");
  CHECK(parse_error("{\"id\":\"1\",\"claim\":\"c\",\"evidence\":\"e\"}\n{oops").starts_with("mem.jsonl:2: malformed JSON"));
  CHECK(parse_error(R"({"id":"1","claim":"","evidence":"e"})") == "mem.jsonl:1: empty claim");
  CHECK(parse_error(R"({"id":"1","claim":"c","evidence":""})") == "mem.jsonl:1: empty evidence");
  CHECK(parse_error(R"({"id":"1","evidence":"e"})") == "mem.jsonl:1: missing key 'claim'");
  CHECK_THROWS_AS(load_jsonl("/nonexistent/file.jsonl"), DataError);
}

TEST_CASE("JSONL round trip") {
  const auto path = fs::temp_directory_path() / "protoco_roundtrip.jsonl";
  auto sample = protoco::testing::toy_instances();
  sample[1].label.reset();
  sample[2].claim = "Unicode \xc3\xa9t\xc3\xa9 \"quoted\"";
  write_jsonl(path, sample);
  CHECK(load_jsonl(path) == sample);
  fs::remove(path);
}

TEST_CASE("k-shot sampling") {
  const auto& train = corpus().train;
  for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
    const auto s = sample_k_shot(train, k, 1);
    CHECK(s.size() == 3 * k);
    for (Verdict v : kVerdicts) CHECK(count_label(s, v) == k);
    CHECK(ids_of(s).size() == 3 * k);
  }
  CHECK(ids_of(sample_k_shot(train, 4, 1)) == ids_of(sample_k_shot(train, 4, 1)));
  int differing = 0;
  const auto first = ids_of(sample_k_shot(train, 4, 1));
  for (std::uint64_t seed : {2u, 3u, 4u}) differing += ids_of(sample_k_shot(train, 4, seed)) != first;
  CHECK(differing >= 2);

  try {
    sample_k_shot(std::vector<Instance>{train[0]}, 1, 1);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("class") != std::string::npos);
  }
}

TEST_CASE("zero-shot sampling") {
  const auto& train = corpus().train;
  const auto z = sample_zero_shot(train, 1);
  CHECK(z.size() == 90);
  std::set<std::string> ids;
  for (const auto& u : z) ids.insert(u.id());
  CHECK(ids.size() == 90);
  static_assert(HasLabelField<Instance>);
  static_assert(!HasLabelField<UnlabeledInstance>);
  static_assert(!HasLabelAccessor<UnlabeledInstance>);

  const auto per_class = sample_zero_shot(train, 1, 30, ZeroShotSampling::PerClass);
  CHECK(per_class.size() == 90);
  std::map<std::string, Verdict> gold;
  for (const auto& i : train) gold[i.id] = *i.label;
  std::map<Verdict, int> counts;
  for (const auto& u : per_class) ++counts[gold.at(u.id())];
  for (Verdict v : kVerdicts) CHECK(counts[v] == 30);

  const std::vector<Instance> ninety(train.begin(), train.begin() + 90);
  const auto whole = sample_zero_shot(ninety, 5);
  std::set<std::string> got;
  for (const auto& u : whole) got.insert(u.id());
  CHECK(got == ids_of(ninety));
  CHECK_THROWS_AS(sample_zero_shot(std::vector<Instance>(train.begin(), train.begin() + 50), 1), DataError);
}

TEST_CASE("generated corpus is balanced and split by domain") {
  const Corpus& c = corpus();
  CHECK(c.pretrain.size() == 3000);
  CHECK(c.train.size() == 600);
  CHECK(c.test.size() == 900);
  for (Verdict v : kVerdicts) {
    CHECK(count_label(c.test, v) == 300);
    CHECK(count_label(c.train, v) == 200);
    CHECK(count_label(c.pretrain, v) == 1000);
  }
  std::set<std::string> source_subjects, target_subjects;
  for (const auto& i : c.pretrain) source_subjects.insert(parse_claim(i.claim)->subject);
  for (const auto& i : c.test) target_subjects.insert(parse_claim(i.claim)->subject);
  for (const auto& s : target_subjects) CHECK_FALSE(source_subjects.contains(s));
  CHECK(ids_of(c.train).size() == c.train.size());
  for (const auto& id : ids_of(c.test)) CHECK_FALSE(ids_of(c.train).contains(id));
}

TEST_CASE("rule oracle agrees with every generated label") {
  std::size_t checked = 0;
  for (const auto* split : {&corpus().pretrain, &corpus().train, &corpus().test}) {
    for (const auto& inst : *split) {
      const auto verdict = entailment_oracle(inst);
      REQUIRE(verdict.has_value());
      CHECK(*verdict == *inst.label);
      ++checked;
    }
  }
  CHECK(checked == 4500);
}

TEST_CASE("oracle on hand-written pairs") {
  Instance i{"x", "", "", std::nullopt, "demo"};
  const Fact f{Relation::LocatedIn, "Velora", "Tamsk"};
  i.evidence = WorldModel::evidence_text(f);
  i.claim = WorldModel::claim_text(f, false);
  CHECK(entailment_oracle(i) == Verdict::Support);
  i.claim = WorldModel::claim_text(f, true);
  CHECK(entailment_oracle(i) == Verdict::Refute);
  i.claim = WorldModel::claim_text({Relation::LocatedIn, "Velora", "Brund"}, false);
  CHECK(entailment_oracle(i) == Verdict::Refute);
  i.claim = WorldModel::claim_text({Relation::LocatedIn, "Velora", "Brund"}, true);
  CHECK(entailment_oracle(i) == Verdict::Support);
  i.claim = WorldModel::claim_text({Relation::BornIn, "Ada", "Velora"}, false);
  CHECK(entailment_oracle(i) == Verdict::Nei);
  i.claim = "Something unrelated entirely";
  CHECK_FALSE(entailment_oracle(i).has_value());
}

TEST_CASE("same world seed, byte-identical corpus files") {
  const auto a = fs::temp_directory_path() / "protoco_corpus_a";
  const auto b = fs::temp_directory_path() / "protoco_corpus_b";
  const CorpusSizes sizes{50, 20, 30};
  const auto pool = builtin_templates();
  write_corpus(a, generate_corpus(3, sizes), 3, sizes, pool);
  write_corpus(b, generate_corpus(3, sizes), 3, sizes, pool);
  for (const char* f : {"pretrain.jsonl", "train.jsonl", "test.jsonl", "vocab.txt", "manifest.json"}) {
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(load_jsonl(a / "test.jsonl") == generate_corpus(3, sizes).test);
  fs::remove_all(a);
  fs::remove_all(b);
}
