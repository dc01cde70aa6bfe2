#include "protoco/data.hpp"

#include "protoco/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace protoco {

using json = nlohmann::json;

// ---- JSONL ----------------------------------------------------------------------

std::vector<Instance> parse_jsonl(std::istream& in, const std::string& source_name) {
  std::vector<Instance> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& what) -> DataError {
      return DataError(source_name + ":" + std::to_string(lineno) + ": " + what);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw fail(std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw fail("expected a JSON object");
    auto text_field = [&](const char* key, bool required) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end()) {
        if (required) throw fail(std::string("missing key '") + key + "'");
        return {};
      }
      if (it->is_number_integer()) return std::to_string(it->get<long long>());
      if (!it->is_string()) throw fail(std::string("key '") + key + "' must be a string");
      return it->get<std::string>();
    };
    Instance inst;
    inst.id = text_field("id", true);
    inst.claim = text_field("claim", true);
    inst.evidence = text_field("evidence", true);
    inst.domain = text_field("domain", false);
    if (inst.claim.empty()) throw fail("empty claim");
    if (inst.evidence.empty()) throw fail("empty evidence");
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw fail("label must be a string");
      const auto s = it->get<std::string>();
      inst.label = parse_verdict(s);
      if (!inst.label) throw fail("unknown label '" + s + "'");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_jsonl: cannot open " + path.string());
  return parse_jsonl(in, path.string());
}

void write_jsonl(const std::filesystem::path& path, std::span<const Instance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_jsonl: cannot write " + path.string());
  for (const auto& inst : instances) {
    json obj = json::object();
    obj["id"] = inst.id;
    obj["claim"] = inst.claim;
    obj["evidence"] = inst.evidence;
    if (inst.label) obj["label"] = std::string(fever_label(*inst.label));
    obj["domain"] = inst.domain;
    out << obj.dump() << '\n';
  }
}

// ---- samplers -----------------------------------------------------------------------

std::size_t count_label(std::span<const Instance> instances, Verdict v) {
  return static_cast<std::size_t>(
      std::count_if(instances.begin(), instances.end(), [v](const Instance& i) { return i.label == v; }));
}

std::vector<Instance> sample_k_shot(std::span<const Instance> instances, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw DataError("sample_k_shot: K must be positive");
  Rng rng(seed);
  std::vector<Instance> out;
  for (Verdict v : kVerdicts) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (instances[i].label == v) idx.push_back(i);
    }
    if (idx.size() < k) {
      throw DataError("sample_k_shot: class " + std::string(to_string(v)) + " has " + std::to_string(idx.size()) +
                      " labelled instances, need " + std::to_string(k));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < k; ++i) out.push_back(instances[idx[i]]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<UnlabeledInstance> sample_zero_shot(std::span<const Instance> instances, std::uint64_t seed,
                                                std::size_t per_class, ZeroShotSampling mode) {
  if (per_class == 0) throw DataError("sample_zero_shot: per_class must be positive");
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  if (mode == ZeroShotSampling::Uniform) {
    const std::size_t n = 3 * per_class;
    if (instances.size() < n) {
      throw DataError("sample_zero_shot: pool of " + std::to_string(instances.size()) + " is smaller than " +
                      std::to_string(n));
    }
    std::vector<std::size_t> idx(instances.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    for (Verdict v : kVerdicts) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].label == v) idx.push_back(i);
      }
      if (idx.size() < per_class) {
        throw DataError("sample_zero_shot: class " + std::string(to_string(v)) + " has only " +
                        std::to_string(idx.size()) + " instances");
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class));
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);
  }
  std::vector<UnlabeledInstance> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.emplace_back(instances[i]);
  return out;
}

// ---- synthetic world ----------------------------------------------------------------

namespace {

constexpr std::array<Relation, 4> kAllRelations = {Relation::LocatedIn, Relation::BornIn, Relation::InventedBy,
                                                   Relation::WorksFor};

template <typename T>
const T& choose(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::vector<std::string> make_names(std::size_t n, Rng& rng) {
  static const std::vector<std::string> onsets = {"b", "d", "f", "g", "k", "l",  "m",  "n",  "p",
                                                  "r", "s", "t", "v", "z", "br", "dr", "kr", "tr"};
  static const std::vector<std::string> vowels = {"a", "e", "i", "o", "u"};
  static const std::vector<std::string> codas = {"", "n", "r", "l", "s", "k"};
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    const int syllables = 2 + static_cast<int>(coin(rng, 0.3));
    for (int s = 0; s < syllables; ++s) w += choose(onsets, rng) + choose(vowels, rng) + choose(codas, rng);
    if (w.size() < 5 || !seen.insert(w).second) continue;
    w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

WorldModel::WorldModel(std::string domain, const EntityCounts& counts, std::span<const std::string> names, Rng& rng)
    : domain_(std::move(domain)) {
  const std::size_t needed = static_cast<std::size_t>(counts.cities + counts.countries + counts.persons +
                                                      counts.inventions + counts.companies);
  if (names.size() < needed) throw DataError("WorldModel: not enough entity names");
  if (counts.cities < 2 || counts.countries < 2 || counts.persons < 2 || counts.inventions < 1 ||
      counts.companies < 2) {
    throw DataError("WorldModel: every entity type needs at least two members (one invention)");
  }
  auto it = names.begin();
  auto take = [&](int n) {
    std::vector<std::string> v(it, it + n);
    it += n;
    return v;
  };
  cities_ = take(counts.cities);
  countries_ = take(counts.countries);
  persons_ = take(counts.persons);
  inventions_ = take(counts.inventions);
  companies_ = take(counts.companies);

  for (const auto& c : cities_) facts_.push_back({Relation::LocatedIn, c, choose(countries_, rng)});
  for (const auto& p : persons_) {
    facts_.push_back({Relation::BornIn, p, choose(cities_, rng)});
    facts_.push_back({Relation::WorksFor, p, choose(companies_, rng)});
  }
  for (const auto& i : inventions_) facts_.push_back({Relation::InventedBy, i, choose(persons_, rng)});
}

std::optional<std::string> WorldModel::true_object(Relation r, const std::string& subject) const {
  for (const auto& f : facts_) {
    if (f.relation == r && f.subject == subject) return f.object;
  }
  return std::nullopt;
}

const std::vector<std::string>& WorldModel::objects_for(Relation r) const {
  switch (r) {
    case Relation::LocatedIn: return countries_;
    case Relation::BornIn: return cities_;
    case Relation::InventedBy: return persons_;
    case Relation::WorksFor: return companies_;
  }
  throw DataError("objects_for: bad relation");
}

std::string WorldModel::evidence_text(const Fact& f) {
  switch (f.relation) {
    case Relation::LocatedIn: return f.subject + " is a city located in " + f.object;
    case Relation::BornIn: return f.subject + " was born in the city of " + f.object;
    case Relation::InventedBy: return "The " + f.subject + " was invented by " + f.object;
    case Relation::WorksFor: return f.subject + " works as an engineer at " + f.object;
  }
  return {};
}

std::string WorldModel::claim_text(const Fact& f, bool negated) {
  switch (f.relation) {
    case Relation::LocatedIn: return f.subject + (negated ? " is not in " : " is in ") + f.object;
    case Relation::BornIn: return f.subject + (negated ? " was not born in " : " was born in ") + f.object;
    case Relation::InventedBy: return f.object + (negated ? " did not invent the " : " invented the ") + f.subject;
    case Relation::WorksFor: return f.subject + (negated ? " does not work for " : " works for ") + f.object;
  }
  return {};
}

Instance WorldModel::make_instance(Verdict label, const std::string& id, Rng& rng) const {
  const Fact& fact = choose(facts_, rng);
  const auto& objects = objects_for(fact.relation);
  auto other_object = [&] {
    for (;;) {
      const std::string& o = choose(objects, rng);
      if (o != fact.object) return o;
    }
  };

  Instance inst;
  inst.id = id;
  inst.label = label;
  inst.domain = domain_;
  switch (label) {
    case Verdict::Support:
      inst.evidence = evidence_text(fact);
      if (coin(rng, 0.75)) {
        inst.claim = claim_text(fact, false);
      } else {
        inst.claim = claim_text({fact.relation, fact.subject, other_object()}, true);
      }
      break;
    case Verdict::Refute:
      inst.evidence = evidence_text(fact);
      if (coin(rng, 0.5)) {
        inst.claim = claim_text({fact.relation, fact.subject, other_object()}, false);
      } else {
        inst.claim = claim_text(fact, true);
      }
      break;
    case Verdict::Nei: {
      const std::string object = coin(rng, 0.5) ? fact.object : other_object();
      inst.claim = claim_text({fact.relation, fact.subject, object}, coin(rng, 0.25));
      // A true fact about a different (subject, relation) pair, which leaves
      // the claim undetermined.
      for (;;) {
        const Fact& other = choose(facts_, rng);
        if (other.subject == fact.subject && other.relation == fact.relation) continue;
        inst.evidence = evidence_text(other);
        break;
      }
      break;
    }
  }
  return inst;
}

// ---- rule oracle ----------------------------------------------------------------------

namespace {

struct Pattern {
  Relation relation;
  bool negated;
  std::vector<std::string> tokens;  // "S" and "O" are entity slots
};

std::vector<std::string> words(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::optional<ParsedStatement> match(const std::vector<Pattern>& patterns, const std::string& text) {
  const auto w = words(text);
  for (const auto& p : patterns) {
    if (p.tokens.size() != w.size()) continue;
    ParsedStatement s{p.relation, {}, {}, p.negated};
    bool ok = true;
    for (std::size_t i = 0; i < w.size() && ok; ++i) {
      if (p.tokens[i] == "S") {
        s.subject = w[i];
      } else if (p.tokens[i] == "O") {
        s.object = w[i];
      } else {
        ok = p.tokens[i] == w[i];
      }
    }
    if (ok) return s;
  }
  return std::nullopt;
}

}  // namespace

std::optional<ParsedStatement> parse_evidence(const std::string& text) {
  static const std::vector<Pattern> patterns = {
      {Relation::LocatedIn, false, words("S is a city located in O")},
      {Relation::BornIn, false, words("S was born in the city of O")},
      {Relation::InventedBy, false, words("The S was invented by O")},
      {Relation::WorksFor, false, words("S works as an engineer at O")},
  };
  return match(patterns, text);
}

std::optional<ParsedStatement> parse_claim(const std::string& text) {
  static const std::vector<Pattern> patterns = {
      {Relation::LocatedIn, false, words("S is in O")},
      {Relation::LocatedIn, true, words("S is not in O")},
      {Relation::BornIn, false, words("S was born in O")},
      {Relation::BornIn, true, words("S was not born in O")},
      {Relation::InventedBy, false, words("O invented the S")},
      {Relation::InventedBy, true, words("O did not invent the S")},
      {Relation::WorksFor, false, words("S works for O")},
      {Relation::WorksFor, true, words("S does not work for O")},
  };
  return match(patterns, text);
}

std::optional<Verdict> entailment_oracle(const Instance& instance) {
  const auto ev = parse_evidence(instance.evidence);
  const auto cl = parse_claim(instance.claim);
  if (!ev || !cl) return std::nullopt;
  if (ev->subject != cl->subject || ev->relation != cl->relation) return Verdict::Nei;
  // Every relation is functional, so a matching object decides the claim.
  const bool same_object = ev->object == cl->object;
  return same_object != cl->negated ? Verdict::Support : Verdict::Refute;
}

// ---- corpus ----------------------------------------------------------------------------

namespace {

std::vector<Instance> make_split(const WorldModel& world, const std::string& split, std::size_t per_class, Rng& rng) {
  std::vector<Instance> out;
  out.reserve(3 * per_class);
  for (Verdict v : kVerdicts) {
    for (std::size_t i = 0; i < per_class; ++i) out.push_back(world.make_instance(v, {}, rng));
  }
  std::shuffle(out.begin(), out.end(), rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = split + "-" + std::to_string(i);
  for (const auto& inst : out) {
    if (entailment_oracle(inst) != inst.label) {
      throw DataError("generate_corpus: oracle disagrees with constructed label on " + inst.id);
    }
  }
  return out;
}

}  // namespace

Corpus generate_corpus(std::uint64_t world_seed, const CorpusSizes& sizes, const EntityCounts& counts) {
  if (sizes.pretrain_per_class == 0 || sizes.train_per_class == 0 || sizes.test_per_class == 0) {
    throw DataError("generate_corpus: split sizes must be positive");
  }
  Rng rng(world_seed);
  const std::size_t per_domain = static_cast<std::size_t>(counts.cities + counts.countries + counts.persons +
                                                          counts.inventions + counts.companies);
  const auto names = make_names(2 * per_domain, rng);
  const std::span<const std::string> all(names);
  const WorldModel source("source", counts, all.subspan(0, per_domain), rng);
  const WorldModel target("target", counts, all.subspan(per_domain, per_domain), rng);

  Corpus c;
  c.pretrain = make_split(source, "pretrain", sizes.pretrain_per_class, rng);
  c.train = make_split(target, "train", sizes.train_per_class, rng);
  c.test = make_split(target, "test", sizes.test_per_class, rng);
  return c;
}

std::vector<std::string> corpus_texts(const Corpus& corpus) {
  std::vector<std::string> texts;
  for (const auto* split : {&corpus.pretrain, &corpus.train, &corpus.test}) {
    for (const auto& inst : *split) {
      texts.push_back(inst.claim);
      texts.push_back(inst.evidence);
    }
  }
  return texts;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, std::uint64_t world_seed,
                  const CorpusSizes& sizes, std::span<const PromptTemplate> pool, const MarkerWords& markers) {
  std::filesystem::create_directories(dir);
  write_jsonl(dir / "pretrain.jsonl", corpus.pretrain);
  write_jsonl(dir / "train.jsonl", corpus.train);
  write_jsonl(dir / "test.jsonl", corpus.test);

  auto texts = corpus_texts(corpus);
  const auto prompt_texts = prompt_vocabulary_texts(pool, markers);
  texts.insert(texts.end(), prompt_texts.begin(), prompt_texts.end());
  Tokenizer::build(texts).save(dir / "vocab.txt");

  json manifest = {
      {"world_seed", world_seed},
      {"sizes",
       {{"pretrain_per_class", sizes.pretrain_per_class},
        {"train_per_class", sizes.train_per_class},
        {"test_per_class", sizes.test_per_class}}},
      {"files", {"pretrain.jsonl", "train.jsonl", "test.jsonl", "vocab.txt"}},
  };
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

}  // namespace protoco
