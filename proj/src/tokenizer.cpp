#include "protoco/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

namespace protoco {

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '\'' || c >= 0x80; }

}  // namespace

Tokenizer::Tokenizer() {
  add("<unk>");
  add("<bos>");
}

void Tokenizer::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(token);
}

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) != 0) {
      flush();
    } else if (is_word_char(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      out.emplace_back(1, ch);
    }
  }
  flush();
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : split(t)) words.insert(std::move(w));
  }
  Tokenizer tok;
  for (const auto& w : words) tok.add(w);
  return tok;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Tokenizer: cannot open " + path.string());
  Tokenizer tok;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 2 || lines[0] != "<unk>" || lines[1] != "<bos>") {
    throw std::runtime_error("Tokenizer: " + path.string() + " does not start with <unk>, <bos>");
  }
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (tok.index_.contains(lines[i])) {
      throw std::runtime_error("Tokenizer: duplicate token '" + lines[i] + "' on line " + std::to_string(i + 1));
    }
    tok.add(lines[i]);
  }
  return tok;
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("Tokenizer: cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Tokenizer::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

TokenSequence Tokenizer::encode(std::string_view text, SequenceRole role) const {
  TokenSequence seq;
  seq.role = role;
  for (const auto& w : split(text)) seq.ids.push_back(id_of(w));
  return seq;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

}  // namespace protoco
