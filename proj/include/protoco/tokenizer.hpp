#pragma once

#include "protoco/model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protoco {

// Lower-cased word-level tokenizer. A word is a run of letters, digits and
// apostrophes; every other non-space character is a token of its own.
class Tokenizer {
 public:
  static constexpr TokenId kUnkId = 0;
  static constexpr TokenId kBosId = Model::kBosId;

  Tokenizer();
  // Vocabulary of the special tokens plus every word of texts, sorted.
  static Tokenizer build(std::span<const std::string> texts);
  static Tokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  static std::vector<std::string> split(std::string_view text);

  TokenSequence encode(std::string_view text, SequenceRole role = SequenceRole::Input) const;
  std::string decode(std::span<const TokenId> ids) const;

  TokenId id_of(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int vocab_size() const { return static_cast<int>(tokens_.size()); }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace protoco
