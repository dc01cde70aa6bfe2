#pragma once

#include "protoco/tensor.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace protoco {

using TokenId = int;

enum class SequenceRole { Input, Target };

struct TokenSequence {
  std::vector<TokenId> ids;
  SequenceRole role = SequenceRole::Input;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  int n_encoder_layers = 2;
  int n_decoder_layers = 2;
  int max_seq_len = 64;

  // Throws std::invalid_argument on a non-positive size or d_model % n_heads != 0.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class TuningMode {
  Frozen,  // nothing trainable
  Peft,    // only (IA)^3 vectors trainable
  Full,    // base weights and (IA)^3 vectors trainable
};

// Base weights plus the learned (IA)^3 rescaling vectors, keyed by name.
// Names are stable and sorted; they double as checkpoint keys.
class ModelParameters {
 public:
  std::map<std::string, Tensor> base;
  std::map<std::string, Tensor> ia3;

  const Tensor& at(const std::string& name) const;
  bool is_ia3(const std::string& name) const { return ia3.contains(name); }

  void set_tuning_mode(TuningMode mode);
  std::map<std::string, bool> trainable_flags() const;
  std::vector<Tensor> trainable() const;
  void zero_grad();

  // Deep copy; the result shares no storage with *this.
  ModelParameters clone() const;
};

struct ParameterCount {
  std::size_t base = 0;
  std::size_t ia3 = 0;
  double ia3_fraction() const {
    return base + ia3 == 0 ? 0.0 : static_cast<double>(ia3) / static_cast<double>(base + ia3);
  }
};

// Closed-form (IA)^3 size: n_enc (2 d_model + d_ff) + n_dec (4 d_model + d_ff).
std::size_t expected_ia3_count(const ModelConfig& config);

// Elementwise rescale of every row of activations by vec (1 x features).
Tensor apply_ia3(const Tensor& activations, const Tensor& vec);

// Encoder-decoder transformer with pre-norm residual blocks, learned absolute
// positions and a ReLU feed-forward. (IA)^3 vectors rescale attention keys and
// values after projection and the FFN hidden activation before the output
// projection, in encoder self-attention and in decoder self- and
// cross-attention.
class Model {
 public:
  static constexpr TokenId kBosId = 1;

  Model() = default;
  // Random base weights drawn from seed; (IA)^3 vectors all ones; Peft mode.
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const ModelConfig& config, ModelParameters params);

  const ModelConfig& config() const { return config_; }
  const ModelParameters& params() const { return params_; }
  ModelParameters& params() { return params_; }

  // d_model-wide encoder memory, one row per input token.
  Tensor encode(std::span<const TokenId> input) const;
  // Teacher-forced log p(t_j | x, t_<j), one row per target token.
  Tensor target_logprobs(const Tensor& memory, std::span<const TokenId> target) const;
  Tensor target_logprobs(const TokenSequence& input, const TokenSequence& target) const;

  // Full next-token log distributions under teacher forcing, |target| x vocab.
  Tensor decoder_log_distributions(const Tensor& memory, std::span<const TokenId> target) const;

  ParameterCount count_parameters() const;

  Model clone() const { return Model(config_, params_.clone()); }

 private:
  Tensor attention(const std::string& prefix, const Tensor& queries_in, const Tensor& kv_in,
                   bool causal) const;
  Tensor feed_forward(const std::string& prefix, const Tensor& x) const;
  Tensor norm(const std::string& prefix, const Tensor& x) const;
  void check_sequence(std::span<const TokenId> ids, const char* what) const;

  ModelConfig config_;
  ModelParameters params_;
};

// Teacher-forced per-position log-probabilities as plain values.
std::vector<double> forward_token_logprobs(const Model& model, const TokenSequence& input,
                                           const TokenSequence& target);

ParameterCount count_parameters(const ModelParameters& params);

}  // namespace protoco
