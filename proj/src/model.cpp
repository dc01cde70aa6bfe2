#include "protoco/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace protoco {

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || max_seq_len <= 0) {
    throw std::invalid_argument("ModelConfig: sizes must be positive");
  }
  if (n_encoder_layers < 0 || n_decoder_layers < 0) {
    throw std::invalid_argument("ModelConfig: layer counts must be non-negative");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model) +
                                " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

// ---- ModelParameters ----------------------------------------------------------

const Tensor& ModelParameters::at(const std::string& name) const {
  if (auto it = base.find(name); it != base.end()) return it->second;
  if (auto it = ia3.find(name); it != ia3.end()) return it->second;
  throw std::out_of_range("ModelParameters: no parameter named '" + name + "'");
}

void ModelParameters::set_tuning_mode(TuningMode mode) {
  for (auto& [name, t] : base) t.set_requires_grad(mode == TuningMode::Full);
  for (auto& [name, t] : ia3) t.set_requires_grad(mode != TuningMode::Frozen);
}

std::map<std::string, bool> ModelParameters::trainable_flags() const {
  std::map<std::string, bool> flags;
  for (const auto& [name, t] : base) flags[name] = t.requires_grad();
  for (const auto& [name, t] : ia3) flags[name] = t.requires_grad();
  return flags;
}

std::vector<Tensor> ModelParameters::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : base) {
    if (t.requires_grad()) out.push_back(t);
  }
  for (const auto& [name, t] : ia3) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

void ModelParameters::zero_grad() {
  for (auto& [name, t] : base) t.zero_grad();
  for (auto& [name, t] : ia3) t.zero_grad();
}

ModelParameters ModelParameters::clone() const {
  ModelParameters out;
  for (const auto& [name, t] : base) out.base.emplace(name, Tensor(t.value(), t.requires_grad()));
  for (const auto& [name, t] : ia3) out.ia3.emplace(name, Tensor(t.value(), t.requires_grad()));
  return out;
}

ParameterCount count_parameters(const ModelParameters& params) {
  ParameterCount c;
  for (const auto& [name, t] : params.base) c.base += static_cast<std::size_t>(t.size());
  for (const auto& [name, t] : params.ia3) c.ia3 += static_cast<std::size_t>(t.size());
  return c;
}

std::size_t expected_ia3_count(const ModelConfig& c) {
  return static_cast<std::size_t>(c.n_encoder_layers) * (2 * c.d_model + c.d_ff) +
         static_cast<std::size_t>(c.n_decoder_layers) * (4 * c.d_model + c.d_ff);
}

Tensor apply_ia3(const Tensor& activations, const Tensor& vec) {
  if (vec.rows() != 1 || vec.cols() != activations.cols()) {
    throw TensorError("apply_ia3: vector " + shape_string(vec.shape()) + " does not match activations " +
                      shape_string(activations.shape()));
  }
  return mul(activations, vec);
}

// ---- construction -------------------------------------------------------------

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Index rows, Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
    return Tensor(std::move(m));
  }

 private:
  std::mt19937_64 rng_;
};

void add_attention(ModelParameters& p, Initializer& init, const std::string& prefix, int d) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (const char* w : {".q", ".k", ".v", ".o"}) p.base[prefix + w] = init.normal(d, d, s);
  p.ia3[prefix + ".l_k"] = Tensor::ones(1, d);
  p.ia3[prefix + ".l_v"] = Tensor::ones(1, d);
}

void add_norm(ModelParameters& p, const std::string& prefix, int d) {
  p.base[prefix + ".g"] = Tensor::ones(1, d);
  p.base[prefix + ".b"] = Tensor::zeros(1, d);
}

void add_ffn(ModelParameters& p, Initializer& init, const std::string& prefix, int d, int dff) {
  p.base[prefix + ".w1"] = init.normal(d, dff, 1.0 / std::sqrt(static_cast<double>(d)));
  p.base[prefix + ".b1"] = Tensor::zeros(1, dff);
  p.base[prefix + ".w2"] = init.normal(dff, d, 1.0 / std::sqrt(static_cast<double>(dff)));
  p.base[prefix + ".b2"] = Tensor::zeros(1, d);
  p.ia3[prefix + ".l_ff"] = Tensor::ones(1, dff);
}

std::string layer_prefix(const char* stack, int i) { return std::string(stack) + "." + std::to_string(i); }

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Initializer init(seed);
  const int d = config_.d_model;
  auto& p = params_;
  p.base["embed.token"] = init.normal(config_.vocab_size, d, 1.0);
  p.base["embed.enc_pos"] = init.normal(config_.max_seq_len, d, 0.5);
  p.base["embed.dec_pos"] = init.normal(config_.max_seq_len, d, 0.5);
  for (int i = 0; i < config_.n_encoder_layers; ++i) {
    const std::string pre = layer_prefix("enc", i);
    add_norm(p, pre + ".ln1", d);
    add_attention(p, init, pre + ".attn", d);
    add_norm(p, pre + ".ln2", d);
    add_ffn(p, init, pre + ".ffn", d, config_.d_ff);
  }
  add_norm(p, "enc.ln_f", d);
  for (int i = 0; i < config_.n_decoder_layers; ++i) {
    const std::string pre = layer_prefix("dec", i);
    add_norm(p, pre + ".ln1", d);
    add_attention(p, init, pre + ".self", d);
    add_norm(p, pre + ".ln2", d);
    add_attention(p, init, pre + ".cross", d);
    add_norm(p, pre + ".ln3", d);
    add_ffn(p, init, pre + ".ffn", d, config_.d_ff);
  }
  add_norm(p, "dec.ln_f", d);
  p.base["head.w"] = init.normal(d, config_.vocab_size, 1.0 / std::sqrt(static_cast<double>(d)));
  p.base["head.b"] = Tensor::zeros(1, config_.vocab_size);
  p.set_tuning_mode(TuningMode::Peft);
}

Model::Model(const ModelConfig& config, ModelParameters params) : config_(config), params_(std::move(params)) {
  config_.validate();
  // Structural check against a freshly built model of the same config.
  ModelConfig probe = config_;
  const Model reference(probe, 0);
  auto check = [](const std::map<std::string, Tensor>& want, const std::map<std::string, Tensor>& got,
                  const char* group) {
    if (want.size() != got.size()) {
      throw std::invalid_argument(std::string("Model: expected ") + std::to_string(want.size()) + " " + group +
                                  " tensors, got " + std::to_string(got.size()));
    }
    for (const auto& [name, t] : want) {
      auto it = got.find(name);
      if (it == got.end()) throw std::invalid_argument("Model: missing parameter '" + name + "'");
      if (it->second.shape() != t.shape()) {
        throw std::invalid_argument("Model: parameter '" + name + "' has shape " +
                                    shape_string(it->second.shape()) + ", expected " + shape_string(t.shape()));
      }
    }
  };
  check(reference.params_.base, params_.base, "base");
  check(reference.params_.ia3, params_.ia3, "ia3");
}

// ---- forward --------------------------------------------------------------------

void Model::check_sequence(std::span<const TokenId> ids, const char* what) const {
  if (ids.empty()) throw std::invalid_argument(std::string("Model: empty ") + what + " sequence");
  if (static_cast<int>(ids.size()) > config_.max_seq_len) {
    throw std::invalid_argument(std::string("Model: ") + what + " sequence of length " +
                                std::to_string(ids.size()) + " exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  }
  for (TokenId id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw std::invalid_argument(std::string("Model: token id ") + std::to_string(id) + " in " + what +
                                  " outside vocabulary of " + std::to_string(config_.vocab_size));
    }
  }
}

Tensor Model::norm(const std::string& prefix, const Tensor& x) const {
  return layer_norm(x, params_.at(prefix + ".g"), params_.at(prefix + ".b"));
}

Tensor Model::attention(const std::string& prefix, const Tensor& queries_in, const Tensor& kv_in,
                        bool causal) const {
  const int d = config_.d_model;
  const int dk = d / config_.n_heads;
  const Tensor q = matmul(queries_in, params_.at(prefix + ".q"));
  const Tensor k = apply_ia3(matmul(kv_in, params_.at(prefix + ".k")), params_.at(prefix + ".l_k"));
  const Tensor v = apply_ia3(matmul(kv_in, params_.at(prefix + ".v")), params_.at(prefix + ".l_v"));

  Tensor mask;
  if (causal) {
    Matrix m = Matrix::Zero(q.rows(), k.rows());
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = i + 1; j < m.cols(); ++j) m(i, j) = -1e9;
    }
    mask = Tensor(std::move(m));
  }

  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(config_.n_heads));
  for (int h = 0; h < config_.n_heads; ++h) {
    const Tensor qh = slice(q, 1, h * dk, dk);
    const Tensor kh = slice(k, 1, h * dk, dk);
    const Tensor vh = slice(v, 1, h * dk, dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    if (causal) scores = add(scores, mask);
    heads.push_back(matmul(softmax(scores), vh));
  }
  return matmul(concat(heads, 1), params_.at(prefix + ".o"));
}

Tensor Model::feed_forward(const std::string& prefix, const Tensor& x) const {
  Tensor hidden = relu(add(matmul(x, params_.at(prefix + ".w1")), params_.at(prefix + ".b1")));
  hidden = apply_ia3(hidden, params_.at(prefix + ".l_ff"));
  return add(matmul(hidden, params_.at(prefix + ".w2")), params_.at(prefix + ".b2"));
}

Tensor Model::encode(std::span<const TokenId> input) const {
  check_sequence(input, "input");
  const auto n = static_cast<Index>(input.size());
  Tensor x = add(embedding_lookup(params_.at("embed.token"), input),
                 slice(params_.at("embed.enc_pos"), 0, 0, n));
  for (int i = 0; i < config_.n_encoder_layers; ++i) {
    const std::string pre = layer_prefix("enc", i);
    const Tensor h = norm(pre + ".ln1", x);
    x = add(x, attention(pre + ".attn", h, h, false));
    x = add(x, feed_forward(pre + ".ffn", norm(pre + ".ln2", x)));
  }
  return norm("enc.ln_f", x);
}

Tensor Model::decoder_log_distributions(const Tensor& memory, std::span<const TokenId> target) const {
  check_sequence(target, "target");
  const auto n = static_cast<Index>(target.size());
  std::vector<TokenId> shifted;
  shifted.reserve(target.size());
  shifted.push_back(kBosId);
  shifted.insert(shifted.end(), target.begin(), target.end() - 1);

  Tensor x = add(embedding_lookup(params_.at("embed.token"), shifted),
                 slice(params_.at("embed.dec_pos"), 0, 0, n));
  for (int i = 0; i < config_.n_decoder_layers; ++i) {
    const std::string pre = layer_prefix("dec", i);
    const Tensor h = norm(pre + ".ln1", x);
    x = add(x, attention(pre + ".self", h, h, true));
    x = add(x, attention(pre + ".cross", norm(pre + ".ln2", x), memory, false));
    x = add(x, feed_forward(pre + ".ffn", norm(pre + ".ln3", x)));
  }
  x = norm("dec.ln_f", x);
  const Tensor logits = add(matmul(x, params_.at("head.w")), params_.at("head.b"));
  return log_softmax(logits);
}

Tensor Model::target_logprobs(const Tensor& memory, std::span<const TokenId> target) const {
  return pick(decoder_log_distributions(memory, target), target);
}

Tensor Model::target_logprobs(const TokenSequence& input, const TokenSequence& target) const {
  return target_logprobs(encode(input.ids), target.ids);
}

ParameterCount Model::count_parameters() const { return protoco::count_parameters(params_); }

std::vector<double> forward_token_logprobs(const Model& model, const TokenSequence& input,
                                           const TokenSequence& target) {
  NoGradGuard no_grad;
  const Tensor lp = model.target_logprobs(input, target);
  std::vector<double> out(static_cast<std::size_t>(lp.rows()));
  for (Index i = 0; i < lp.rows(); ++i) out[static_cast<std::size_t>(i)] = lp(i, 0);
  return out;
}

}  // namespace protoco
