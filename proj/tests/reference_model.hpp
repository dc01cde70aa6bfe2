#pragma once

// Scalar-loop forward pass of the encoder-decoder, written without the
// tensor library so it can serve as an independent oracle for the
// autodiff-based model. Deliberately naive.

#include "protoco/model.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace protoco::testing {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const Matrix& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  }
  return g;
}

class ReferenceModel {
 public:
  // With use_ia3 false the rescaling vectors are ignored, giving the plain
  // base transformer.
  explicit ReferenceModel(const Model& m, bool use_ia3 = true) : cfg_(m.config()) {
    for (const auto& [name, t] : m.params().base) p_[name] = to_grid(t.value());
    for (const auto& [name, t] : m.params().ia3) {
      p_[name] = use_ia3 ? to_grid(t.value()) : to_grid(Matrix::Ones(t.rows(), t.cols()));
    }
  }

  // log p(t_j | x, t_<j) for every target position.
  std::vector<double> token_logprobs(const std::vector<int>& input, const std::vector<int>& target) const {
    const Grid memory = encode(input);
    std::vector<int> shifted{Model::kBosId};
    for (std::size_t i = 0; i + 1 < target.size(); ++i) shifted.push_back(target[i]);
    Grid x = embed(shifted, "embed.dec_pos");
    for (int l = 0; l < cfg_.n_decoder_layers; ++l) {
      const std::string pre = "dec." + std::to_string(l);
      Grid h = norm(x, pre + ".ln1");
      x = plus(x, attention(h, h, pre + ".self", true));
      h = norm(x, pre + ".ln2");
      x = plus(x, attention(h, memory, pre + ".cross", false));
      x = plus(x, ffn(norm(x, pre + ".ln3"), pre + ".ffn"));
    }
    x = norm(x, "dec.ln_f");
    const Grid& w = p_.at("head.w");
    const Grid& b = p_.at("head.b");
    std::vector<double> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::vector<double> logits(static_cast<std::size_t>(cfg_.vocab_size));
      for (std::size_t v = 0; v < logits.size(); ++v) {
        double s = b[0][v];
        for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * w[k][v];
        logits[v] = s;
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l);
      out.push_back(logits[static_cast<std::size_t>(target[i])] - std::log(z));
    }
    return out;
  }

 private:
  Grid embed(const std::vector<int>& ids, const std::string& pos) const {
    const Grid& e = p_.at("embed.token");
    const Grid& p = p_.at(pos);
    Grid x;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<double> row(e[0].size());
      for (std::size_t k = 0; k < row.size(); ++k) row[k] = e[static_cast<std::size_t>(ids[i])][k] + p[i][k];
      x.push_back(row);
    }
    return x;
  }

  Grid encode(const std::vector<int>& ids) const {
    Grid x = embed(ids, "embed.enc_pos");
    for (int l = 0; l < cfg_.n_encoder_layers; ++l) {
      const std::string pre = "enc." + std::to_string(l);
      const Grid h = norm(x, pre + ".ln1");
      x = plus(x, attention(h, h, pre + ".attn", false));
      x = plus(x, ffn(norm(x, pre + ".ln2"), pre + ".ffn"));
    }
    return norm(x, "enc.ln_f");
  }

  static Grid plus(const Grid& a, const Grid& b) {
    Grid c = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t k = 0; k < a[i].size(); ++k) c[i][k] += b[i][k];
    }
    return c;
  }

  static Grid matmul(const Grid& a, const Grid& b) {
    Grid c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < b[0].size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
        c[i][j] = s;
      }
    }
    return c;
  }

  Grid norm(const Grid& x, const std::string& prefix) const {
    const Grid& g = p_.at(prefix + ".g");
    const Grid& b = p_.at(prefix + ".b");
    Grid y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = static_cast<double>(x[i].size());
      double mu = 0.0;
      for (double v : x[i]) mu += v;
      mu /= n;
      double var = 0.0;
      for (double v : x[i]) var += (v - mu) * (v - mu);
      var /= n;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        y[i][k] = (x[i][k] - mu) / std::sqrt(var + 1e-5) * g[0][k] + b[0][k];
      }
    }
    return y;
  }

  Grid attention(const Grid& qin, const Grid& kvin, const std::string& prefix, bool causal) const {
    Grid q = matmul(qin, p_.at(prefix + ".q"));
    Grid k = matmul(kvin, p_.at(prefix + ".k"));
    Grid v = matmul(kvin, p_.at(prefix + ".v"));
    const auto& lk = p_.at(prefix + ".l_k")[0];
    const auto& lv = p_.at(prefix + ".l_v")[0];
    for (auto& row : k) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] *= lk[c];
    }
    for (auto& row : v) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] *= lv[c];
    }
    const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
    const std::size_t dk = d / static_cast<std::size_t>(cfg_.n_heads);
    Grid out(q.size(), std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < static_cast<std::size_t>(cfg_.n_heads); ++h) {
      for (std::size_t i = 0; i < q.size(); ++i) {
        const std::size_t visible = causal ? i + 1 : k.size();
        std::vector<double> w(visible);
        double m = -1e300;
        for (std::size_t j = 0; j < visible; ++j) {
          double s = 0.0;
          for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) s += q[i][c] * k[j][c];
          w[j] = s / std::sqrt(static_cast<double>(dk));
          m = std::max(m, w[j]);
        }
        double z = 0.0;
        for (double& x : w) z += (x = std::exp(x - m));
        for (std::size_t j = 0; j < visible; ++j) {
          for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) out[i][c] += w[j] / z * v[j][c];
        }
      }
    }
    return matmul(out, p_.at(prefix + ".o"));
  }

  Grid ffn(const Grid& x, const std::string& prefix) const {
    Grid h = matmul(x, p_.at(prefix + ".w1"));
    const auto& b1 = p_.at(prefix + ".b1")[0];
    const auto& l = p_.at(prefix + ".l_ff")[0];
    for (auto& row : h) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = std::max(0.0, row[c] + b1[c]) * l[c];
    }
    Grid y = matmul(h, p_.at(prefix + ".w2"));
    const auto& b2 = p_.at(prefix + ".b2")[0];
    for (auto& row : y) {
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b2[c];
    }
    return y;
  }

  ModelConfig cfg_;
  std::map<std::string, Grid> p_;
};

}  // namespace protoco::testing
