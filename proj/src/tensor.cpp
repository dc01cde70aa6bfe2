#include "protoco/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace protoco {

namespace detail {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

}  // namespace detail

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

void check_finite(const char* op, const Matrix& m) {
  if (!m.allFinite()) {
    throw TensorError(std::string(op) + ": non-finite value in output");
  }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw TensorError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
}

bool wants_grad(std::initializer_list<const Tensor*> ts) {
  if (!Tape::current().enabled()) return false;
  return std::any_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->requires_grad(); });
}

// Builds the output tensor, checks it, and records the backward rule when any
// input needs a gradient.
Tensor make_result(const char* op, Matrix value, std::initializer_list<const Tensor*> inputs,
                   const std::function<Tape::BackwardFn(const NodePtr& out)>& make_backward) {
  check_finite(op, value);
  const bool track = wants_grad(inputs);
  Tensor out(std::move(value), track);
  if (track) {
    std::vector<NodePtr> nodes;
    nodes.reserve(inputs.size());
    for (const Tensor* t : inputs) nodes.push_back(t->node());
    Tape::current().record(op, std::move(nodes), out.node(), make_backward(out.node()));
  }
  return out;
}

enum class Broadcast { None, Row };

Broadcast binary_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  shape_error(op, a, b);
}

Matrix reduce_to(const Matrix& g, Broadcast bc) {
  if (bc == Broadcast::None) return g;
  return g.colwise().sum();
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::ones(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Ones(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Matrix::Constant(1, 1, v), requires_grad);
}

Tensor Tensor::row(std::span<const double> values, bool requires_grad) {
  Matrix m(1, static_cast<Index>(values.size()));
  for (Index i = 0; i < m.cols(); ++i) m(0, i) = values[static_cast<std::size_t>(i)];
  return Tensor(std::move(m), requires_grad);
}

Matrix Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

double Tensor::item() const {
  if (size() != 1) throw TensorError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value(0, 0);
}

Tensor Tensor::detach() const { return Tensor(node_->value, false); }

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << "[" << s[0] << " x " << s[1] << "]";
  return os.str();
}

// ---- Tape -------------------------------------------------------------------

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
                  const std::shared_ptr<detail::Node>& output, BackwardFn fn) {
  entries_.push_back(Entry{op, std::move(inputs), output, std::move(fn)});
}

void Tape::reset() {
  entries_.clear();
  replayed_ = false;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw TensorError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  }
  if (replayed_) throw TensorError("backward: tape already replayed; reset before reuse");
  if (!loss.requires_grad()) throw TensorError("backward: loss is not on the tape");

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.size() == 0) continue;
    it->backward(it->output->grad);
  }
  replayed_ = true;
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

// ---- ops --------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = binary_shape("add", a, b);
  Matrix v = a.value();
  if (bc == Broadcast::None) {
    v += b.value();
  } else {
    v.rowwise() += b.value().row(0);
  }
  return make_result("add", std::move(v), {&a, &b}, [=](const NodePtr&) {
    return [an = a.node(), bn = b.node(), bc](const Matrix& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(reduce_to(g, bc));
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast bc = binary_shape("sub", a, b);
  Matrix v = a.value();
  if (bc == Broadcast::None) {
    v -= b.value();
  } else {
    v.rowwise() -= b.value().row(0);
  }
  return make_result("sub", std::move(v), {&a, &b}, [=](const NodePtr&) {
    return [an = a.node(), bn = b.node(), bc](const Matrix& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(-reduce_to(g, bc));
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = binary_shape("mul", a, b);
  Matrix v = a.value();
  if (bc == Broadcast::None) {
    v.array() *= b.value().array();
  } else {
    v.array().rowwise() *= b.value().row(0).array();
  }
  return make_result("mul", std::move(v), {&a, &b}, [=](const NodePtr&) {
    return [an = a.node(), bn = b.node(), bc](const Matrix& g) {
      if (an->requires_grad) {
        Matrix ga = g;
        if (bc == Broadcast::None) {
          ga.array() *= bn->value.array();
        } else {
          ga.array().rowwise() *= bn->value.row(0).array();
        }
        an->accumulate(ga);
      }
      if (bn->requires_grad) {
        Matrix gb = g.cwiseProduct(an->value);
        bn->accumulate(reduce_to(gb, bc));
      }
    };
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result("scale", a.value() * s, {&a}, [&](const NodePtr&) {
    return [an = a.node(), s](const Matrix& g) { an->accumulate(g * s); };
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return make_result("add_scalar", a.value().array() + s, {&a}, [&](const NodePtr&) {
    return [an = a.node()](const Matrix& g) { an->accumulate(g); };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix v = a.value() * b.value();
  return make_result("matmul", std::move(v), {&a, &b}, [&](const NodePtr&) {
    return [an = a.node(), bn = b.node()](const Matrix& g) {
      if (an->requires_grad) an->accumulate(g * bn->value.transpose());
      if (bn->requires_grad) bn->accumulate(an->value.transpose() * g);
    };
  });
}

Tensor transpose(const Tensor& a) {
  return make_result("transpose", a.value().transpose(), {&a}, [&](const NodePtr&) {
    return [an = a.node()](const Matrix& g) { an->accumulate(g.transpose()); };
  });
}

Tensor relu(const Tensor& a) {
  return make_result("relu", a.value().cwiseMax(0.0), {&a}, [&](const NodePtr&) {
    return [an = a.node()](const Matrix& g) {
      an->accumulate((an->value.array() > 0.0).select(g, 0.0));
    };
  });
}

Tensor exp(const Tensor& a) {
  return make_result("exp", a.value().array().exp(), {&a}, [&](const NodePtr& out) {
    return [an = a.node(), out](const Matrix& g) { an->accumulate(g.cwiseProduct(out->value)); };
  });
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw TensorError("log: non-positive input");
  return make_result("log", a.value().array().log(), {&a}, [&](const NodePtr&) {
    return [an = a.node()](const Matrix& g) { an->accumulate(g.cwiseQuotient(an->value)); };
  });
}

Tensor log1m(const Tensor& p, std::size_t* clamp_count) {
  constexpr double kMax = 1.0 - 1e-12;
  Matrix clamped = p.value();
  Matrix pass = Matrix::Ones(p.rows(), p.cols());
  for (Index i = 0; i < clamped.size(); ++i) {
    double& x = clamped.data()[i];
    if (x > kMax) {
      x = kMax;
      pass.data()[i] = 0.0;
      if (clamp_count) ++*clamp_count;
    }
  }
  Matrix v = (1.0 - clamped.array()).log();
  return make_result("log1m", std::move(v), {&p}, [&](const NodePtr&) {
    return [pn = p.node(), clamped = std::move(clamped), pass = std::move(pass)](const Matrix& g) {
      Matrix d = -(g.array() / (1.0 - clamped.array())) * pass.array();
      pn->accumulate(d);
    };
  });
}

Tensor softmax(const Tensor& a) {
  Matrix v = a.value();
  for (Index r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
  return make_result("softmax", std::move(v), {&a}, [&](const NodePtr& out) {
    return [an = a.node(), out](const Matrix& g) {
      const Matrix& y = out->value;
      Matrix d(y.rows(), y.cols());
      for (Index r = 0; r < y.rows(); ++r) {
        const double dot = g.row(r).dot(y.row(r));
        d.row(r) = y.row(r).array() * (g.row(r).array() - dot);
      }
      an->accumulate(d);
    };
  });
}

Tensor log_softmax(const Tensor& a) {
  Matrix v = a.value();
  for (Index r = 0; r < v.rows(); ++r) {
    auto row = v.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return make_result("log_softmax", std::move(v), {&a}, [&](const NodePtr& out) {
    return [an = a.node(), out](const Matrix& g) {
      const Matrix& y = out->value;
      Matrix d(y.rows(), y.cols());
      for (Index r = 0; r < y.rows(); ++r) {
        d.row(r) = g.row(r).array() - y.row(r).array().exp() * g.row(r).sum();
      }
      an->accumulate(d);
    };
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n) shape_error("layer_norm", x, gain);
  if (bias.rows() != 1 || bias.cols() != n) shape_error("layer_norm", x, bias);

  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix v = xhat;
  v.array().rowwise() *= gain.value().row(0).array();
  v.rowwise() += bias.value().row(0);

  return make_result("layer_norm", std::move(v), {&x, &gain, &bias}, [&](const NodePtr&) {
    return [xn = x.node(), gn = gain.node(), bn = bias.node(), xhat = std::move(xhat),
            inv_std = std::move(inv_std)](const Matrix& g) {
      if (gn->requires_grad) gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
      if (bn->requires_grad) bn->accumulate(g.colwise().sum());
      if (xn->requires_grad) {
        const double n = static_cast<double>(xhat.cols());
        Matrix dxhat = g;
        dxhat.array().rowwise() *= gn->value.row(0).array();
        Matrix dx(xhat.rows(), xhat.cols());
        for (Index r = 0; r < xhat.rows(); ++r) {
          const double s1 = dxhat.row(r).sum();
          const double s2 = dxhat.row(r).dot(xhat.row(r));
          dx.row(r) = (inv_std(r) / n) *
                      (n * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
        }
        xn->accumulate(dx);
      }
    };
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  Matrix v(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw TensorError("embedding_lookup: id " + std::to_string(ids[i]) + " out of range for table " +
                        shape_string(table.shape()));
    }
    v.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result("embedding_lookup", std::move(v), {&table}, [&](const NodePtr&) {
    return [tn = table.node(), idv = std::move(idv)](const Matrix& g) {
      Matrix d = Matrix::Zero(tn->value.rows(), tn->value.cols());
      for (std::size_t i = 0; i < idv.size(); ++i) d.row(idv[i]) += g.row(static_cast<Index>(i));
      tn->accumulate(d);
    };
  });
}

Tensor pick(const Tensor& a, std::span<const int> ids) {
  if (static_cast<Index>(ids.size()) != a.rows()) {
    throw TensorError("pick: " + std::to_string(ids.size()) + " ids for tensor " + shape_string(a.shape()));
  }
  Matrix v(a.rows(), 1);
  for (Index r = 0; r < a.rows(); ++r) {
    const int c = ids[static_cast<std::size_t>(r)];
    if (c < 0 || c >= a.cols()) throw TensorError("pick: column " + std::to_string(c) + " out of range");
    v(r, 0) = a.value()(r, c);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result("pick", std::move(v), {&a}, [&](const NodePtr&) {
    return [an = a.node(), idv = std::move(idv)](const Matrix& g) {
      Matrix d = Matrix::Zero(an->value.rows(), an->value.cols());
      for (std::size_t r = 0; r < idv.size(); ++r) d(static_cast<Index>(r), idv[r]) = g(static_cast<Index>(r), 0);
      an->accumulate(d);
    };
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw TensorError("concat: no operands");
  if (axis != 0 && axis != 1) throw TensorError("concat: axis must be 0 or 1");
  Index rows = 0, cols = 0;
  for (const Tensor& t : parts) {
    if (axis == 0) {
      if (t.cols() != parts[0].cols()) shape_error("concat", parts[0], t);
      rows += t.rows();
      cols = t.cols();
    } else {
      if (t.rows() != parts[0].rows()) shape_error("concat", parts[0], t);
      cols += t.cols();
      rows = t.rows();
    }
  }
  Matrix v(rows, cols);
  Index off = 0;
  for (const Tensor& t : parts) {
    if (axis == 0) {
      v.middleRows(off, t.rows()) = t.value();
      off += t.rows();
    } else {
      v.middleCols(off, t.cols()) = t.value();
      off += t.cols();
    }
  }
  check_finite("concat", v);
  bool track = false;
  if (Tape::current().enabled()) {
    for (const Tensor& t : parts) track = track || t.requires_grad();
  }
  Tensor out(std::move(v), track);
  if (track) {
    std::vector<NodePtr> nodes;
    for (const Tensor& t : parts) nodes.push_back(t.node());
    Tape::current().record("concat", nodes, out.node(), [nodes, axis](const Matrix& g) {
      Index o = 0;
      for (const NodePtr& n : nodes) {
        const Index len = axis == 0 ? n->value.rows() : n->value.cols();
        if (n->requires_grad) {
          if (axis == 0) {
            n->accumulate(g.middleRows(o, len));
          } else {
            n->accumulate(g.middleCols(o, len));
          }
        }
        o += len;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, Index start, Index length) {
  if (axis != 0 && axis != 1) throw TensorError("slice: axis must be 0 or 1");
  const Index extent = axis == 0 ? a.rows() : a.cols();
  if (start < 0 || length < 0 || start + length > extent) {
    throw TensorError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                      ") out of bounds for " + shape_string(a.shape()) + " on axis " + std::to_string(axis));
  }
  Matrix v = axis == 0 ? Matrix(a.value().middleRows(start, length)) : Matrix(a.value().middleCols(start, length));
  return make_result("slice", std::move(v), {&a}, [&](const NodePtr&) {
    return [an = a.node(), axis, start, length](const Matrix& g) {
      Matrix d = Matrix::Zero(an->value.rows(), an->value.cols());
      if (axis == 0) {
        d.middleRows(start, length) = g;
      } else {
        d.middleCols(start, length) = g;
      }
      an->accumulate(d);
    };
  });
}

Tensor sum(const Tensor& a) {
  return make_result("sum", Matrix::Constant(1, 1, a.value().sum()), {&a}, [&](const NodePtr&) {
    return [an = a.node()](const Matrix& g) {
      an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
    };
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw TensorError("mean: empty tensor");
  const double n = static_cast<double>(a.size());
  return make_result("mean", Matrix::Constant(1, 1, a.value().sum() / n), {&a}, [&](const NodePtr&) {
    return [an = a.node(), n](const Matrix& g) {
      an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), g(0, 0) / n));
    };
  });
}

}  // namespace protoco
