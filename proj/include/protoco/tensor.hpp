#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace protoco {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::array<Index, 2>;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;

  void accumulate(const Matrix& g);
};

}  // namespace detail

// A dense rank-2 array of doubles with reverse-mode gradient tracking.
// Vectors are 1 x n rows; scalars are 1 x 1. Copies share storage.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor ones(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor row(std::span<const double> values, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  // Direct write access, for optimizers and initialisers only. Never call
  // while the tensor is referenced by an un-replayed tape.
  Matrix& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  // Zero matrix of the value's shape when no gradient has been accumulated.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  Shape shape() const { return {rows(), cols()}; }
  double item() const;
  double operator()(Index r, Index c) const { return node_->value(r, c); }

  // Deep copy without graph history.
  Tensor detach() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

std::string shape_string(const Shape& s);

// Ordered record of differentiable operations. One tape per thread; entries
// are appended in execution order, so the tape is topologically sorted.
class Tape {
 public:
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  struct Entry {
    const char* op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  static Tape& current();

  void record(const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
              const std::shared_ptr<detail::Node>& output, BackwardFn fn);
  void reset();
  std::size_t size() const { return entries_.size(); }
  bool enabled() const { return enabled_ && !replayed_; }
  bool replayed() const { return replayed_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void backward(const Tensor& loss);

 private:
  friend class NoGradGuard;
  std::vector<Entry> entries_;
  bool enabled_ = true;
  bool replayed_ = false;
};

// Clears the thread's tape on entry and exit.
class TapeScope {
 public:
  TapeScope() { Tape::current().reset(); }
  ~TapeScope() { Tape::current().reset(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

// Suspends recording; ops still compute values.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::current().enabled_) { Tape::current().enabled_ = false; }
  ~NoGradGuard() { Tape::current().enabled_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Populates grad buffers of every requires_grad tensor reachable from loss.
void backward(const Tensor& loss);

// ---- ops ------------------------------------------------------------------
// Binary elementwise ops accept either equal shapes or a 1 x cols right
// operand broadcast over the rows of the left one.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// log(1 - p) with p clamped to at most 1 - 1e-12; each clamped element
// increments *clamp_count when provided.
Tensor log1m(const Tensor& p, std::size_t* clamp_count = nullptr);

// Row-wise.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Rows of table selected by ids.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
// out(i, 0) = a(i, ids[i]).
Tensor pick(const Tensor& a, std::span<const int> ids);

// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& a, int axis, Index start, Index length);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

}  // namespace protoco
