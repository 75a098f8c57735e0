#pragma once

// Dense float64 tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap, shared handle onto a node holding shape, data and an
// optional gradient buffer. Operations are free functions taking the Tape
// that records their adjoints; when the tape is not recording, or none of the
// inputs require gradients, nothing is recorded and the output is a plain
// value.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace affect {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

enum class Mode { train, eval };
enum class Activation { relu, sigmoid, tanh };

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  // Leading dimension and product of the remaining ones; a 1-D tensor is one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double item() const;
  double& operator[](std::size_t i) { return node_->data[i]; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  // Allocates a zero gradient buffer on first access.
  std::span<double> grad_buffer() const;
  void zero_grad() { node_->grad.clear(); }

  // Deep copy of data; the copy does not share gradient state.
  Tensor clone() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

// Ordered record of adjoint closures. Closures are appended in execution
// order, so replaying them backwards visits every op after all of its
// consumers.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return adjoints_.size(); }
  void record(std::function<void()> adjoint) { adjoints_.push_back(std::move(adjoint)); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // into every requires_grad tensor on the path. The tape is emptied.
  void backward(Tensor loss);
  void clear() { adjoints_.clear(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> adjoints_;
};

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
// 1 - x, elementwise.
Tensor one_minus(Tape& tape, const Tensor& x);
// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor activation(Tape& tape, Activation kind, const Tensor& x);

// Width-3 convolution over time with one zero frame of padding on each side.
// seq[T×D], filters[3×D×C], bias[C] -> [T×C].
Tensor conv1d_same(Tape& tape, const Tensor& seq, const Tensor& filters, const Tensor& bias);
// Windowed per-channel max; gradient goes to the first maximal index.
Tensor max_pool_time(Tape& tape, const Tensor& seq, std::size_t pool, std::size_t stride);
// seq[T×C] -> [C].
Tensor global_max_pool(Tape& tape, const Tensor& seq);
// Inverted dropout. Eval mode and p == 0 return x itself without touching rng.
Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng);

// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
// Row r of a 2-D tensor as [1×C].
Tensor select_row(Tape& tape, const Tensor& x, std::size_t r);
// Rows of table[V×D] at ids -> [len(ids)×D]. Row 0 never receives gradient.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids);
// Column-wise mean of x[T×D] -> [1×D].
Tensor mean_rows(Tape& tape, const Tensor& x);
// Stacks equal-width 1-D [C] or [1×C] tensors into [B×C].
Tensor stack_rows(Tape& tape, std::span<const Tensor> parts);
Tensor sum(Tape& tape, const Tensor& x);
// Mean over all elements of (pred - target)^2. target carries no gradient.
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);

}  // namespace affect
