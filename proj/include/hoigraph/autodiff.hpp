#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied during one forward pass. Values are
// 64-bit floats throughout; each primitive rejects non-finite outputs.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hoigraph/tensor.hpp"

namespace hoigraph {

enum class Activation { identity, relu, sigmoid };
enum class ReduceOp { max, mean, sum };

/// Named learnable tensors with matching gradient accumulators.
class ParamStore {
 public:
  /// Registers a parameter; names must be unique.
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index(const std::string& name) const;

  Tensor& value(const std::string& name) { return entries_[index(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index(name)].value; }
  Tensor& grad(const std::string& name) { return entries_[index(name)].grad; }
  const Tensor& grad(const std::string& name) const { return entries_[index(name)].grad; }

  Tensor& value_at(std::size_t i) { return entries_[i].value; }
  const Tensor& value_at(std::size_t i) const { return entries_[i].value; }
  Tensor& grad_at(std::size_t i) { return entries_[i].grad; }
  const Tensor& grad_at(std::size_t i) const { return entries_[i].grad; }

  /// Names in registration order.
  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return entries_.size(); }
  std::size_t total_size() const;

  void zero_grad();
  /// Same names and shapes, values and gradients all zero.
  ParamStore zeros_like() const;

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
  };
  std::vector<std::string> names_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  struct Entry {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* ref = nullptr;  // parameter storage, not owned
    Tensor grad;
    bool requires_grad = false;
    std::string param_name;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// A leaf whose gradient is kept on the tape (inputs under test, not parameters).
  Var variable(Tensor value);
  /// Leaf bound to a stored parameter. The store must outlive the tape and
  /// stay unmodified until backward finishes. Repeated calls return one node.
  Var param(const ParamStore& store, const std::string& name);

  const Tensor& value(std::size_t id) const;
  /// Gradient reached by backward; zeros when the node received none.
  Tensor grad(Var v) const;
  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  std::size_t size() const { return entries_.size(); }

  /// Appends a computed node. Throws DomainError if `value` is not finite.
  Var push(std::string_view op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  bool requires_grad(std::size_t id) const { return entries_[id].requires_grad; }
  /// Gradient slot of node `id`, zero-initialised on first use.
  Tensor& grad_slot(std::size_t id);

  /// Runs reverse accumulation from `loss` over every recorded entry. Used by
  /// the free backward(); exposed for tests that inspect leaf gradients.
  void propagate(Var loss);

  /// Transpose of a parameter matrix [rows, cols] as [cols, rows], computed
  /// once per tape.
  const std::vector<double>& param_transpose(std::size_t id);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::size_t, std::vector<double>> transposed_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  const ParamStore* bound_store_ = nullptr;
};

/// Accumulates dLoss/dtheta into every parameter gradient slot of `params`
/// matched by name. Non-parameter leaves are ignored. Loss must be scalar.
void backward(Tape& tape, Var loss, ParamStore& params);

namespace ad {

Var add(Var a, Var b);
/// Element-wise sum of equally shaped inputs.
Var sum(std::span<const Var> terms);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Scalar (size-1) node times a tensor.
Var scale_by(Var scalar, Var v);
/// Sum of every element, as a scalar.
Var total(Var a);
Var activate(Var x, Activation act);

/// activation(W x + b). `x` is a vector [in] or a row batch [B, in].
Var linear(Var x, Var weight, Var bias, Activation act);
Var concat(Var a, Var b);
Var softmax(Var v);
/// Cosine similarity as a scalar; 0 when either norm is below 1e-12.
Var cosine_similarity(Var a, Var b);
/// Packs scalar nodes into one vector.
Var stack(std::span<const Var> scalars);
/// Packs equally sized vectors into the rows of a [B, n] matrix.
Var stack_rows(std::span<const Var> rows);
Var pick(Var v, std::size_t index);
/// Element-wise reduction across equally shaped vectors; max routes the
/// gradient to the first maximal entry.
Var reduce(ReduceOp op, std::span<const Var> inputs);
/// Row `index` of a [B, n] matrix.
Var row(Var matrix, std::size_t index);
Var reshape(Var x, Shape shape);

/// Cross-correlation. `input` is [C, H, W] or [B, C, H, W]; `kernels` is
/// [Cout, Cin, k, k]; `bias` is [Cout] or an invalid Var for none. `act` is
/// applied to the biased output.
Var conv2d(Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding,
           Activation act = Activation::identity);
Var max_pool2d(Var input, std::size_t window, std::size_t stride);

/// Mean binary cross-entropy of probabilities against 0/1 targets, with the
/// probabilities clamped to [clamp, 1 - clamp] before the log.
Var binary_cross_entropy(Var probs, const Tensor& targets, double clamp = 1e-7);

}  // namespace ad

/// Output side length of a convolution or pooling window.
std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

}  // namespace hoigraph
