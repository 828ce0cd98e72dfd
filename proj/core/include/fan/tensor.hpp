#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fan {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the tape refer to parameters and intermediates without copying them.
/// Use clone() for an independent deep copy. The gradient buffer exists iff
/// requires_grad() is true and always has the same shape as the values.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row vector [1, n].
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> values();
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  std::span<const double> grad() const;
  std::span<double> grad();
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

enum class OpKind {
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRowBias,
  kSigmoid,
  kRelu,
  kSoftmaxRows,
  kGather,
  kConcat,
  kReduceMean,
  kSegmentAttention,
  kBinaryLogLoss,
};

const char* op_name(OpKind kind);

/// Dynamic tape. Operations append a record during the forward pass and
/// backward() replays the records in exact reverse order.
///
/// A graph built with Graph::inference() records nothing and produces
/// outputs without gradients; it never writes to parameter gradient buffers,
/// so several inference graphs may share one parameter snapshot.
class Graph {
 public:
  using BackwardFn = std::function<void()>;
  using Observer = std::function<void(std::size_t index, OpKind kind)>;

  Graph() = default;
  static Graph inference();

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return records_.size(); }
  OpKind kind_at(std::size_t i) const { return records_.at(i).kind; }

  // Called by op implementations.
  void record(OpKind kind, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure.
  /// Throws ContractError for a non-scalar loss or a second call without reset().
  void backward(const Tensor& loss);

  void set_backward_observer(Observer observer) { observer_ = std::move(observer); }
  void reset();

 private:
  struct Record {
    OpKind kind;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  Observer observer_;
  bool recording_ = true;
  bool backward_done_ = false;
};

// ---- operations -------------------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
/// The only broadcast the engine supports: scalar times tensor.
Tensor scale(Graph& g, const Tensor& a, double factor);
/// x[m,n] + bias[1,n] added to every row.
Tensor add_row_bias(Graph& g, const Tensor& x, const Tensor& bias);

Tensor sigmoid(Graph& g, const Tensor& x);
Tensor relu(Graph& g, const Tensor& x);
Tensor softmax_rows(Graph& g, const Tensor& x);

/// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds.
Tensor gather(Graph& g, const Tensor& table, std::span<const std::size_t> ids);

/// Concatenate along the last axis; all parts share the row count.
Tensor concat(Graph& g, std::span<const Tensor> parts);
Tensor concat(Graph& g, std::initializer_list<Tensor> parts);

/// Mean of all elements as a [1,1] tensor.
Tensor reduce_mean(Graph& g, const Tensor& x);

/// Multi-head scaled dot-product attention over variable-length key segments.
///
/// q is [nq, d], k and v are [nk, d]; d must be divisible by heads. Query row
/// r attends to key rows key_offsets[s]..key_offsets[s+1] where
/// s = query_segment[r]. Head h uses columns [h*d/heads, (h+1)*d/heads) of
/// q, k and v, and the head outputs land in the same column block of the
/// result. Empty segments produce zero rows.
Tensor segment_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> query_segment,
                         std::span<const std::size_t> key_offsets, std::size_t heads);

/// Weighted mean binary cross-entropy of probs[m,1] against labels, with
/// probabilities clamped to [eps, 1 - eps]. Rows with weight 0 are excluded;
/// if every weight is 0 the result is 0 and no gradient flows.
Tensor binary_logloss(Graph& g, const Tensor& probs, std::span<const double> labels,
                      std::span<const double> weights, double eps = 1e-7);

}  // namespace fan
