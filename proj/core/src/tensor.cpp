#include "fan/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "fan/errors.hpp"

namespace fan {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (values.size() != element_count(shape)) {
    throw DimensionError("tensor of shape " + shape_to_string(shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<Storage>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1, 1}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->values.size(); }

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return 1;
  if (s.size() != 2) throw DimensionError("expected a matrix, got " + shape_to_string(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() != 2) throw DimensionError("expected a matrix, got " + shape_to_string(s));
  return s[1];
}

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::values() { return impl_->values; }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) {
    throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
                     shape_to_string(shape()));
  }
  return impl_->values[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::grad() { return impl_->grad; }

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  Tensor copy(impl_->shape, impl_->values, false);
  if (impl_->requires_grad) {
    copy.impl_->requires_grad = true;
    copy.impl_->grad = impl_->grad;
  }
  return copy;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddRowBias: return "add_row_bias";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kGather: return "gather";
    case OpKind::kConcat: return "concat";
    case OpKind::kReduceMean: return "reduce_mean";
    case OpKind::kSegmentAttention: return "segment_attention";
    case OpKind::kBinaryLogLoss: return "binary_logloss";
  }
  return "unknown";
}

Graph Graph::inference() {
  Graph g;
  g.recording_ = false;
  return g;
}

void Graph::record(OpKind kind, BackwardFn fn) {
  if (!recording_) return;
  records_.push_back({kind, std::move(fn)});
}

void Graph::backward(const Tensor& loss) {
  if (!recording_) throw ContractError("backward on an inference graph");
  if (backward_done_) throw ContractError("backward already ran on this graph; call reset() first");
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any trainable tensor");
  backward_done_ = true;
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (std::size_t i = records_.size(); i-- > 0;) {
    if (observer_) observer_(i, records_[i].kind);
    records_[i].backward();
  }
}

void Graph::reset() {
  records_.clear();
  backward_done_ = false;
}

}  // namespace fan
