#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "fan/errors.hpp"
#include "fan/tensor.hpp"

namespace fan {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.values().data(), t.rows(), t.cols()); }
ConstMap grad_matrix(const Tensor& t) { return ConstMap(t.grad().data(), t.rows(), t.cols()); }
MutMap grad_matrix(Tensor& t) { return MutMap(t.grad().data(), t.rows(), t.cols()); }

Tensor make_output(const Graph& g, Shape shape, std::vector<double> values, bool any_input_requires_grad) {
  return Tensor(std::move(shape), std::move(values), g.recording() && any_input_requires_grad);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <typename Fn>
Tensor elementwise_binary(Graph& g, OpKind kind, const Tensor& a, const Tensor& b, Fn fn) {
  require_same_shape(a, b, op_name(kind));
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(av[i], bv[i]);
  return make_output(g, a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
}

double stable_sigmoid(double x) {
  constexpr double kLow = std::numeric_limits<double>::min();
  const double kHigh = std::nextafter(1.0, 0.0);
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kLow, kHigh);
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(a.rows() * b.cols());
  MutMap(out.data(), a.rows(), b.cols()).noalias() = as_matrix(a) * as_matrix(b);
  Tensor c = make_output(g, {a.rows(), b.cols()}, std::move(out), a.requires_grad() || b.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kMatMul, [a = Tensor(a), b = Tensor(b), c]() mutable {
      auto dc = grad_matrix(std::as_const(c));
      if (a.requires_grad()) grad_matrix(a).noalias() += dc * as_matrix(b).transpose();
      if (b.requires_grad()) grad_matrix(b).noalias() += as_matrix(a).transpose() * dc;
    });
  }
  return c;
}

Tensor transpose(Graph& g, const Tensor& a) {
  const auto m = a.rows();
  const auto n = a.cols();
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = as_matrix(a).transpose();
  Tensor c = make_output(g, {n, m}, std::move(out), a.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kTranspose, [a = Tensor(a), c]() mutable { grad_matrix(a) += grad_matrix(std::as_const(c)).transpose(); });
  }
  return c;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  Tensor c = elementwise_binary(g, OpKind::kAdd, a, b, [](double x, double y) { return x + y; });
  if (c.requires_grad()) {
    g.record(OpKind::kAdd, [a = Tensor(a), b = Tensor(b), c]() mutable {
      auto dc = c.grad();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i];
      }
    });
  }
  return c;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  Tensor c = elementwise_binary(g, OpKind::kSub, a, b, [](double x, double y) { return x - y; });
  if (c.requires_grad()) {
    g.record(OpKind::kSub, [a = Tensor(a), b = Tensor(b), c]() mutable {
      auto dc = c.grad();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) db[i] -= dc[i];
      }
    });
  }
  return c;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  Tensor c = elementwise_binary(g, OpKind::kMul, a, b, [](double x, double y) { return x * y; });
  if (c.requires_grad()) {
    g.record(OpKind::kMul, [a = Tensor(a), b = Tensor(b), c]() mutable {
      auto dc = c.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * av[i];
      }
    });
  }
  return c;
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& x : out) x *= factor;
  Tensor c = make_output(g, a.shape(), std::move(out), a.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kScale, [a = Tensor(a), c, factor]() mutable {
      auto dc = c.grad();
      auto da = a.grad();
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += factor * dc[i];
    });
  }
  return c;
}

Tensor add_row_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) + " does not fit " +
                         shape_to_string(x.shape()));
  }
  const auto m = x.rows();
  const auto n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  }
  Tensor c = make_output(g, {m, n}, std::move(out), x.requires_grad() || bias.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kAddRowBias, [x = Tensor(x), bias = Tensor(bias), c, m, n]() mutable {
      auto dc = c.grad();
      if (x.requires_grad()) {
        auto dx = x.grad();
        for (std::size_t i = 0; i < dc.size(); ++i) dx[i] += dc[i];
      }
      if (bias.requires_grad()) {
        auto db = bias.grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < n; ++j) db[j] += dc[r * n + j];
        }
      }
    });
  }
  return c;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  Tensor c = make_output(g, x.shape(), std::move(out), x.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kSigmoid, [x = Tensor(x), c]() mutable {
      auto dc = c.grad();
      auto s = c.values();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dc.size(); ++i) dx[i] += dc[i] * s[i] * (1.0 - s[i]);
    });
  }
  return c;
}

Tensor relu(Graph& g, const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] <= 0.0 ? 0.0 : xv[i];  // NaN passes through so divergence surfaces
  Tensor c = make_output(g, x.shape(), std::move(out), x.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kRelu, [x = Tensor(x), c]() mutable {
      auto dc = c.grad();
      auto xv = x.values();
      auto dx = x.grad();
      for (std::size_t i = 0; i < dc.size(); ++i) {
        if (xv[i] > 0.0) dx[i] += dc[i];
      }
    });
  }
  return c;
}

Tensor softmax_rows(Graph& g, const Tensor& x) {
  const auto m = x.rows();
  const auto n = x.cols();
  std::vector<double> out(m * n);
  auto xv = x.values();
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  Tensor c = make_output(g, x.shape(), std::move(out), x.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kSoftmaxRows, [x = Tensor(x), c, m, n]() mutable {
      auto dc = c.grad();
      auto p = c.values();
      auto dx = x.grad();
      for (std::size_t r = 0; r < m; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dc[r * n + j] * p[r * n + j];
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += p[r * n + j] * (dc[r * n + j] - dot);
      }
    });
  }
  return c;
}

Tensor gather(Graph& g, const Tensor& table, std::span<const std::size_t> ids) {
  const auto v = table.rows();
  const auto d = table.cols();
  if (ids.empty()) throw DimensionError("gather: empty id list");
  for (auto id : ids) {
    if (id >= v) {
      throw IndexError("gather: id " + std::to_string(id) + " out of range for table with " + std::to_string(v) +
                       " rows");
    }
  }
  std::vector<double> out(ids.size() * d);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor c = make_output(g, {ids.size(), d}, std::move(out), table.requires_grad());
  if (c.requires_grad()) {
    std::vector<std::size_t> saved(ids.begin(), ids.end());
    g.record(OpKind::kGather, [table = Tensor(table), c, d, saved = std::move(saved)]() mutable {
      auto dc = c.grad();
      auto dt = table.grad();
      for (std::size_t i = 0; i < saved.size(); ++i) {
        double* row = dt.data() + saved[i] * d;
        const double* src = dc.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
      }
    });
  }
  return c;
}

Tensor concat(Graph& g, std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no parts");
  const auto m = parts.front().rows();
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat: row count mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    total += p.cols();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto n = p.cols();
    auto pv = p.values();
    for (std::size_t r = 0; r < m; ++r) std::copy_n(pv.data() + r * n, n, out.data() + r * total + offset);
    offset += n;
  }
  Tensor c = make_output(g, {m, total}, std::move(out), any_grad);
  if (c.requires_grad()) {
    std::vector<Tensor> saved(parts.begin(), parts.end());
    g.record(OpKind::kConcat, [saved, c, m, total]() mutable {
      auto dc = c.grad();
      std::size_t offset = 0;
      for (auto& p : saved) {
        const auto n = p.cols();
        if (p.requires_grad()) {
          auto dp = p.grad();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < n; ++j) dp[r * n + j] += dc[r * total + offset + j];
          }
        }
        offset += n;
      }
    });
  }
  return c;
}

Tensor concat(Graph& g, std::initializer_list<Tensor> parts) {
  return concat(g, std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor reduce_mean(Graph& g, const Tensor& x) {
  auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  const double count = static_cast<double>(xv.size());
  Tensor c = make_output(g, {1, 1}, {total / count}, x.requires_grad());
  if (c.requires_grad()) {
    g.record(OpKind::kReduceMean, [x = Tensor(x), c, count]() mutable {
      const double d = c.grad()[0] / count;
      for (auto& gx : x.grad()) gx += d;
    });
  }
  return c;
}

Tensor segment_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                         std::span<const std::size_t> query_segment, std::span<const std::size_t> key_offsets,
                         std::size_t heads) {
  const auto nq = q.rows();
  const auto d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("segment_attention: q " + shape_to_string(q.shape()) + ", k " + shape_to_string(k.shape()) +
                         ", v " + shape_to_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("segment_attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (query_segment.size() != nq) throw DimensionError("segment_attention: one segment id per query row required");
  if (key_offsets.empty() || key_offsets.back() != k.rows()) {
    throw DimensionError("segment_attention: key offsets must end at the key row count");
  }
  const std::size_t segments = key_offsets.size() - 1;
  for (std::size_t s = 0; s < segments; ++s) {
    if (key_offsets[s] > key_offsets[s + 1]) throw DimensionError("segment_attention: offsets must be non-decreasing");
  }
  for (auto s : query_segment) {
    if (s >= segments) throw IndexError("segment_attention: segment " + std::to_string(s) + " out of range");
  }

  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto qv = q.values();
  auto kv = k.values();
  auto vv = v.values();

  // Attention weights, laid out per query row as heads x segment_length.
  std::vector<std::size_t> p_offset(nq + 1, 0);
  for (std::size_t r = 0; r < nq; ++r) {
    const auto s = query_segment[r];
    p_offset[r + 1] = p_offset[r] + heads * (key_offsets[s + 1] - key_offsets[s]);
  }
  std::vector<double> probs(p_offset.back());
  std::vector<double> out(nq * d, 0.0);

  for (std::size_t r = 0; r < nq; ++r) {
    const auto s = query_segment[r];
    const auto begin = key_offsets[s];
    const auto len = key_offsets[s + 1] - begin;
    if (len == 0) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + p_offset[r] + h * len;
      const double* qr = qv.data() + r * d + h * dh;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) {
        const double* kr = kv.data() + (begin + j) * d + h * dh;
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += qr[c] * kr[c];
        p[j] = dot * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        p[j] = std::exp(p[j] - mx);
        total += p[j];
      }
      double* o = out.data() + r * d + h * dh;
      for (std::size_t j = 0; j < len; ++j) {
        p[j] /= total;
        const double* vr = vv.data() + (begin + j) * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vr[c];
      }
    }
  }

  Tensor c = make_output(g, {nq, d}, std::move(out), q.requires_grad() || k.requires_grad() || v.requires_grad());
  if (c.requires_grad()) {
    std::vector<std::size_t> segs(query_segment.begin(), query_segment.end());
    std::vector<std::size_t> offs(key_offsets.begin(), key_offsets.end());
    g.record(OpKind::kSegmentAttention, [q = Tensor(q), k = Tensor(k), v = Tensor(v), c, heads, d, dh, inv_sqrt, segs = std::move(segs),
                                         offs = std::move(offs), p_offset = std::move(p_offset),
                                         probs = std::move(probs)]() mutable {
      auto dout = c.grad();
      auto qv = q.values();
      auto kv = k.values();
      auto vv = v.values();
      std::span<double> dq = q.requires_grad() ? q.grad() : std::span<double>{};
      std::span<double> dk = k.requires_grad() ? k.grad() : std::span<double>{};
      std::span<double> dv = v.requires_grad() ? v.grad() : std::span<double>{};
      std::vector<double> dscore;
      for (std::size_t r = 0; r < segs.size(); ++r) {
        const auto s = segs[r];
        const auto begin = offs[s];
        const auto len = offs[s + 1] - begin;
        if (len == 0) continue;
        dscore.assign(len, 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
          const double* p = probs.data() + p_offset[r] + h * len;
          const double* go = dout.data() + r * d + h * dh;
          double weighted = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            const double* vr = vv.data() + (begin + j) * d + h * dh;
            double dp = 0.0;
            for (std::size_t cc = 0; cc < dh; ++cc) dp += go[cc] * vr[cc];
            dscore[j] = dp;
            weighted += p[j] * dp;
          }
          for (std::size_t j = 0; j < len; ++j) dscore[j] = p[j] * (dscore[j] - weighted) * inv_sqrt;

          const double* qr = qv.data() + r * d + h * dh;
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t row = (begin + j) * d + h * dh;
            if (!dq.empty()) {
              double* dqr = dq.data() + r * d + h * dh;
              for (std::size_t cc = 0; cc < dh; ++cc) dqr[cc] += dscore[j] * kv[row + cc];
            }
            if (!dk.empty()) {
              for (std::size_t cc = 0; cc < dh; ++cc) dk[row + cc] += dscore[j] * qr[cc];
            }
            if (!dv.empty()) {
              for (std::size_t cc = 0; cc < dh; ++cc) dv[row + cc] += p[j] * go[cc];
            }
          }
        }
      }
    });
  }
  return c;
}

Tensor binary_logloss(Graph& g, const Tensor& probs, std::span<const double> labels, std::span<const double> weights,
                      double eps) {
  const auto m = probs.size();
  if (probs.cols() != 1 || labels.size() != m || weights.size() != m) {
    throw DimensionError("binary_logloss: probabilities " + shape_to_string(probs.shape()) + " with " +
                         std::to_string(labels.size()) + " labels and " + std::to_string(weights.size()) +
                         " weights");
  }
  auto pv = probs.values();
  double weight_total = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (weights[i] == 0.0) continue;
    const double p = std::clamp(pv[i], eps, 1.0 - eps);
    loss -= weights[i] * (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    weight_total += weights[i];
  }
  const double value = weight_total > 0.0 ? loss / weight_total : 0.0;
  Tensor c = make_output(g, {1, 1}, {value}, probs.requires_grad() && weight_total > 0.0);
  if (c.requires_grad()) {
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> w(weights.begin(), weights.end());
    g.record(OpKind::kBinaryLogLoss, [probs = Tensor(probs), c, y = std::move(y), w = std::move(w), weight_total, eps]() mutable {
      const double upstream = c.grad()[0] / weight_total;
      auto pv = probs.values();
      auto dp = probs.grad();
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (w[i] == 0.0) continue;
        const double p = pv[i];
        if (p <= eps || p >= 1.0 - eps) continue;
        dp[i] += upstream * w[i] * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
      }
    });
  }
  return c;
}

}  // namespace fan
