#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fan/errors.hpp"
#include "fan/tensor.hpp"
#include "gradcheck.hpp"

namespace fan {
namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Weighted sum with fixed random coefficients, so every output element
// reaches the loss with a distinct weight.
Tensor probe_loss(Graph& g, const Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(rng, out.shape(), false);
  return reduce_mean(g, mul(g, out, w));
}

void expect_grads_match(const std::vector<std::pair<std::string, Tensor>>& inputs,
                        const std::function<Tensor(Graph&)>& loss) {
  const auto report = testing::check_gradients(inputs, loss);
  EXPECT_TRUE(report.mismatches.empty()) << testing::describe(report);
  EXPECT_GT(report.checked, 0u);
}

TEST(Tensor, ShapeAndStorageInvariants) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  EXPECT_FALSE(t.requires_grad());
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), t.size());
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}, {}), DimensionError);
}

TEST(Tensor, CopiesAliasAndCloneDetaches) {
  Tensor a({1, 2}, {1, 2});
  Tensor alias = a;
  Tensor copy = a.clone();
  alias.values()[0] = 7;
  EXPECT_DOUBLE_EQ(a.values()[0], 7.0);
  EXPECT_DOUBLE_EQ(copy.values()[0], 1.0);
  EXPECT_TRUE(alias.same_storage(a));
  EXPECT_FALSE(copy.same_storage(a));
}

TEST(MatMul, IdentityLeavesInputUnchanged) {
  Graph g;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(to_vec(matmul(g, eye, x)), to_vec(x));
}

TEST(MatMul, SmallProduct) {
  Graph g;
  const auto c = matmul(g, Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {1, 1}));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(to_vec(c), (std::vector<double>{3, 7}));
}

TEST(MatMul, ShapeMismatchNamesBothShapes) {
  Graph g;
  try {
    matmul(g, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
}

TEST(MatMul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto a = random_tensor(rng, {5, 7});
  auto b = random_tensor(rng, {7, 3});
  expect_grads_match({{"a", a}, {"b", b}}, [&](Graph& g) { return probe_loss(g, matmul(g, a, b)); });
}

TEST(MatMul, TransposeOfProductProperty) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    const auto m = dim(rng), k = dim(rng), n = dim(rng);
    auto a = random_tensor(rng, {m, k}, false);
    auto b = random_tensor(rng, {k, n}, false);
    Graph g;
    const auto lhs = transpose(g, matmul(g, a, b));
    const auto rhs = matmul(g, transpose(g, b), transpose(g, a));
    ASSERT_EQ(lhs.shape(), rhs.shape());
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs.values()[i], rhs.values()[i], 1e-12);
  }
}

TEST(Transpose, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  auto a = random_tensor(rng, {3, 4});
  expect_grads_match({{"a", a}}, [&](Graph& g) { return probe_loss(g, transpose(g, a)); });
}

TEST(Elementwise, MulByOnesAndZeros) {
  Graph g;
  Tensor x({2, 2}, {1.5, -2, 3, 0.25});
  EXPECT_EQ(to_vec(mul(g, x, Tensor::filled({2, 2}, 1.0))), to_vec(x));
  EXPECT_EQ(to_vec(mul(g, x, Tensor::zeros({2, 2}))), std::vector<double>(4, 0.0));
}

TEST(Elementwise, ModulationExpressionMatchesScalarArithmetic) {
  std::mt19937_64 rng(4);
  auto b = random_tensor(rng, {3, 8}, false);
  auto w = random_tensor(rng, {3, 8}, false);
  auto f = random_tensor(rng, {3, 8}, false);
  Graph g;
  const auto out = sub(g, b, mul(g, w, f));
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_DOUBLE_EQ(out.values()[i], b.values()[i] - w.values()[i] * f.values()[i]);
  }
}

TEST(Elementwise, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(add(g, Tensor::zeros({1, 2}), Tensor::zeros({2, 1})), DimensionError);
  EXPECT_THROW(sub(g, Tensor::zeros({1, 2}), Tensor::zeros({1, 3})), DimensionError);
  EXPECT_THROW(mul(g, Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(add_row_bias(g, Tensor::zeros({2, 3}), Tensor::zeros({1, 2})), DimensionError);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {3, 4});
  auto bias = random_tensor(rng, {1, 4});
  expect_grads_match({{"a", a}, {"b", b}}, [&](Graph& g) { return probe_loss(g, add(g, a, b)); });
  expect_grads_match({{"a", a}, {"b", b}}, [&](Graph& g) { return probe_loss(g, sub(g, a, b)); });
  expect_grads_match({{"a", a}, {"b", b}}, [&](Graph& g) { return probe_loss(g, mul(g, a, b)); });
  expect_grads_match({{"a", a}}, [&](Graph& g) { return probe_loss(g, scale(g, a, -2.5)); });
  expect_grads_match({{"a", a}, {"bias", bias}}, [&](Graph& g) { return probe_loss(g, add_row_bias(g, a, bias)); });
}

TEST(Elementwise, SelfProductAccumulatesBothPaths) {
  Tensor x({1, 1}, {3.0}, true);
  Graph g;
  g.backward(reduce_mean(g, mul(g, x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Activation, SigmoidAtZero) {
  Tensor x({1, 1}, {0.0}, true);
  Graph g;
  const auto y = sigmoid(g, x);
  EXPECT_DOUBLE_EQ(y.item(), 0.5);
  g.backward(reduce_mean(g, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Activation, ReluOfNegative) {
  Tensor x({1, 1}, {-3.0}, true);
  Graph g;
  const auto y = relu(g, x);
  EXPECT_DOUBLE_EQ(y.item(), 0.0);
  g.backward(reduce_mean(g, y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Activation, ReluAndSigmoidPropagateNaN) {
  Graph g;
  const Tensor x({1, 1}, {std::numeric_limits<double>::quiet_NaN()});
  EXPECT_TRUE(std::isnan(relu(g, x).item()));
  EXPECT_TRUE(std::isnan(sigmoid(g, x).item()));
}

TEST(Activation, SigmoidStaysStrictlyInsideUnitInterval) {
  Graph g;
  const auto y = sigmoid(g, Tensor({1, 6}, {-1e4, -800, -40, 40, 800, 1e4}));
  for (double v : y.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Activation, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  auto x = random_tensor(rng, {4, 5}, true, -3, 3);
  expect_grads_match({{"x", x}}, [&](Graph& g) { return probe_loss(g, sigmoid(g, x)); });
  // Keep relu inputs away from the kink.
  for (auto& v : x.values()) {
    if (std::abs(v) < 0.05) v = 0.5;
  }
  expect_grads_match({{"x", x}}, [&](Graph& g) { return probe_loss(g, relu(g, x)); });
}

TEST(Softmax, EqualLogitsGiveUniformRow) {
  Graph g;
  const auto y = softmax_rows(g, Tensor::filled({1, 4}, 3.7));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Graph g;
  const auto y = softmax_rows(g, Tensor({1, 2}, {1000, 0}));
  EXPECT_NEAR(y.values()[0], 1.0, 1e-15);
  EXPECT_NEAR(y.values()[1], 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(y.values()[1]));
}

TEST(Softmax, MatchesLongDoubleOracleAndRowsSumToOne) {
  std::mt19937_64 rng(7);
  auto x = random_tensor(rng, {6, 9}, false, -5, 5);
  Graph g;
  const auto y = softmax_rows(g, x);
  for (std::size_t r = 0; r < 6; ++r) {
    long double total = 0;
    for (std::size_t c = 0; c < 9; ++c) total += std::exp(static_cast<long double>(x.at(r, c)));
    double row_sum = 0;
    for (std::size_t c = 0; c < 9; ++c) {
      const auto expected = static_cast<double>(std::exp(static_cast<long double>(x.at(r, c))) / total);
      EXPECT_NEAR(y.at(r, c), expected, 1e-15);
      row_sum += y.at(r, c);
    }
    EXPECT_NEAR(row_sum, 1.0, 1e-12);
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto x = random_tensor(rng, {3, 5}, true, -2, 2);
  expect_grads_match({{"x", x}}, [&](Graph& g) { return probe_loss(g, softmax_rows(g, x)); });
}

TEST(Gather, SingleLookupReturnsRow) {
  Graph g;
  Tensor table({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::size_t ids[] = {0};
  EXPECT_EQ(to_vec(gather(g, table, ids)), (std::vector<double>{1, 2}));
}

TEST(Gather, RepeatedIdAccumulatesGradient) {
  Tensor table({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  const std::size_t ids[] = {1, 1, 2};
  Graph g;
  const auto out = gather(g, table, ids);
  g.backward(reduce_mean(g, out));
  const double unit = 1.0 / 6.0;
  EXPECT_DOUBLE_EQ(table.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(table.grad()[2], 2 * unit);
  EXPECT_DOUBLE_EQ(table.grad()[3], 2 * unit);
  EXPECT_DOUBLE_EQ(table.grad()[4], unit);
}

TEST(Gather, OutOfRangeIdIsNamed) {
  Graph g;
  const std::size_t ids[] = {0, 17};
  try {
    gather(g, Tensor::zeros({3, 2}), ids);
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(Gather, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  auto table = random_tensor(rng, {6, 3});
  std::vector<std::size_t> ids;
  std::uniform_int_distribution<std::size_t> pick(0, 5);
  for (int i = 0; i < 10; ++i) ids.push_back(pick(rng));
  expect_grads_match({{"table", table}}, [&](Graph& g) { return probe_loss(g, gather(g, table, ids)); });
}

TEST(Concat, JoinsAlongColumns) {
  Graph g;
  const auto c = concat(g, {Tensor({1, 2}, {1, 2}), Tensor({1, 1}, {3})});
  EXPECT_EQ(c.shape(), (Shape{1, 3}));
  EXPECT_EQ(to_vec(c), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(concat(g, {Tensor::zeros({1, 2}), Tensor::zeros({2, 2})}), DimensionError);
}

TEST(Concat, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  auto a = random_tensor(rng, {3, 2});
  auto b = random_tensor(rng, {3, 4});
  expect_grads_match({{"a", a}, {"b", b}}, [&](Graph& g) { return probe_loss(g, concat(g, {a, b})); });
}

TEST(ReduceMean, ConstantTensor) {
  Tensor x = Tensor::filled({2, 5}, 4.5, true);
  Graph g;
  const auto m = reduce_mean(g, x);
  EXPECT_DOUBLE_EQ(m.item(), 4.5);
  g.backward(m);
  for (double v : x.grad()) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(SegmentAttention, SingleKeyReturnsItsValue) {
  Graph g;
  Tensor q({1, 4}, {0.3, -1, 2, 0.5});
  Tensor k({1, 4}, {1, 2, 3, 4});
  Tensor v({1, 4}, {9, 8, 7, 6});
  const std::size_t seg[] = {0};
  const std::size_t off[] = {0, 1};
  EXPECT_EQ(to_vec(segment_attention(g, q, k, v, seg, off, 2)), to_vec(v));
}

TEST(SegmentAttention, UniformKeysAverageValuesRegardlessOfQuery) {
  Graph g;
  Tensor k = Tensor::filled({3, 2}, 0.7);
  Tensor v({3, 2}, {5, 5, 5, 5, 5, 5});
  const std::size_t seg[] = {0, 0};
  const std::size_t off[] = {0, 3};
  const auto out = segment_attention(g, Tensor({2, 2}, {10, -3, 0.1, 4}), k, v, seg, off, 1);
  for (double x : out.values()) EXPECT_NEAR(x, 5.0, 1e-14);
}

TEST(SegmentAttention, EmptySegmentGivesZeros) {
  Graph g;
  Tensor q({2, 2}, {1, 2, 3, 4});
  Tensor k({1, 2}, {1, 1});
  Tensor v({1, 2}, {2, 3});
  const std::size_t seg[] = {0, 1};
  const std::size_t off[] = {0, 0, 1};
  const auto out = segment_attention(g, q, k, v, seg, off, 1);
  EXPECT_EQ(out.at(0, 0), 0.0);
  EXPECT_EQ(out.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(out.at(1, 0), 2.0);
}

TEST(SegmentAttention, ThreeKeysMatchHandEvaluation) {
  Graph g;
  Tensor q({1, 2}, {0.5, -1.0});
  Tensor k({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor v({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::size_t seg[] = {0};
  const std::size_t off[] = {0, 3};
  const auto out = segment_attention(g, q, k, v, seg, off, 1);
  const long double scale = 1.0L / std::sqrt(2.0L);
  const long double s[3] = {0.5L * scale, -1.0L * scale, -0.5L * scale};
  long double z = 0;
  for (auto x : s) z += std::exp(x);
  for (std::size_t c = 0; c < 2; ++c) {
    long double expected = 0;
    for (std::size_t j = 0; j < 3; ++j) expected += std::exp(s[j]) / z * v.at(j, c);
    EXPECT_NEAR(out.at(0, c), static_cast<double>(expected), 1e-14);
  }
}

TEST(SegmentAttention, RejectsBadLayouts) {
  Graph g;
  Tensor q = Tensor::zeros({1, 4});
  Tensor k = Tensor::zeros({2, 4});
  const std::size_t seg[] = {0};
  const std::size_t good[] = {0, 2};
  const std::size_t short_end[] = {0, 1};
  const std::size_t out_of_range[] = {0};
  EXPECT_THROW(segment_attention(g, q, k, k, seg, good, 3), DimensionError);
  EXPECT_THROW(segment_attention(g, q, k, k, seg, short_end, 2), DimensionError);
  EXPECT_THROW(segment_attention(g, q, k, k, seg, out_of_range, 2), DimensionError);
}

TEST(SegmentAttention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto q = random_tensor(rng, {4, 6});
  auto k = random_tensor(rng, {5, 6});
  auto v = random_tensor(rng, {5, 6});
  const std::size_t seg[] = {0, 1, 1, 2};
  const std::size_t off[] = {0, 2, 5, 5};
  expect_grads_match({{"q", q}, {"k", k}, {"v", v}},
                     [&](Graph& g) { return probe_loss(g, segment_attention(g, q, k, v, seg, off, 3)); });
}

TEST(BinaryLogLoss, ValueAndWeighting) {
  Graph g;
  const double labels[] = {1, 0, 1};
  const double weights[] = {1, 1, 0};
  const auto loss = binary_logloss(g, Tensor({3, 1}, {0.5, 0.25, 0.9}), labels, weights);
  EXPECT_NEAR(loss.item(), (std::log(2.0) - std::log(0.75)) / 2.0, 1e-15);
}

TEST(BinaryLogLoss, AllZeroWeightsGiveZeroAndNoGradient) {
  Tensor p({2, 1}, {0.3, 0.6}, true);
  const double labels[] = {1, 0};
  const double weights[] = {0, 0};
  Graph g;
  const auto loss = binary_logloss(g, p, labels, weights);
  EXPECT_EQ(loss.item(), 0.0);
  for (double v : p.grad()) EXPECT_EQ(v, 0.0);
}

TEST(BinaryLogLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto p = random_tensor(rng, {5, 1}, true, 0.05, 0.95);
  const double labels[] = {1, 0, 0, 1, 1};
  const double weights[] = {1, 1, 0, 1, 1};
  expect_grads_match({{"p", p}}, [&](Graph& g) { return binary_logloss(g, p, labels, weights); });
}

TEST(Graph, BackwardRequiresScalarLoss) {
  Tensor x = Tensor::filled({1, 2}, 1.0, true);
  Graph g;
  const auto y = scale(g, x, 2.0);
  EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Graph, RepeatedBackwardWithoutResetIsAnError) {
  Tensor x = Tensor::filled({1, 2}, 1.0, true);
  Graph g;
  const auto loss = reduce_mean(g, x);
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), ContractError);
}

TEST(Graph, BackwardVisitsRecordsInReverseOrder) {
  std::mt19937_64 rng(13);
  auto w = random_tensor(rng, {3, 3});
  auto x = random_tensor(rng, {2, 3}, false);
  Graph g;
  const auto h = relu(g, matmul(g, x, w));
  const auto loss = reduce_mean(g, sigmoid(g, h));
  std::vector<std::size_t> visited;
  std::vector<OpKind> kinds;
  g.set_backward_observer([&](std::size_t i, OpKind k) {
    visited.push_back(i);
    kinds.push_back(k);
  });
  g.backward(loss);
  ASSERT_EQ(visited.size(), g.size());
  for (std::size_t i = 0; i < visited.size(); ++i) EXPECT_EQ(visited[i], g.size() - 1 - i);
  EXPECT_EQ(kinds.front(), OpKind::kReduceMean);
  EXPECT_EQ(kinds.back(), OpKind::kMatMul);
}

TEST(Graph, InferenceGraphRecordsNothing) {
  Tensor w = Tensor::filled({2, 2}, 0.5, true);
  auto g = Graph::inference();
  const auto y = matmul(g, Tensor::filled({1, 2}, 1.0), w);
  EXPECT_EQ(g.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(g.backward(reduce_mean(g, y)), ContractError);
}

TEST(Graph, ForwardIsDeterministic) {
  std::mt19937_64 rng(14);
  auto a = random_tensor(rng, {8, 8}, false);
  auto b = random_tensor(rng, {8, 8}, false);
  Graph g1, g2;
  EXPECT_EQ(to_vec(softmax_rows(g1, matmul(g1, a, b))), to_vec(softmax_rows(g2, matmul(g2, a, b))));
}

}  // namespace
}  // namespace fan
