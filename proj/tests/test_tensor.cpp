// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "serpent/ops.hpp"
#include "serpent/serialize.hpp"
#include "support.hpp"

using namespace serpent;
using serpent::testing::check_gradients;
using serpent::testing::random_tensor;
using serpent::testing::weighted_sum;

namespace {

constexpr double kOpGradTol = 1e-3;

Tensor eye(int64_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i) t.mutable_data()[i * n + i] = 1.0f;
  return t;
}

}  // namespace

TEST_CASE("matmul") {
  std::mt19937_64 rng(1);
  SUBCASE("identity leaves the operand unchanged") {
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor y = ops::matmul(eye(3), x);
    CHECK(testing::bit_equal(y.data(), x.data()));
  }
  SUBCASE("hand arithmetic") {
    const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from_data({2, 1}, {1, 1});
    const Tensor y = ops::matmul(a, b);
    CHECK(y.shape() == Shape{2, 1});
    CHECK(y.data()[0] == 3.0f);
    CHECK(y.data()[1] == 7.0f);
  }
  SUBCASE("shape mismatch names both shapes") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 5});
    try {
      (void)ops::matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[4x5]") != std::string::npos);
    }
  }
  SUBCASE("gradients match finite differences") {
    Tensor a = random_tensor({5, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4, 3}, rng, -1, 1, true);
    const Tensor w = random_tensor({5, 3}, rng);
    auto r = check_gradients([&] { return weighted_sum(ops::matmul(a, b), w); },
                             {{"a", a}, {"b", b}}, rng);
    CHECK_MESSAGE(r.max_rel_err <= kOpGradTol, r.worst);
  }
}

TEST_CASE("elementwise ops") {
  CHECK(ops::silu(Tensor::scalar(0.0f)).item() == 0.0f);
  CHECK(ops::softplus(Tensor::scalar(0.0f)).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(ops::softplus(Tensor::scalar(100.0f)).item() == doctest::Approx(100.0));
  CHECK(ops::softplus(Tensor::scalar(-100.0f)).item() >= 0.0f);
  CHECK(std::isfinite(ops::softplus(Tensor::scalar(-100.0f)).item()));
  CHECK(ops::exp(Tensor::scalar(1.0f)).item() == doctest::Approx(std::exp(1.0)));

  SUBCASE("trailing and scalar broadcasting") {
    const Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor row = Tensor::from_data({3}, {10, 20, 30});
    const Tensor y = ops::add(x, row);
    CHECK(y.data()[4] == 25.0f);
    const Tensor z = ops::mul(Tensor::scalar(2.0f), x);
    CHECK(z.shape() == x.shape());
    CHECK(z.data()[5] == 12.0f);
  }
  SUBCASE("incompatible shapes are rejected") {
    CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
    CHECK_THROWS_AS(ops::mul(Tensor::zeros({4}), Tensor::zeros({3})), DimensionError);
  }
  SUBCASE("add gradients match finite differences, broadcast operand included") {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({3, 4}, rng, -1, 1, true);
    Tensor b = random_tensor({4}, rng, -1, 1, true);
    const Tensor w = random_tensor({3, 4}, rng);
    auto r = check_gradients([&] { return weighted_sum(ops::add(a, b), w); },
                             {{"a", a}, {"b", b}}, rng);
    CHECK_MESSAGE(r.max_rel_err <= kOpGradTol, r.worst);
  }
}

TEST_CASE("layer_norm") {
  const Tensor gamma = Tensor::full({2}, 1.0f);
  const Tensor beta = Tensor::zeros({2});
  SUBCASE("constant input normalises to zero") {
    const Tensor x = Tensor::full({3, 4}, 7.5f);
    const Tensor y = ops::layer_norm(x, Tensor::full({4}, 1.0f), Tensor::zeros({4}));
    for (float v : y.data()) CHECK(v == 0.0f);
  }
  SUBCASE("closed form for [1, 3]") {
    const Tensor y = ops::layer_norm(Tensor::from_data({2}, {1, 3}), gamma, beta);
    // (x - 2) / sqrt(1 + eps)
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.data()[0] == doctest::Approx(-expect).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(expect).epsilon(1e-6));
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(ops::layer_norm(Tensor::zeros({2, 3}), gamma, beta), DimensionError);
  }
  SUBCASE("per-position moments") {
    std::mt19937_64 rng(3);
    for (int seed = 0; seed < 20; ++seed) {
      const Tensor x = random_tensor({5, 16}, rng, -3.0f, 3.0f);
      const Tensor y = ops::layer_norm(x, Tensor::full({16}, 1.0f), Tensor::zeros({16}));
      for (int r = 0; r < 5; ++r) {
        double mu = 0.0, var = 0.0;
        for (int i = 0; i < 16; ++i) mu += y.data()[r * 16 + i];
        mu /= 16.0;
        for (int i = 0; i < 16; ++i) var += std::pow(y.data()[r * 16 + i] - mu, 2);
        var /= 16.0;
        CHECK(std::fabs(mu) <= 1e-5);
        CHECK(std::fabs(var - 1.0) <= 1e-3);
      }
    }
  }
}

TEST_CASE("depthwise_conv2d") {
  SUBCASE("delta kernel is the identity") {
    std::mt19937_64 rng(4);
    const Tensor x = random_tensor({5, 6, 3}, rng);
    Tensor k = Tensor::zeros({3, 3, 3});
    for (int c = 0; c < 3; ++c) k.mutable_data()[(1 * 3 + 1) * 3 + c] = 1.0f;
    CHECK(testing::bit_equal(ops::depthwise_conv2d(x, k).data(), x.data()));
  }
  SUBCASE("all-ones kernel sums the window") {
    const Tensor x = Tensor::full({4, 4, 1}, 1.0f);
    const Tensor y = ops::depthwise_conv2d(x, Tensor::full({3, 3, 1}, 1.0f));
    CHECK(y.at({1, 1, 0}) == 9.0f);
    CHECK(y.at({0, 0, 0}) == 4.0f);  // zero padding at the corner
  }
  SUBCASE("channels do not mix") {
    Tensor x = Tensor::zeros({3, 3, 2});
    x.mutable_data()[(1 * 3 + 1) * 2 + 0] = 1.0f;
    const Tensor y = ops::depthwise_conv2d(x, Tensor::full({3, 3, 2}, 1.0f));
    for (int p = 0; p < 9; ++p) CHECK(y.data()[p * 2 + 1] == 0.0f);
  }
  SUBCASE("even kernels are rejected") {
    CHECK_THROWS_AS(ops::depthwise_conv2d(Tensor::zeros({4, 4, 1}), Tensor::zeros({2, 2, 1})),
                    DimensionError);
  }
  SUBCASE("gradients match finite differences") {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({5, 5, 2}, rng, -1, 1, true);
    Tensor k = random_tensor({3, 3, 2}, rng, -1, 1, true);
    Tensor b = random_tensor({2}, rng, -1, 1, true);
    const Tensor w = random_tensor({5, 5, 2}, rng);
    auto r = check_gradients([&] { return weighted_sum(ops::depthwise_conv2d(x, k, b), w); },
                             {{"x", x}, {"k", k}, {"b", b}}, rng);
    CHECK_MESSAGE(r.max_rel_err <= kOpGradTol, r.worst);
  }
}

TEST_CASE("backward") {
  SUBCASE("sum gives ones") {
    Tensor x = Tensor::from_data({2, 3}, {1, -2, 3, 4, 5, 6}, true);
    backward(ops::sum(x));
    for (float g : x.grad()) CHECK(g == 1.0f);
  }
  SUBCASE("sum of squares") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    backward(ops::sum(ops::mul(x, x)));
    CHECK(x.grad()[0] == 2.0f);
    CHECK(x.grad()[1] == 4.0f);
    CHECK(x.grad()[2] == 6.0f);
  }
  SUBCASE("second backward on the same graph is an error") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    const Tensor loss = ops::sum(ops::mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);
  }
  SUBCASE("non-scalar and detached losses are rejected") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    CHECK_THROWS_AS(backward(ops::scale(x, 2.0f)), DimensionError);
    CHECK_THROWS_AS(backward(ops::sum(Tensor::zeros({3}))), GraphError);
  }
  SUBCASE("intermediates receive gradients") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    const Tensor h = ops::scale(x, 3.0f);
    backward(ops::sum(h));
    CHECK(h.has_grad());
  }
  SUBCASE("shared subexpressions accumulate like duplicated subgraphs") {
    std::mt19937_64 rng(6);
    Tensor x1 = random_tensor({4}, rng, -1, 1, true);
    Tensor x2 = x1.detach();
    x2.set_requires_grad(true);
    const Tensor shared = ops::silu(ops::mul(x1, x1));
    backward(ops::sum(ops::mul(shared, ops::add(shared, shared))));
    const Tensor a = ops::silu(ops::mul(x2, x2));
    const Tensor b = ops::silu(ops::mul(x2, x2));
    const Tensor c = ops::silu(ops::mul(x2, x2));
    backward(ops::sum(ops::mul(a, ops::add(b, c))));
    for (int i = 0; i < 4; ++i) CHECK(x1.grad()[i] == doctest::Approx(x2.grad()[i]).epsilon(1e-6));
  }
  SUBCASE("no-grad guard records nothing") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    NoGradGuard guard;
    const Tensor y = ops::scale(x, 2.0f);
    CHECK_FALSE(y.requires_grad());
  }
  SUBCASE("composite MLP matches finite differences") {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({6, 5}, rng, -1, 1, true);
    Tensor w1 = random_tensor({5, 8}, rng, -0.5, 0.5, true);
    Tensor b1 = random_tensor({8}, rng, -0.5, 0.5, true);
    Tensor w2 = random_tensor({8, 3}, rng, -0.5, 0.5, true);
    Tensor g = Tensor::full({8}, 1.0f, true);
    Tensor beta = Tensor::zeros({8}, true);
    const Tensor target = random_tensor({6, 3}, rng);
    auto loss = [&] {
      const Tensor h = ops::silu(ops::layer_norm(ops::linear(x, w1, b1), g, beta));
      return ops::l1_loss(ops::matmul(h, w2), target);
    };
    auto r = check_gradients(loss, {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"g", g}, {"beta", beta}},
                             rng);
    CHECK_MESSAGE(r.max_rel_err <= kOpGradTol, r.worst);
  }
}

TEST_CASE("finite-difference property over random shapes") {
  std::uniform_int_distribution<int> extent(1, 5);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(100 + seed);
    // n >= 3: with two features layer_norm collapses to a near step function.
    const int64_t m = extent(rng), k = extent(rng), n = extent(rng) + 2;
    Tensor a = random_tensor({m, k}, rng, -1, 1, true);
    Tensor b = random_tensor({k, n}, rng, -1, 1, true);
    Tensor bias = random_tensor({n}, rng, -1, 1, true);
    Tensor c = random_tensor({m, n}, rng, -1, 1, true);
    Tensor gamma = random_tensor({n}, rng, 0.5, 1.5, true);
    Tensor beta = random_tensor({n}, rng, -0.5, 0.5, true);
    Tensor s = random_tensor({}, rng, -1, 1, true);
    const Tensor w = random_tensor({m, 2 * n}, rng);
    auto index = std::make_shared<std::vector<int64_t>>();
    for (int64_t r = m * 2 - 1; r >= 0; --r) index->push_back(r % m);
    auto loss = [&] {
      const Tensor lin = ops::linear(a, b, bias);
      const Tensor mixed = ops::sub(ops::mul(ops::softplus(lin), ops::exp(ops::scale(c, 0.5f))),
                                    ops::mul(s, ops::silu(c)));
      const Tensor normed = ops::layer_norm(ops::add(mixed, lin), gamma, beta);
      const Tensor cat = ops::concat_last(normed, ops::reshape(c, {m, n}));
      const Tensor g = ops::gather_rows(cat, index, 2 * n, {2 * m, 2 * n});
      return ops::add(ops::sum(ops::mul(ops::reshape(g, {m, 4 * n}),
                                        ops::reshape(ops::concat_last(w, w), {m, 4 * n}))),
                      ops::mean(ops::matmul(a, b)));
    };
    auto r = check_gradients(loss, {{"a", a}, {"b", b}, {"bias", bias}, {"c", c}, {"gamma", gamma},
                                    {"beta", beta}, {"s", s}},
                             rng);
    CHECK_MESSAGE(r.max_rel_err <= kOpGradTol, r.worst);
  }
}

TEST_CASE("gradient oracle flags a 1% error") {
  // silu with its backward scaled by 1.01.
  auto bad_silu = [](const Tensor& x) {
    std::vector<float> y(x.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] / (1.0f + std::exp(-x.data()[i]));
    return detail::make_result(
        x.shape(), std::move(y), {x},
        [](const detail::TensorImpl& out, const std::vector<std::shared_ptr<detail::TensorImpl>>& in) {
          auto& g = in[0]->grad_buffer();
          for (size_t i = 0; i < g.size(); ++i) {
            const float v = in[0]->data[i];
            const float sig = 1.0f / (1.0f + std::exp(-v));
            g[i] += 1.01f * out.grad[i] * sig * (1.0f + v * (1.0f - sig));
          }
        });
  };
  std::mt19937_64 rng(77);
  Tensor x = random_tensor({6}, rng, -1, 1, true);
  const Tensor w = random_tensor({6}, rng);
  auto good = check_gradients([&] { return testing::weighted_sum(ops::silu(x), w); }, {{"x", x}}, rng);
  auto bad = check_gradients([&] { return testing::weighted_sum(bad_silu(x), w); }, {{"x", x}}, rng);
  CHECK(good.max_rel_err <= kOpGradTol);
  CHECK(bad.max_rel_err > 5e-3);
}

TEST_CASE("gather_rows validates indices") {
  auto bad = std::make_shared<const std::vector<int64_t>>(std::vector<int64_t>{0, 5});
  CHECK_THROWS_AS(ops::gather_rows(Tensor::zeros({3, 2}), bad, 2, {2, 2}), DimensionError);
}

TEST_CASE("tensor table serialization") {
  std::mt19937_64 rng(8);
  SUBCASE("random tables round-trip bit-exactly") {
    for (int trial = 0; trial < 10; ++trial) {
      TensorTable table;
      table.metadata = "trial=" + std::to_string(trial) + "\nmodel.patch_size=2\n";
      std::uniform_int_distribution<int> rank(0, 4), extent(1, 4);
      for (int t = 0; t < 5; ++t) {
        Shape shape(static_cast<size_t>(rank(rng)));
        for (auto& e : shape) e = extent(rng);
        table.tensors.push_back({"tensor." + std::to_string(t), random_tensor(shape, rng, -1e3f, 1e3f)});
      }
      std::stringstream buf;
      write_tensor_table(buf, table);
      const TensorTable back = read_tensor_table(buf);
      CHECK(back.metadata == table.metadata);
      REQUIRE(back.tensors.size() == table.tensors.size());
      for (size_t i = 0; i < table.tensors.size(); ++i) {
        CHECK(back.tensors[i].name == table.tensors[i].name);
        CHECK(back.tensors[i].tensor.shape() == table.tensors[i].tensor.shape());
        CHECK(testing::bit_equal(back.tensors[i].tensor.data(), table.tensors[i].tensor.data()));
      }
    }
  }
  SUBCASE("layout is little-endian with the documented header") {
    TensorTable table;
    table.metadata = "m";
    table.tensors.push_back({"w", Tensor::from_data({2}, {1.0f, -2.0f})});
    std::stringstream buf;
    write_tensor_table(buf, table);
    const std::string bytes = buf.str();
    // magic(8) meta_len(4) meta(1) count(4) name_len(4) name(1) dtype(1) rank(4) extent(8) payload(8)
    REQUIRE(bytes.size() == 8 + 4 + 1 + 4 + 4 + 1 + 1 + 4 + 8 + 8);
    CHECK(bytes.substr(0, 8) == "SRPTTBL1");
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(static_cast<unsigned char>(bytes[22]) == kDtypeFloat32);
    // 1.0f = 0x3f800000 little-endian
    const size_t payload = bytes.size() - 8;
    CHECK(static_cast<unsigned char>(bytes[payload + 3]) == 0x3f);
    CHECK(static_cast<unsigned char>(bytes[payload + 2]) == 0x80);
  }
  SUBCASE("corrupt input is rejected") {
    std::stringstream bad("NOTATABLE");
    CHECK_THROWS_AS(read_tensor_table(bad), FormatError);
    TensorTable table;
    table.tensors.push_back({"w", Tensor::zeros({4})});
    std::stringstream buf;
    write_tensor_table(buf, table);
    std::stringstream truncated(buf.str().substr(0, buf.str().size() - 3));
    CHECK_THROWS_AS(read_tensor_table(truncated), FormatError);
  }
}
