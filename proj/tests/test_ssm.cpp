// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "serpent/ops.hpp"
#include "serpent/ssm.hpp"
#include "support.hpp"

using namespace serpent;
using namespace serpent::ssm;
using serpent::testing::check_gradients;
using serpent::testing::random_tensor;
using serpent::testing::random_vector;
using serpent::testing::rel_linf;

namespace {

constexpr double kModeTol = 1e-5;
constexpr double kScanGradTol = 2e-3;

LtiSystem random_system(int64_t n, std::mt19937_64& rng) {
  LtiSystem sys;
  std::uniform_real_distribution<float> a(-3.0f, -0.05f);
  for (int64_t i = 0; i < n; ++i) sys.A.push_back(a(rng));
  sys.B = random_vector(static_cast<size_t>(n), rng);
  sys.C = random_vector(static_cast<size_t>(n), rng);
  sys.delta = std::uniform_real_distribution<float>(0.01f, 0.5f)(rng);
  return sys;
}

// Brute force y_k = Σ_{j<=k} Σ_i C_i Ā_i^(k-j) B̄_i u_j in double.
std::vector<double> brute_force_lti(const DiscreteSystem& d, std::span<const float> u) {
  std::vector<double> y(u.size(), 0.0);
  for (size_t k = 0; k < u.size(); ++k) {
    for (size_t j = 0; j <= k; ++j) {
      for (size_t i = 0; i < d.A_bar.size(); ++i) {
        y[k] += static_cast<double>(d.C[i]) * std::pow(static_cast<double>(d.A_bar[i]), k - j) *
                d.B_bar[i] * u[j];
      }
    }
  }
  return y;
}

float inverse_softplus(float y) { return static_cast<float>(y + std::log(-std::expm1(-y))); }

}  // namespace

TEST_CASE("discretize_zoh closed forms") {
  SUBCASE("A = 0 uses the first order limit") {
    const std::vector<float> a{0.0f}, b{1.0f};
    auto r = discretize_zoh(a, b, 0.5f);
    CHECK(r.A_bar[0] == 1.0f);
    CHECK(r.B_bar[0] == doctest::Approx(0.5).epsilon(1e-7));
  }
  SUBCASE("A = -1, delta = 0.1") {
    const std::vector<float> a{-1.0f}, b{1.0f};
    auto r = discretize_zoh(a, b, 0.1f);
    CHECK(r.A_bar[0] == doctest::Approx(std::exp(-0.1)).epsilon(1e-6));
    CHECK(r.B_bar[0] == doctest::Approx(1.0 - std::exp(-0.1)).epsilon(1e-6));
    CHECK(r.A_bar[0] == doctest::Approx(0.904837).epsilon(1e-6));
    CHECK(r.B_bar[0] == doctest::Approx(0.095163).epsilon(1e-5));
  }
  SUBCASE("tiny |delta A| matches the closed form") {
    const std::vector<float> a{-1e-4f}, b{2.0f};
    auto r = discretize_zoh(a, b, 1e-3f);
    const double z = -1e-7;
    CHECK(r.B_bar[0] == doctest::Approx(2.0 * std::expm1(z) / -1e-4).epsilon(1e-6));
  }
  SUBCASE("0 < A_bar < 1 for stable systems") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
      auto sys = random_system(4, rng);
      auto d = discretize(sys);
      for (float v : d.A_bar) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
      }
    }
  }
  SUBCASE("non-positive delta is rejected") {
    const std::vector<float> a{-1.0f}, b{1.0f};
    CHECK_THROWS_AS(discretize_zoh(a, b, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(discretize_zoh(a, b, -0.1f), std::invalid_argument);
  }
  SUBCASE("mismatched lengths are rejected") {
    const std::vector<float> a{-1.0f, -2.0f}, b{1.0f};
    CHECK_THROWS_AS(discretize_zoh(a, b, 0.1f), DimensionError);
  }
}

TEST_CASE("LtiSystem validation") {
  LtiSystem sys{{-1.0f}, {1.0f}, {1.0f}, 0.1f, std::nullopt};
  CHECK_NOTHROW(sys.validate());
  sys.A[0] = 0.5f;
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
  sys.A[0] = -1.0f;
  sys.delta = 0.0f;
  CHECK_THROWS_AS(sys.validate(), std::invalid_argument);
}

TEST_CASE("lti_kernel fixtures") {
  SUBCASE("A_bar = 0 gives one tap") {
    DiscreteSystem d{{0.0f, 0.0f}, {0.5f, 2.0f}, {3.0f, -1.0f}};
    auto k = lti_kernel(d, 5);
    REQUIRE(k.taps.size() == 5);
    CHECK(k.taps[0] == doctest::Approx(3.0 * 0.5 - 2.0));
    for (size_t j = 1; j < 5; ++j) CHECK(k.taps[j] == 0.0f);
  }
  SUBCASE("geometric series") {
    DiscreteSystem d{{0.5f}, {1.0f}, {1.0f}};
    auto k = lti_kernel(d, 3);
    REQUIRE(k.taps.size() == 3);
    CHECK(k.taps[0] == 1.0f);
    CHECK(k.taps[1] == 0.5f);
    CHECK(k.taps[2] == 0.25f);
  }
  SUBCASE("single state taps decay monotonically") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
      auto d = discretize(random_system(1, rng));
      auto k = lti_kernel(d, 32);
      for (size_t j = 0; j + 1 < k.taps.size(); ++j) {
        CHECK(std::fabs(k.taps[j + 1]) <= std::fabs(k.taps[j]));
      }
    }
  }
  SUBCASE("first tap is C . B_bar") {
    std::mt19937_64 rng(12);
    auto d = discretize(random_system(6, rng));
    double cb = 0.0;
    for (size_t i = 0; i < 6; ++i) cb += static_cast<double>(d.C[i]) * d.B_bar[i];
    CHECK(lti_kernel(d, 4).taps[0] == doctest::Approx(cb).epsilon(1e-6));
  }
  SUBCASE("non-positive length is rejected") {
    DiscreteSystem d{{0.5f}, {1.0f}, {1.0f}};
    CHECK_THROWS(lti_kernel(d, 0));
  }
}

TEST_CASE("LTI scans") {
  std::mt19937_64 rng(21);
  SUBCASE("impulse response equals the kernel") {
    for (int64_t n : {1, 3, 8}) {
      auto d = discretize(random_system(n, rng));
      std::vector<float> u(16, 0.0f);
      u[0] = 1.0f;
      const auto k = lti_kernel(d, 16);
      const auto yr = lti_scan_recurrent(d, u);
      const auto yc = lti_scan_convolutional(d, u);
      CHECK(rel_linf(yr, k.taps) <= kModeTol);
      CHECK(rel_linf(yc, k.taps) <= kModeTol);
    }
  }
  SUBCASE("zero input gives zero output in every mode") {
    auto d = discretize(random_system(4, rng));
    std::vector<float> u(10, 0.0f);
    for (auto mode : {ScanMode::recurrent(), ScanMode::convolutional(), ScanMode::chunked(3)}) {
      for (float v : lti_scan(d, u, mode)) CHECK(v == 0.0f);
    }
  }
  SUBCASE("empty sequence is rejected") {
    auto d = discretize(random_system(2, rng));
    std::vector<float> u;
    CHECK_THROWS_AS(lti_scan_recurrent(d, u), DimensionError);
    CHECK_THROWS_AS(lti_scan_convolutional(d, u), DimensionError);
  }
  SUBCASE("N=2, L=6 recurrent equals convolutional") {
    auto d = discretize(random_system(2, rng));
    const auto u = random_vector(6, rng);
    CHECK(rel_linf(lti_scan_recurrent(d, u), lti_scan_convolutional(d, u)) <= kModeTol);
  }
  SUBCASE("linearity") {
    auto d = discretize(random_system(5, rng));
    const auto u = random_vector(20, rng);
    std::vector<float> u2(u.size());
    for (size_t i = 0; i < u.size(); ++i) u2[i] = 2.0f * u[i];
    const auto y = lti_scan_recurrent(d, u);
    const auto y2 = lti_scan_recurrent(d, u2);
    std::vector<float> y_scaled(y.size());
    for (size_t i = 0; i < y.size(); ++i) y_scaled[i] = 2.0f * y[i];
    CHECK(rel_linf(y2, y_scaled) <= 1e-6);
  }
}

TEST_CASE("mode equivalence over random stable systems") {
  std::mt19937_64 rng(31);
  int systems = 0;
  for (int64_t n : {1, 2, 4, 8}) {
    for (int64_t len : {1, 4, 16, 64}) {
      for (int rep = 0; rep < 4; ++rep, ++systems) {
        CAPTURE(n);
        CAPTURE(len);
        const auto d = discretize(random_system(n, rng));
        const auto u = random_vector(static_cast<size_t>(len), rng);
        const auto rec = lti_scan(d, u, ScanMode::recurrent());
        const auto conv = lti_scan(d, u, ScanMode::convolutional());
        const auto chunk = lti_scan(d, u, ScanMode::chunked(5));
        CHECK(rel_linf(conv, rec) <= kModeTol);
        CHECK(rel_linf(chunk, rec) <= kModeTol);
        const auto oracle = brute_force_lti(d, u);
        std::vector<float> oracle_f(oracle.begin(), oracle.end());
        CHECK(rel_linf(rec, oracle_f) <= kModeTol);
      }
    }
  }
  CHECK(systems >= 50);
}

TEST_CASE("LTI causality") {
  std::mt19937_64 rng(41);
  auto d = discretize(random_system(4, rng));
  auto u = random_vector(24, rng);
  const auto y = lti_scan_recurrent(d, u);
  const auto yc = lti_scan_convolutional(d, u);
  u[10] += 1.0f;
  const auto y2 = lti_scan_recurrent(d, u);
  const auto yc2 = lti_scan_convolutional(d, u);
  for (size_t k = 0; k < 10; ++k) {
    CHECK(y[k] == y2[k]);
    CHECK(yc[k] == yc2[k]);
  }
  CHECK(y[10] != y2[10]);
}

TEST_CASE("selective parameter initialisation") {
  std::mt19937_64 rng(51);
  auto p = init_selective_params(6, 4, rng);
  CHECK(p.channels() == 6);
  CHECK(p.state_dim() == 4);
  for (int64_t d = 0; d < 6; ++d)
    for (int64_t i = 0; i < 4; ++i) CHECK(p.A.at({d, i}) == -static_cast<float>(i + 1));
  for (float b : p.bias_delta.data()) {
    const double dt = std::log1p(std::exp(static_cast<double>(b)));
    CHECK(dt >= 1e-3 * (1 - 1e-5));
    CHECK(dt <= 1e-1 * (1 + 1e-5));
  }
  CHECK_THROWS(init_selective_params(0, 4, rng));
  CHECK_THROWS(init_selective_params(3, 0, rng));
}

TEST_CASE("selective scan shape checks") {
  std::mt19937_64 rng(52);
  auto p = init_selective_params(3, 2, rng);
  CHECK_THROWS_AS(selective_scan(p, Tensor::zeros({5, 4})), DimensionError);
  CHECK_THROWS_AS(selective_scan(p, Tensor::zeros({5})), DimensionError);
  CHECK_THROWS_AS(selective_scan(p, Tensor::zeros({0, 3})), DimensionError);
  CHECK_THROWS_AS(selective_scan(p, Tensor::zeros({5, 3}), ScanMode::convolutional()),
                  std::invalid_argument);
  CHECK_THROWS_AS(selective_scan_chunked(p, Tensor::zeros({5, 3}), 0), std::invalid_argument);
  CHECK_THROWS_AS(ScanMode::chunked(0), std::invalid_argument);
  auto bad = p;
  bad.W_delta = Tensor::zeros({3});
  CHECK_THROWS_AS(selective_scan(bad, Tensor::zeros({5, 3})), DimensionError);
}

TEST_CASE("zero selection weights and zero B bias give zero output") {
  std::mt19937_64 rng(53);
  auto p = init_selective_params(4, 3, rng);
  p.W_B = Tensor::zeros({4, 3});
  p.W_C = Tensor::zeros({4, 3});
  p.W_delta = Tensor::zeros({4, 4});
  p.bias_C = random_tensor({3}, rng);
  const Tensor y = selective_scan(p, random_tensor({12, 4}, rng));
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("selective scan with constant projections reduces to the LTI scan") {
  std::mt19937_64 rng(54);
  for (int rep = 0; rep < 10; ++rep) {
    const int64_t e = 3, n = 1 + rep % 5, len = 40;
    auto p = init_selective_params(e, n, rng);
    p.W_B = Tensor::zeros({e, n});
    p.W_C = Tensor::zeros({e, n});
    p.W_delta = Tensor::zeros({e, e});
    p.bias_B = random_tensor({n}, rng);
    p.bias_C = random_tensor({n}, rng);
    std::vector<float> dts(static_cast<size_t>(e));
    for (auto& dt : dts) dt = std::uniform_real_distribution<float>(0.01f, 0.3f)(rng);
    std::vector<float> bias(static_cast<size_t>(e));
    for (size_t d = 0; d < dts.size(); ++d) bias[d] = inverse_softplus(dts[d]);
    p.bias_delta = Tensor::from_data({e}, bias);
    p.A = random_tensor({e, n}, rng, -2.0f, -0.1f);
    const Tensor U = random_tensor({len, e}, rng);
    const Tensor Y = selective_scan(p, U);

    for (int64_t d = 0; d < e; ++d) {
      LtiSystem sys;
      for (int64_t i = 0; i < n; ++i) sys.A.push_back(p.A.at({d, i}));
      sys.B.assign(p.bias_B.data().begin(), p.bias_B.data().end());
      sys.C.assign(p.bias_C.data().begin(), p.bias_C.data().end());
      // Δ as the scan sees it: softplus of the stored f32 bias.
      sys.delta = ops::softplus(Tensor::from_data({1}, {bias[static_cast<size_t>(d)]})).data()[0];
      std::vector<float> u(static_cast<size_t>(len)), y(static_cast<size_t>(len));
      for (int64_t k = 0; k < len; ++k) {
        u[static_cast<size_t>(k)] = U.at({k, d});
        y[static_cast<size_t>(k)] = Y.at({k, d});
      }
      CHECK(rel_linf(y, lti_scan_recurrent(discretize(sys), u)) <= 1e-6);
    }
  }
}

TEST_CASE("selective scan is causal") {
  std::mt19937_64 rng(55);
  auto p = init_selective_params(3, 4, rng);
  Tensor U = random_tensor({16, 3}, rng);
  const Tensor y1 = selective_scan(p, U);
  for (int64_t k : {0, 5, 15}) {
    Tensor V = Tensor::from_data(U.shape(), {U.data().begin(), U.data().end()});
    V.mutable_data()[static_cast<size_t>(k * 3 + 1)] += 0.7f;
    for (auto mode : {ScanMode::recurrent(), ScanMode::chunked(4)}) {
      const Tensor y2 = selective_scan(p, V, mode);
      for (int64_t t = 0; t < k * 3; ++t) CHECK(y1.data()[t] == y2.data()[t]);
    }
  }
}

TEST_CASE("selective scan gradients match finite differences") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(600 + seed);
    auto p = init_selective_params(3, 4, rng, true);
    // Larger steps than the init range so every term contributes.
    for (float& b : p.bias_delta.mutable_data()) b = std::uniform_real_distribution<float>(-1.5f, 0.5f)(rng);
    for (float& b : p.bias_B.mutable_data()) b = std::uniform_real_distribution<float>(-0.5f, 0.5f)(rng);
    Tensor U = random_tensor({8, 3}, rng, -1, 1, true);
    auto loss = [&] { return ops::sum(selective_scan(p, U)); };
    auto r = check_gradients(loss,
                             {{"U", U}, {"W_B", p.W_B}, {"W_C", p.W_C}, {"W_delta", p.W_delta},
                              {"bias_delta", p.bias_delta}, {"bias_B", p.bias_B},
                              {"bias_C", p.bias_C}, {"A", p.A}},
                             rng);
    CHECK_MESSAGE(r.max_rel_err <= kScanGradTol, r.worst);
  }
}

TEST_CASE("scan core gradients including the A limit branch") {
  std::mt19937_64 rng(71);
  const int64_t len = 6, e = 2, n = 3;
  Tensor u = random_tensor({len, e}, rng, -1, 1, true);
  Tensor delta = random_tensor({len, e}, rng, 0.05f, 0.6f, true);
  Tensor A = Tensor::from_data({e, n}, {-1.0f, -0.2f, -3.0f, -0.5f, -2.0f, -0.05f}, true);
  Tensor B = random_tensor({len, n}, rng, -1, 1, true);
  Tensor C = random_tensor({len, n}, rng, -1, 1, true);
  const Tensor w = random_tensor({len, e}, rng);
  for (int64_t chunk : {0, 2}) {
    CAPTURE(chunk);
    auto loss = [&] { return testing::weighted_sum(selective_scan_core(u, delta, A, B, C, chunk), w); };
    auto r = check_gradients(loss, {{"u", u}, {"delta", delta}, {"A", A}, {"B", B}, {"C", C}}, rng);
    CHECK_MESSAGE(r.max_rel_err <= kScanGradTol, r.worst);
  }
}

TEST_CASE("chunked selective scan equals the sequential scan") {
  std::mt19937_64 rng(81);
  const int64_t len = 50;
  auto p = init_selective_params(4, 5, rng);
  const Tensor U = random_tensor({len, 4}, rng);
  const Tensor ref = selective_scan(p, U);
  for (int64_t chunk : {int64_t{1}, int64_t{4}, int64_t{16}, len, len + 7}) {
    CAPTURE(chunk);
    const Tensor y = selective_scan_chunked(p, U, chunk);
    CHECK(rel_linf(y.data(), ref.data()) <= kModeTol);
  }
  CHECK(rel_linf(selective_scan_chunked(p, U, 1).data(),
                 selective_scan_chunked(p, U, 16).data()) <= kModeTol);
  CHECK(testing::bit_equal(selective_scan_chunked(p, U, len).data(), ref.data()));
}

TEST_CASE("chunked gradients equal sequential gradients") {
  std::mt19937_64 rng(82);
  auto p = init_selective_params(3, 2, rng, true);
  Tensor U = random_tensor({20, 3}, rng, -1, 1, true);
  backward(ops::sum(selective_scan(p, U)));
  const std::vector<float> g_seq(U.grad().begin(), U.grad().end());
  const std::vector<float> gw_seq(p.W_B.grad().begin(), p.W_B.grad().end());
  U.zero_grad();
  p.W_B.zero_grad();
  backward(ops::sum(selective_scan_chunked(p, U, 7)));
  CHECK(rel_linf(U.grad(), g_seq) <= kModeTol);
  CHECK(rel_linf(p.W_B.grad(), gw_seq) <= kModeTol);
}

TEST_CASE("scan work is linear in sequence length") {
  std::mt19937_64 rng(91);
  auto p = init_selective_params(4, 6, rng);
  for (int64_t chunk : {int64_t{0}, int64_t{8}}) {
    for (int64_t len : {64, 256, 1024}) {
      ScanStats s1, s2;
      const Tensor U1 = random_tensor({len, 4}, rng);
      const Tensor U2 = random_tensor({2 * len, 4}, rng);
      if (chunk == 0) {
        selective_scan(p, U1, &s1);
        selective_scan(p, U2, &s2);
      } else {
        selective_scan_chunked(p, U1, chunk, &s1);
        selective_scan_chunked(p, U2, chunk, &s2);
        CHECK(s1.peak_buffer == s2.peak_buffer);
      }
      const double ratio = static_cast<double>(s2.total()) / static_cast<double>(s1.total());
      CAPTURE(len);
      CHECK(ratio >= 1.9);
      CHECK(ratio <= 2.1);
    }
  }
}

TEST_CASE("long sequences stay finite and bounded") {
  std::mt19937_64 rng(101);
  const int64_t len = 4096, e = 2;
  auto p = init_selective_params(e, 4, rng);
  std::normal_distribution<float> step(0.0f, 0.05f);
  std::vector<float> walk(static_cast<size_t>(len * e));
  float level[2] = {0.0f, 0.0f};
  for (int64_t k = 0; k < len; ++k) {
    for (int64_t d = 0; d < e; ++d) {
      level[d] = std::clamp(level[d] + step(rng), -1.0f, 1.0f);
      walk[static_cast<size_t>(k * e + d)] = level[d];
    }
  }
  const Tensor y = selective_scan(p, Tensor::from_data({len, e}, walk));
  double peak = 0.0;
  for (float v : y.data()) {
    REQUIRE(std::isfinite(v));
    peak = std::max(peak, std::fabs(static_cast<double>(v)));
  }
  CHECK(peak < 1e3);

  DiscreteSystem d = discretize(LtiSystem{{-0.01f, -1.0f}, {1.0f, 1.0f}, {1.0f, 1.0f}, 0.1f, {}});
  std::vector<float> ones(static_cast<size_t>(len), 1.0f);
  for (float v : lti_scan_recurrent(d, ones)) REQUIRE(std::isfinite(v));
}
