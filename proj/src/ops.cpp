// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace serpent::ops {

using detail::TensorImpl;
using Inputs = std::vector<std::shared_ptr<TensorImpl>>;

namespace {

bool is_trailing(const Shape& small, const Shape& big) {
  if (shape_numel(small) == 1) return true;
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_trailing(b.shape(), a.shape())) return a.shape();
  if (is_trailing(a.shape(), b.shape())) return b.shape();
  throw DimensionError(std::string(op) + ": cannot broadcast " +
                       shape_str(a.shape()) + " with " + shape_str(b.shape()));
}

float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

template <typename Fn>
std::vector<float> map(std::span<const float> x, Fn fn) {
  std::vector<float> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "add");
  const size_t n = static_cast<size_t>(shape_numel(shape));
  const size_t na = a.data().size(), nb = b.data().size();
  std::vector<float> out(n);
  const auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < n; ++i) out[i] = ad[i % na] + bd[i % nb];
  return detail::make_result(
      std::move(shape), std::move(out), {a, b},
      [](const TensorImpl& o, const Inputs& in) {
        for (size_t k = 0; k < 2; ++k) {
          if (!in[k]->requires_grad) continue;
          auto& g = in[k]->grad_buffer();
          const size_t m = g.size();
          for (size_t i = 0; i < o.grad.size(); ++i) g[i % m] += o.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "sub");
  const size_t n = static_cast<size_t>(shape_numel(shape));
  const size_t na = a.data().size(), nb = b.data().size();
  std::vector<float> out(n);
  const auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < n; ++i) out[i] = ad[i % na] - bd[i % nb];
  return detail::make_result(
      std::move(shape), std::move(out), {a, b},
      [](const TensorImpl& o, const Inputs& in) {
        for (size_t k = 0; k < 2; ++k) {
          if (!in[k]->requires_grad) continue;
          const float sign = k == 0 ? 1.0f : -1.0f;
          auto& g = in[k]->grad_buffer();
          const size_t m = g.size();
          for (size_t i = 0; i < o.grad.size(); ++i) g[i % m] += sign * o.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape shape = broadcast_shape(a, b, "mul");
  const size_t n = static_cast<size_t>(shape_numel(shape));
  const size_t na = a.data().size(), nb = b.data().size();
  std::vector<float> out(n);
  const auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < n; ++i) out[i] = ad[i % na] * bd[i % nb];
  return detail::make_result(
      std::move(shape), std::move(out), {a, b},
      [](const TensorImpl& o, const Inputs& in) {
        const auto& x = in[0]->data;
        const auto& y = in[1]->data;
        const size_t nx = x.size(), ny = y.size();
        if (in[0]->requires_grad) {
          auto& g = in[0]->grad_buffer();
          for (size_t i = 0; i < o.grad.size(); ++i) g[i % nx] += o.grad[i] * y[i % ny];
        }
        if (in[1]->requires_grad) {
          auto& g = in[1]->grad_buffer();
          for (size_t i = 0; i < o.grad.size(); ++i) g[i % ny] += o.grad[i] * x[i % nx];
        }
      });
}

Tensor scale(const Tensor& x, float factor) {
  return detail::make_result(
      x.shape(), map(x.data(), [factor](float v) { return v * factor; }), {x},
      [factor](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
      });
}

Tensor silu(const Tensor& x) {
  return detail::make_result(
      x.shape(), map(x.data(), [](float v) { return v * sigmoid(v); }), {x},
      [](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        const auto& xs = in[0]->data;
        for (size_t i = 0; i < g.size(); ++i) {
          const float s = sigmoid(xs[i]);
          g[i] += o.grad[i] * s * (1.0f + xs[i] * (1.0f - s));
        }
      });
}

Tensor softplus(const Tensor& x) {
  auto f = [](float v) {
    return v > 0.0f ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  };
  return detail::make_result(
      x.shape(), map(x.data(), f), {x},
      [](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        const auto& xs = in[0]->data;
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * sigmoid(xs[i]);
      });
}

Tensor exp(const Tensor& x) {
  return detail::make_result(
      x.shape(), map(x.data(), [](float v) { return std::exp(v); }), {x},
      [](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * o.data[i];
      });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return detail::make_result(
      {}, {static_cast<float>(acc)}, {x},
      [](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        for (float& v : g) v += o.grad[0];
      });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("l1_loss: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  if (a.numel() == 0) throw DimensionError("l1_loss of empty tensors");
  double acc = 0.0;
  const auto ad = a.data(), bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) acc += std::fabs(ad[i] - bd[i]);
  const float inv_n = 1.0f / static_cast<float>(ad.size());
  return detail::make_result(
      {}, {static_cast<float>(acc * inv_n)}, {a, b},
      [inv_n](const TensorImpl& o, const Inputs& in) {
        const auto& x = in[0]->data;
        const auto& y = in[1]->data;
        const float go = o.grad[0] * inv_n;
        for (size_t k = 0; k < 2; ++k) {
          if (!in[k]->requires_grad) continue;
          auto& g = in[k]->grad_buffer();
          const float sign = k == 0 ? go : -go;
          for (size_t i = 0; i < g.size(); ++i) {
            const float d = x[i] - y[i];
            if (d > 0.0f) g[i] += sign;
            else if (d < 0.0f) g[i] -= sign;
          }
        }
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) +
                         " by " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<size_t>(m * n), 0.0f);
  detail::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
  return detail::make_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n](const TensorImpl& o, const Inputs& in) {
        if (in[0]->requires_grad) {
          detail::gemm_nt(m, n, k, o.grad.data(), in[1]->data.data(),
                          in[0]->grad_buffer().data());
        }
        if (in[1]->requires_grad) {
          detail::gemm_tn(m, k, n, in[0]->data.data(), o.grad.data(),
                          in[1]->grad_buffer().data());
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         " incompatible with weight " + shape_str(weight.shape()));
  }
  const int64_t k = weight.dim(0), n = weight.dim(1);
  const int64_t m = x.numel() / k;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != n)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) +
                         " does not match weight " + shape_str(weight.shape()));
  }
  std::vector<float> out(static_cast<size_t>(m * n), 0.0f);
  if (has_bias) {
    const auto bd = bias.data();
    for (int64_t r = 0; r < m; ++r) std::copy(bd.begin(), bd.end(), out.begin() + r * n);
  }
  detail::gemm_nn(m, k, n, x.data().data(), weight.data().data(), out.data());
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result(
      std::move(shape), std::move(out), inputs,
      [m, k, n](const TensorImpl& o, const Inputs& in) {
        if (in[0]->requires_grad) {
          detail::gemm_nt(m, n, k, o.grad.data(), in[1]->data.data(),
                          in[0]->grad_buffer().data());
        }
        if (in[1]->requires_grad) {
          detail::gemm_tn(m, k, n, in[0]->data.data(), o.grad.data(),
                          in[1]->grad_buffer().data());
        }
        if (in.size() > 2 && in[2]->requires_grad) {
          auto& g = in[2]->grad_buffer();
          for (int64_t r = 0; r < m; ++r) {
            const float* row = o.grad.data() + r * n;
            for (int64_t c = 0; c < n; ++c) g[c] += row[c];
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm on a scalar");
  const int64_t c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: channel count " + std::to_string(c) +
                         " vs gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()));
  }
  const int64_t rows = x.numel() / c;
  auto xhat = std::make_shared<std::vector<float>>(x.data().size());
  auto rstd = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  std::vector<float> out(x.data().size());
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xd.data() + r * c;
    double mu = 0.0;
    for (int64_t i = 0; i < c; ++i) mu += row[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(c);
    const float rs = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*rstd)[r] = rs;
    for (int64_t i = 0; i < c; ++i) {
      const float h = static_cast<float>(row[i] - mu) * rs;
      (*xhat)[r * c + i] = h;
      out[r * c + i] = h * gd[i] + bd[i];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat, rstd, rows, c](const TensorImpl& o, const Inputs& in) {
        const auto& gam = in[1]->data;
        if (in[1]->requires_grad) {
          auto& gg = in[1]->grad_buffer();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < c; ++i) gg[i] += o.grad[r * c + i] * (*xhat)[r * c + i];
        }
        if (in[2]->requires_grad) {
          auto& gb = in[2]->grad_buffer();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < c; ++i) gb[i] += o.grad[r * c + i];
        }
        if (!in[0]->requires_grad) return;
        auto& gx = in[0]->grad_buffer();
        for (int64_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (int64_t i = 0; i < c; ++i) {
            const double d = o.grad[r * c + i] * gam[i];
            mean_d += d;
            mean_dh += d * (*xhat)[r * c + i];
          }
          mean_d /= static_cast<double>(c);
          mean_dh /= static_cast<double>(c);
          const float rs = (*rstd)[r];
          for (int64_t i = 0; i < c; ++i) {
            const double d = o.grad[r * c + i] * gam[i];
            gx[r * c + i] += static_cast<float>(
                rs * (d - mean_d - (*xhat)[r * c + i] * mean_dh));
          }
        }
      });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels,
                        const Tensor& bias) {
  if (x.rank() != 3 || kernels.rank() != 3) {
    throw DimensionError("depthwise_conv2d: expected HxWxC input and kxkxC kernels, got " +
                         shape_str(x.shape()) + " and " + shape_str(kernels.shape()));
  }
  const int64_t k = kernels.dim(0);
  if (kernels.dim(1) != k || k % 2 == 0) {
    throw DimensionError("depthwise_conv2d: kernel must be square with odd size, got " +
                         shape_str(kernels.shape()));
  }
  const int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (kernels.dim(2) != c) {
    throw DimensionError("depthwise_conv2d: " + std::to_string(kernels.dim(2)) +
                         " kernels for " + std::to_string(c) + " channels");
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != c) {
    throw DimensionError("depthwise_conv2d: bias " + shape_str(bias.shape()));
  }
  const int64_t r = k / 2;
  const auto xd = x.data(), kd = kernels.data();
  std::vector<float> out(xd.size(), 0.0f);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      float* o = out.data() + (i * w + j) * c;
      if (has_bias) {
        const auto bd = bias.data();
        std::copy(bd.begin(), bd.end(), o);
      }
      for (int64_t a = 0; a < k; ++a) {
        const int64_t ii = i + a - r;
        if (ii < 0 || ii >= h) continue;
        for (int64_t b = 0; b < k; ++b) {
          const int64_t jj = j + b - r;
          if (jj < 0 || jj >= w) continue;
          const float* src = xd.data() + (ii * w + jj) * c;
          const float* kw = kd.data() + (a * k + b) * c;
          for (int64_t ch = 0; ch < c; ++ch) o[ch] += kw[ch] * src[ch];
        }
      }
    }
  }
  std::vector<Tensor> inputs{x, kernels};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result(
      x.shape(), std::move(out), inputs,
      [h, w, c, k, r](const TensorImpl& o, const Inputs& in) {
        const auto& xs = in[0]->data;
        const auto& ks = in[1]->data;
        float* gx = in[0]->requires_grad ? in[0]->grad_buffer().data() : nullptr;
        float* gk = in[1]->requires_grad ? in[1]->grad_buffer().data() : nullptr;
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const float* go = o.grad.data() + (i * w + j) * c;
            for (int64_t a = 0; a < k; ++a) {
              const int64_t ii = i + a - r;
              if (ii < 0 || ii >= h) continue;
              for (int64_t b = 0; b < k; ++b) {
                const int64_t jj = j + b - r;
                if (jj < 0 || jj >= w) continue;
                const int64_t src = (ii * w + jj) * c;
                const int64_t kof = (a * k + b) * c;
                for (int64_t ch = 0; ch < c; ++ch) {
                  if (gx) gx[src + ch] += go[ch] * ks[kof + ch];
                  if (gk) gk[kof + ch] += go[ch] * xs[src + ch];
                }
              }
            }
          }
        }
        if (in.size() > 2 && in[2]->requires_grad) {
          auto& gb = in[2]->grad_buffer();
          for (int64_t p = 0; p < h * w; ++p)
            for (int64_t ch = 0; ch < c; ++ch) gb[ch] += o.grad[p * c + ch];
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  return detail::make_result(
      std::move(shape), std::move(out), {x},
      [](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
      });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1) {
    throw DimensionError("concat_last: " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  for (int64_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError("concat_last: leading extents differ, " +
                           shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
  }
  const int64_t ca = a.dim(-1), cb = b.dim(-1);
  const int64_t rows = ca > 0 ? a.numel() / ca : b.numel() / std::max<int64_t>(cb, 1);
  std::vector<float> out(static_cast<size_t>(rows * (ca + cb)));
  const auto ad = a.data(), bd = b.data();
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(ad.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bd.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return detail::make_result(
      std::move(shape), std::move(out), {a, b},
      [rows, ca, cb](const TensorImpl& o, const Inputs& in) {
        if (in[0]->requires_grad) {
          auto& g = in[0]->grad_buffer();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < ca; ++i) g[r * ca + i] += o.grad[r * (ca + cb) + i];
        }
        if (in[1]->requires_grad) {
          auto& g = in[1]->grad_buffer();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t i = 0; i < cb; ++i) g[r * cb + i] += o.grad[r * (ca + cb) + ca + i];
        }
      });
}

Tensor gather_rows(const Tensor& x,
                   std::shared_ptr<const std::vector<int64_t>> index,
                   int64_t row_size, Shape shape) {
  if (row_size <= 0 || x.numel() % row_size != 0) {
    throw DimensionError("gather_rows: row size " + std::to_string(row_size) +
                         " does not divide " + shape_str(x.shape()));
  }
  const int64_t in_rows = x.numel() / row_size;
  const int64_t out_rows = static_cast<int64_t>(index->size());
  if (shape_numel(shape) != out_rows * row_size) {
    throw DimensionError("gather_rows: " + std::to_string(out_rows) + " rows of " +
                         std::to_string(row_size) + " do not fill " + shape_str(shape));
  }
  std::vector<float> out(static_cast<size_t>(out_rows * row_size));
  const auto xd = x.data();
  for (int64_t r = 0; r < out_rows; ++r) {
    const int64_t src = (*index)[r];
    if (src < 0 || src >= in_rows) throw DimensionError("gather_rows: index out of range");
    std::copy_n(xd.data() + src * row_size, row_size, out.data() + r * row_size);
  }
  return detail::make_result(
      std::move(shape), std::move(out), {x},
      [index, row_size](const TensorImpl& o, const Inputs& in) {
        auto& g = in[0]->grad_buffer();
        for (size_t r = 0; r < index->size(); ++r) {
          float* dst = g.data() + (*index)[r] * row_size;
          const float* src = o.grad.data() + r * row_size;
          for (int64_t i = 0; i < row_size; ++i) dst[i] += src[i];
        }
      });
}

}  // namespace serpent::ops
