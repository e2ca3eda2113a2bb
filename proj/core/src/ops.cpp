#include "dgrlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "dgrlab/parallel.hpp"

namespace dgrlab::ad {

using detail::Node;

namespace {

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(x.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

template <typename Fn>
Tensor unary(const Tensor& x, Fn&& value_and_slope) {
  const auto xs = x.data();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = value_and_slope(xs[i]).first;
  return detail_make(x.shape(), std::move(out), {x}, [value_and_slope](Node& self) {
    Node& in = input(self, 0);
    if (!in.requires_grad) return;
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * value_and_slope(in.value[i]).second;
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  parallel_for(
      0, m,
      [&](std::size_t i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          const double* brow = pb + p * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
      },
      k * n);
  return detail_make({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    const double* g = self.grad.data();
    if (na.requires_grad) {
      double* ga = na.grad_buffer().data();
      const double* pb = nb.value.data();
      parallel_for(
          0, m,
          [&](std::size_t i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* grow = g + i * n;
              const double* brow = pb + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          },
          k * n);
    }
    if (nb.requires_grad) {
      double* gb = nb.grad_buffer().data();
      const double* pa = na.value.data();
      parallel_for(
          0, k,
          [&](std::size_t p) {
            double* gbrow = gb + p * n;
            for (std::size_t i = 0; i < m; ++i) {
              const double av = pa[i * k + p];
              if (av == 0.0) continue;
              const double* grow = g + i * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
          },
          m * n);
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto xs = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xs[i * c + j];
  return detail_make({c, r}, std::move(out), {x}, [r, c](Node& self) {
    Node& in = input(self, 0);
    auto g = in.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
  return detail_make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& in = input(self, k);
      if (!in.requires_grad) continue;
      auto g = in.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
  return detail_make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
  return detail_make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(x, [factor](double v) { return std::pair{factor * v, factor}; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(x, [offset](double v) { return std::pair{v + offset, 1.0}; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0}; });
}

Tensor abs(const Tensor& x) {
  return unary(x, [](double v) {
    if (v > 0.0) return std::pair{v, 1.0};
    if (v < 0.0) return std::pair{-v, -1.0};
    return std::pair{0.0, 0.0};
  });
}

Tensor softplus(const Tensor& x) {
  return unary(x, [](double v) {
    const double value = std::log1p(std::exp(-std::fabs(v))) + std::max(v, 0.0);
    const double slope = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::pair{value, slope};
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match " +
                     to_string(x.shape()));
  }
  const auto xs = x.data(), bs = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xs[i * n + j] + bs[j];
  return detail_make(x.shape(), std::move(out), {x, bias}, [m, n](Node& self) {
    Node& nx = input(self, 0);
    Node& nb = input(self, 1);
    if (nx.requires_grad) {
      auto g = nx.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail_make({1}, {total}, {x}, [](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw ShapeError("mean_over_axis: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (d != axis) out_shape.push_back(shape[d]);
  if (out_shape.empty()) out_shape.push_back(1);

  const auto xs = x.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xs[(o * len + l) * inner + i];
  const double inv = 1.0 / static_cast<double>(len);
  for (auto& v : out) v *= inv;

  return detail_make(std::move(out_shape), std::move(out), {x}, [outer, inner, len, inv](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) g[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
  });
}

Tensor squared_l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape("squared_l2_distance", a, b);
  const auto as = a.data(), bs = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < as.size(); ++i) {
    const double d = as[i] - bs[i];
    total += d * d;
  }
  return detail_make({1}, {total}, {a, b}, [](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    const double g = self.grad[0];
    if (na.requires_grad) {
      auto ga = na.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * (na.value[i] - nb.value[i]);
    }
    if (nb.requires_grad) {
      auto gb = nb.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= 2.0 * g * (na.value[i] - nb.value[i]);
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const auto xs = x.data();
  return detail_make(std::move(shape), std::vector<double>(xs.begin(), xs.end()), {x}, [](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank("gather_rows", x, 2);
  const std::size_t m = x.dim(0), k = x.dim(1);
  for (auto r : rows) {
    if (r >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " +
                       to_string(x.shape()));
    }
  }
  const auto xs = x.data();
  std::vector<double> out(rows.size() * k);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(rows[i] * k), k, out.begin() + static_cast<std::ptrdiff_t>(i * k));
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return detail_make({rows.size(), k}, std::move(out), {x}, [index = std::move(index), k](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < k; ++c) g[index[i] * k + c] += self.grad[i * k + c];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != m) {
    throw ShapeError("concat_cols: row counts differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const auto as = a.data(), bs = b.data();
  std::vector<double> out(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(as.begin() + static_cast<std::ptrdiff_t>(i * p), p, out.begin() + static_cast<std::ptrdiff_t>(i * (p + q)));
    std::copy_n(bs.begin() + static_cast<std::ptrdiff_t>(i * q), q, out.begin() + static_cast<std::ptrdiff_t>(i * (p + q) + p));
  }
  return detail_make({m, p + q}, std::move(out), {a, b}, [m, p, q](Node& self) {
    Node& na = input(self, 0);
    Node& nb = input(self, 1);
    if (na.requires_grad) {
      auto g = na.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * (p + q) + j];
    }
    if (nb.requires_grad) {
      auto g = nb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += self.grad[i * (p + q) + p + j];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto xs = x.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xs[i * n + begin + j];
  return detail_make({m, w}, std::move(out), {x}, [m, n, w, begin](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor normalize_adjacency(const Tensor& adjacency) {
  require_rank("normalize_adjacency", adjacency, 2);
  const std::size_t n = adjacency.dim(0);
  if (adjacency.dim(1) != n) {
    throw ShapeError("normalize_adjacency: matrix must be square, got " + to_string(adjacency.shape()));
  }
  const auto as = adjacency.data();
  std::vector<double> m(as.begin(), as.end());
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] += 1.0;
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += m[i * n + j];
    if (!(d > 0.0)) {
      throw std::domain_error("normalize_adjacency: nonpositive degree in row " + std::to_string(i));
    }
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = inv_sqrt[i] * m[i * n + j] * inv_sqrt[j];

  return detail_make({n, n}, std::move(out), {adjacency},
                     [n, m = std::move(m), inv_sqrt = std::move(inv_sqrt)](Node& self) {
                       const double* g = self.grad.data();
                       // d out_ij / d s_k collects row k and column k contributions.
                       std::vector<double> degree_grad(n, 0.0);
                       for (std::size_t k = 0; k < n; ++k) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           gs += g[k * n + j] * m[k * n + j] * inv_sqrt[j];
                           gs += g[j * n + k] * inv_sqrt[j] * m[j * n + k];
                         }
                         const double s = inv_sqrt[k];
                         degree_grad[k] = gs * (-0.5) * s * s * s;
                       }
                       auto ga = input(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           ga[i * n + j] += g[i * n + j] * inv_sqrt[i] * inv_sqrt[j] + degree_grad[i];
                     });
}

namespace {

// C[m, n] += sum_k A[m, k] * B[k, n], row-major with leading dimensions.
// Columns are tiled so a strip of B stays in cache across rows of A; the
// summation order over k is fixed.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a, std::size_t lda,
                     const double* __restrict b, std::size_t ldb, double* __restrict c, std::size_t ldc) {
  constexpr std::size_t kTile = 128;
  for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
    const std::size_t j1 = std::min(n, j0 + kTile);
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * ldc;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = a[i * lda + kk];
        const double* brow = b + kk * ldb;
        for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// Four interleaved partial sums, combined in a fixed order.
double dot(const double* __restrict x, const double* __restrict y, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (std::size_t l = 0; l < 4; ++l) acc[l] += x[i + l] * y[i + l];
  for (; i < n; ++i) acc[i % 4] += x[i] * y[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), ksz = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != ksz || ksz % 2 == 0) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " incompatible with input " +
                     to_string(x.shape()));
  }
  if (bias.numel() != cout) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                     std::to_string(cout) + " output channels");
  }
  const std::size_t pad = ksz / 2;
  const std::size_t hw = h * w;
  const std::size_t rows = cin * ksz * ksz;

  // im2col per sample, kept for the backward pass.
  auto cols = std::make_shared<std::vector<double>>(batch * rows * hw, 0.0);
  const auto xs = x.data();
  const auto ws = weight.data();
  const auto bs = bias.data();
  std::vector<double> out(batch * cout * hw);
  parallel_for(
      0, batch,
      [&](std::size_t b) {
        double* col = cols->data() + b * rows * hw;
        const double* img = xs.data() + b * cin * hw;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < ksz; ++ky)
            for (std::size_t kx = 0; kx < ksz; ++kx) {
              double* dst = col + ((c * ksz + ky) * ksz + kx) * hw;
              for (std::size_t y = 0; y < h; ++y) {
                const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t xx = 0; xx < w; ++xx) {
                  const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(pad);
                  if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                  dst[y * w + xx] = img[c * hw + static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
                }
              }
            }
        double* o = out.data() + b * cout * hw;
        for (std::size_t co = 0; co < cout; ++co) std::fill_n(o + co * hw, hw, bs[co]);
        gemm_accumulate(cout, hw, rows, ws.data(), rows, col, hw, o, hw);
      },
      cout * rows * hw);

  return detail_make(
      {batch, cout, h, w}, std::move(out), {x, weight, bias},
      [batch, cin, h, w, cout, ksz, pad, hw, rows, cols](Node& self) {
        Node& nx = input(self, 0);
        Node& nw = input(self, 1);
        Node& nb = input(self, 2);
        const double* g = self.grad.data();
        const double* ws = nw.value.data();
        if (nw.requires_grad || nb.requires_grad) {
          // Per-sample partials summed in sample order keep results independent of threading.
          std::vector<double> partial_w(batch * cout * rows, 0.0);
          std::vector<double> partial_b(batch * cout, 0.0);
          parallel_for(
              0, batch,
              [&](std::size_t b) {
                const double* col = cols->data() + b * rows * hw;
                const double* gb = g + b * cout * hw;
                for (std::size_t co = 0; co < cout; ++co) {
                  const double* grow = gb + co * hw;
                  double bacc = 0.0;
                  for (std::size_t p = 0; p < hw; ++p) bacc += grow[p];
                  partial_b[b * cout + co] = bacc;
                }
                double* pw = partial_w.data() + b * cout * rows;
                for (std::size_t co = 0; co < cout; ++co)
                  for (std::size_t r = 0; r < rows; ++r) pw[co * rows + r] = dot(gb + co * hw, col + r * hw, hw);
              },
              cout * rows * hw);
          if (nw.requires_grad) {
            auto gw = nw.grad_buffer();
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < cout * rows; ++i) gw[i] += partial_w[b * cout * rows + i];
          }
          if (nb.requires_grad) {
            auto gbias = nb.grad_buffer();
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t co = 0; co < cout; ++co) gbias[co] += partial_b[b * cout + co];
          }
        }
        if (nx.requires_grad) {
          double* gx = nx.grad_buffer().data();
          std::vector<double> wt(rows * cout);
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t r = 0; r < rows; ++r) wt[r * cout + co] = ws[co * rows + r];
          parallel_for(
              0, batch,
              [&](std::size_t b) {
                std::vector<double> dcol(rows * hw, 0.0);
                const double* gb = g + b * cout * hw;
                gemm_accumulate(rows, hw, cout, wt.data(), cout, gb, hw, dcol.data(), hw);
                double* img = gx + b * cin * hw;
                for (std::size_t c = 0; c < cin; ++c)
                  for (std::size_t ky = 0; ky < ksz; ++ky)
                    for (std::size_t kx = 0; kx < ksz; ++kx) {
                      const double* src = dcol.data() + ((c * ksz + ky) * ksz + kx) * hw;
                      for (std::size_t y = 0; y < h; ++y) {
                        const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t xx = 0; xx < w; ++xx) {
                          const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(pad);
                          if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                          img[c * hw + static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] +=
                              src[y * w + xx];
                        }
                      }
                    }
              },
              cout * rows * hw);
        }
      });
}

Tensor avg_pool2(const Tensor& x) {
  require_rank("avg_pool2", x, 4);
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("avg_pool2: input too small, " + to_string(x.shape()));
  const auto xs = x.data();
  std::vector<double> out(batch * ch * oh * ow);
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const double* src = xs.data() + bc * h * w;
    double* dst = out.data() + bc * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const std::size_t s = 2 * y * w + 2 * xx;
        dst[y * ow + xx] = 0.25 * (src[s] + src[s + 1] + src[s + w] + src[s + w + 1]);
      }
  }
  return detail_make({batch, ch, oh, ow}, std::move(out), {x}, [batch, ch, h, w, oh, ow](Node& self) {
    auto g = input(self, 0).grad_buffer();
    for (std::size_t bc = 0; bc < batch * ch; ++bc) {
      double* dst = g.data() + bc * h * w;
      const double* src = self.grad.data() + bc * oh * ow;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double v = 0.25 * src[y * ow + xx];
          const std::size_t s = 2 * y * w + 2 * xx;
          dst[s] += v;
          dst[s + 1] += v;
          dst[s + w] += v;
          dst[s + w + 1] += v;
        }
    }
  });
}

}  // namespace dgrlab::ad
