#pragma once

#include <cstddef>
#include <span>

#include "dgrlab/tensor.hpp"

namespace dgrlab::ad {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N] -> [M,N]
Tensor transpose(const Tensor& x);                // rank-2 only

// Elementwise, equal shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor softplus(const Tensor& x);

// [M,N] + [N], broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_over_axis(const Tensor& x, std::size_t axis);
Tensor squared_l2_distance(const Tensor& a, const Tensor& b);

// Layout. reshape keeps row-major order.
Tensor reshape(const Tensor& x, Shape shape);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);  // [M,K] -> [R,K]
Tensor concat_cols(const Tensor& a, const Tensor& b);                    // [M,P],[M,Q] -> [M,P+Q]
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

// D^{-1/2} (A + I) D^{-1/2} with D the row sums of A + I. Differentiable in A.
Tensor normalize_adjacency(const Tensor& adjacency);

// Same-padded, stride-1 convolution: x [B,Cin,H,W], weight [Cout,Cin,K,K]
// with odd K, bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);

// 2x2 average pooling with stride 2; trailing odd rows/columns are dropped.
Tensor avg_pool2(const Tensor& x);

}  // namespace dgrlab::ad
