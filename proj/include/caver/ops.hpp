#pragma once

#include <cstddef>
#include <vector>

#include "caver/tensor.hpp"

// Tensor-level operations: shape validation, dispatch to the raw kernels,
// and cost accounting (one count per fused multiply-add; see trace.hpp).

namespace caver::ops {

// a[M x K] * b[K x P]; counts M*K*P.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose2d(const Tensor& a);

// Row-wise stabilized softmax; counts nothing (exponentials are outside
// the multiply-add convention).
Tensor softmax_rows(const Tensor& a);

// x is [H][W][Ci], kernel [Co][Ci][k][k] with k in {1,3}, bias [Co] or
// null.  Zero padding (k-1)/2; counts H*W*Co*Ci*k^2.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias);

// Channels along the last axis; x of rank 2 [N][C] or rank 3 [H][W][C].
// Counts one per element.
Tensor batch_norm_infer(const Tensor& x, const Tensor& mean, const Tensor& var,
                        const Tensor& gamma, const Tensor& beta, double eps);

// x is [H][W][C]; counts four per output element (the four taps).
Tensor bilinear_upsample(const Tensor& x, std::size_t factor);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
// Counts one per element.
Tensor scale(const Tensor& a, double s);
// alpha*a + beta*b; counts two per element.
Tensor mix(double alpha, const Tensor& a, double beta, const Tensor& b);

// Concatenate rank-2 tensors along columns; rows must agree.
Tensor concat_cols(const std::vector<const Tensor*>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);

// Columns [c0, c1) of a rank-2 tensor, as a copy.
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);

}  // namespace caver::ops
