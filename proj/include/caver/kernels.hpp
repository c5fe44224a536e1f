#pragma once

#include <cstddef>

// Raw compute kernels.  Every kernel exists twice: the namespace-level
// variant may parallelize with OpenMP across independent output elements,
// and kernels::serial holds the single-threaded reference.  Both use the
// same per-element accumulation order, so their results are bit-identical;
// tests and the benchmark tool rely on that.
//
// Layout conventions: matrices are row-major; feature maps are [H][W][C]
// (identical memory to an H*W x C token matrix in raster order); conv
// weights are [Co][Ci][k][k].

namespace caver::kernels {

// Whether namespace-level kernels are allowed to spawn OpenMP threads.
void set_parallel(bool on);
bool parallel_enabled();

// c[M x P] = a[M x K] * b[K x P].  Accumulates over k ascending.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t p);

// out[C x R] = in[R x C]^T.
void transpose(const double* in, double* out, std::size_t r, std::size_t c);

// Row-wise softmax in place over an R x C matrix, with max subtraction.
void softmax_rows(double* x, std::size_t r, std::size_t c);

// Cross-correlation with odd kernel size and zero padding of (k-1)/2, so
// spatial extents are preserved.  x is [H][W][Ci], w is [Co][Ci][k][k],
// bias is [Co] (may be null), y is [H][W][Co].  Accumulates per output
// element over (ky, kx, ci) ascending, then adds the bias.
void conv2d(const double* x, std::size_t h, std::size_t w_, std::size_t ci, const double* w,
            const double* bias, std::size_t co, std::size_t k, double* y);

// Inference batch norm over channel-last data [n x C]:
// y = (x - mean) * (gamma / sqrt(var + eps)) + beta.
void batch_norm(const double* x, double* y, std::size_t n, std::size_t c, const double* mean,
                const double* var, const double* gamma, const double* beta, double eps);

// Bilinear upsample by integer factor f, half-pixel sampling
// (src = (dst + 0.5) / f - 0.5, clamped).  x is [H][W][C], y is
// [f*H][f*W][C].
void bilinear_upsample(const double* x, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t f, double* y);

void relu(const double* x, double* y, std::size_t n);
void sigmoid(const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* x, double s, double* y, std::size_t n);
// y = alpha * a + beta * b.
void mix(double alpha, const double* a, double beta, const double* b, double* y, std::size_t n);

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t p);
void transpose(const double* in, double* out, std::size_t r, std::size_t c);
void softmax_rows(double* x, std::size_t r, std::size_t c);
void conv2d(const double* x, std::size_t h, std::size_t w_, std::size_t ci, const double* w,
            const double* bias, std::size_t co, std::size_t k, double* y);
void batch_norm(const double* x, double* y, std::size_t n, std::size_t c, const double* mean,
                const double* var, const double* gamma, const double* beta, double eps);
void bilinear_upsample(const double* x, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t f, double* y);
void relu(const double* x, double* y, std::size_t n);
void sigmoid(const double* x, double* y, std::size_t n);
void add(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* x, double s, double* y, std::size_t n);
void mix(double alpha, const double* a, double beta, const double* b, double* y, std::size_t n);

}  // namespace serial

}  // namespace caver::kernels
