#include "caver/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

namespace caver::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// Below these sizes the fork/join overhead dominates.
constexpr std::size_t kParallelMacThreshold = 1u << 15;
}  // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t p) {
    std::fill(c, c + m * p, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            const double* brow = b + kk * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
}

void transpose(const double* in, double* out, std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
}

void softmax_rows(double* x, std::size_t r, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        double* row = x + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
    }
}

void conv2d(const double* x, std::size_t h, std::size_t w_, std::size_t ci, const double* w,
            const double* bias, std::size_t co, std::size_t k, double* y) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
    std::vector<double> acc(co);
    for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w_; ++ox) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                    if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w_)) continue;
                    const double* xp = x + (static_cast<std::size_t>(yy) * w_ +
                                            static_cast<std::size_t>(xx)) *
                                               ci;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const double xv = xp[c];
                        const double* wp = w + (c * k + ky) * k + kx;
                        for (std::size_t o = 0; o < co; ++o)
                            acc[o] += xv * wp[o * ci * k * k];
                    }
                }
            }
            double* yp = y + (oy * w_ + ox) * co;
            for (std::size_t o = 0; o < co; ++o) yp[o] = acc[o] + (bias ? bias[o] : 0.0);
        }
    }
}

void batch_norm(const double* x, double* y, std::size_t n, std::size_t c, const double* mean,
                const double* var, const double* gamma, const double* beta, double eps) {
    std::vector<double> scale(c);
    for (std::size_t j = 0; j < c; ++j) scale[j] = gamma[j] / std::sqrt(var[j] + eps);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            y[i * c + j] = (x[i * c + j] - mean[j]) * scale[j] + beta[j];
}

namespace detail {

inline void bilinear_pixel(const double* x, std::size_t h, std::size_t w, std::size_t c,
                           std::size_t f, std::size_t oy, std::size_t ox, double* out) {
    const auto src = [f](std::size_t o, std::size_t extent) {
        double s = (static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5;
        return std::clamp(s, 0.0, static_cast<double>(extent - 1));
    };
    const double sy = src(oy, h);
    const double sx = src(ox, w);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t x0 = static_cast<std::size_t>(sx);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const std::size_t x1 = std::min(x0 + 1, w - 1);
    const double dy = sy - static_cast<double>(y0);
    const double dx = sx - static_cast<double>(x0);
    const double* p00 = x + (y0 * w + x0) * c;
    const double* p01 = x + (y0 * w + x1) * c;
    const double* p10 = x + (y1 * w + x0) * c;
    const double* p11 = x + (y1 * w + x1) * c;
    for (std::size_t j = 0; j < c; ++j) {
        const double top = (1.0 - dx) * p00[j] + dx * p01[j];
        const double bot = (1.0 - dx) * p10[j] + dx * p11[j];
        out[j] = (1.0 - dy) * top + dy * bot;
    }
}

}  // namespace detail

void bilinear_upsample(const double* x, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t f, double* y) {
    const std::size_t oh = h * f;
    const std::size_t ow = w * f;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            detail::bilinear_pixel(x, h, w, c, f, oy, ox, y + (oy * ow + ox) * c);
}

void relu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] < 0.0 ? 0.0 : x[i];
}

void sigmoid(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void scale(const double* x, double s, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = s * x[i];
}

void mix(double alpha, const double* a, double beta, const double* b, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = alpha * a[i] + beta * b[i];
}

}  // namespace serial

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t p) {
    if (!parallel_enabled() || m * k * p < kParallelMacThreshold) {
        serial::matmul(a, b, c, m, k, p);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t is = 0; is < static_cast<std::ptrdiff_t>(m); ++is) {
        const std::size_t i = static_cast<std::size_t>(is);
        double* crow = c + i * p;
        std::fill(crow, crow + p, 0.0);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a[i * k + kk];
            const double* brow = b + kk * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
        }
    }
}

void transpose(const double* in, double* out, std::size_t r, std::size_t c) {
    serial::transpose(in, out, r, c);
}

void softmax_rows(double* x, std::size_t r, std::size_t c) {
    if (!parallel_enabled() || r * c < kParallelMacThreshold) {
        serial::softmax_rows(x, r, c);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t is = 0; is < static_cast<std::ptrdiff_t>(r); ++is) {
        serial::softmax_rows(x + static_cast<std::size_t>(is) * c, 1, c);
    }
}

void conv2d(const double* x, std::size_t h, std::size_t w_, std::size_t ci, const double* w,
            const double* bias, std::size_t co, std::size_t k, double* y) {
    const std::size_t macs = h * w_ * ci * co * k * k;
    const bool par = parallel_enabled() && macs >= kParallelMacThreshold;
    // Repacked weights [ky][kx][ci][co] keep the inner loop over co
    // contiguous.  The per-output-element accumulation order over
    // (ky, kx, ci) is unchanged from the serial kernel, so results match
    // it bit for bit.
    std::vector<double> packed(k * k * ci * co);
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
                for (std::size_t kx = 0; kx < k; ++kx)
                    packed[((ky * k + kx) * ci + c) * co + o] = w[((o * ci + c) * k + ky) * k + kx];
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
#pragma omp parallel if (par)
    {
        std::vector<double> acc(co);
#pragma omp for schedule(static)
        for (std::ptrdiff_t pix = 0; pix < static_cast<std::ptrdiff_t>(h * w_); ++pix) {
            const std::size_t oy = static_cast<std::size_t>(pix) / w_;
            const std::size_t ox = static_cast<std::size_t>(pix) % w_;
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(oy + ky) - pad;
                if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox + kx) - pad;
                    if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w_)) continue;
                    const double* xp = x + (static_cast<std::size_t>(yy) * w_ +
                                            static_cast<std::size_t>(xx)) *
                                               ci;
                    const double* wp = packed.data() + (ky * k + kx) * ci * co;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const double xv = xp[c];
                        const double* wrow = wp + c * co;
                        for (std::size_t o = 0; o < co; ++o) acc[o] += xv * wrow[o];
                    }
                }
            }
            double* yp = y + static_cast<std::size_t>(pix) * co;
            for (std::size_t o = 0; o < co; ++o) yp[o] = acc[o] + (bias ? bias[o] : 0.0);
        }
    }
}

void batch_norm(const double* x, double* y, std::size_t n, std::size_t c, const double* mean,
                const double* var, const double* gamma, const double* beta, double eps) {
    if (!parallel_enabled() || n * c < kParallelMacThreshold) {
        serial::batch_norm(x, y, n, c, mean, var, gamma, beta, eps);
        return;
    }
    std::vector<double> scale(c);
    for (std::size_t j = 0; j < c; ++j) scale[j] = gamma[j] / std::sqrt(var[j] + eps);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t is = 0; is < static_cast<std::ptrdiff_t>(n); ++is) {
        const std::size_t i = static_cast<std::size_t>(is);
        for (std::size_t j = 0; j < c; ++j)
            y[i * c + j] = (x[i * c + j] - mean[j]) * scale[j] + beta[j];
    }
}

void bilinear_upsample(const double* x, std::size_t h, std::size_t w, std::size_t c,
                       std::size_t f, double* y) {
    const std::size_t oh = h * f;
    const std::size_t ow = w * f;
    if (!parallel_enabled() || oh * ow * c < kParallelMacThreshold) {
        serial::bilinear_upsample(x, h, w, c, f, y);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pix = 0; pix < static_cast<std::ptrdiff_t>(oh * ow); ++pix) {
        const std::size_t oy = static_cast<std::size_t>(pix) / ow;
        const std::size_t ox = static_cast<std::size_t>(pix) % ow;
        serial::detail::bilinear_pixel(x, h, w, c, f, oy, ox,
                                       y + static_cast<std::size_t>(pix) * c);
    }
}

namespace {

template <typename F>
void elementwise(std::size_t n, F&& f) {
    if (!parallel_enabled() || n < kParallelMacThreshold) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        f(static_cast<std::size_t>(i));
}

}  // namespace

void relu(const double* x, double* y, std::size_t n) {
    elementwise(n, [&](std::size_t i) { y[i] = x[i] < 0.0 ? 0.0 : x[i]; });
}

void sigmoid(const double* x, double* y, std::size_t n) {
    elementwise(n, [&](std::size_t i) { y[i] = 1.0 / (1.0 + std::exp(-x[i])); });
}

void add(const double* a, const double* b, double* y, std::size_t n) {
    elementwise(n, [&](std::size_t i) { y[i] = a[i] + b[i]; });
}

void scale(const double* x, double s, double* y, std::size_t n) {
    elementwise(n, [&](std::size_t i) { y[i] = s * x[i]; });
}

void mix(double alpha, const double* a, double beta, const double* b, double* y, std::size_t n) {
    elementwise(n, [&](std::size_t i) { y[i] = alpha * a[i] + beta * b[i]; });
}

}  // namespace caver::kernels
