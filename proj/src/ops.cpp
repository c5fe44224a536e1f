#include "caver/ops.hpp"

#include "caver/errors.hpp"
#include "caver/kernels.hpp"
#include "caver/trace.hpp"

namespace caver::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(detail::msg(what, ": expected rank ", rank, ", got ", shape_string(t)));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.extent(1) != b.extent(0))
        throw ShapeError(detail::msg("matmul: inner extents differ, ", shape_string(a), " vs ",
                                     shape_string(b)));
    const std::size_t m = a.extent(0), k = a.extent(1), p = b.extent(1);
    Tensor c({m, p});
    kernels::matmul(a.data(), b.data(), c.data(), m, k, p);
    trace::add_macs(static_cast<std::uint64_t>(m) * k * p);
    return c;
}

Tensor transpose2d(const Tensor& a) {
    require_rank(a, 2, "transpose2d");
    Tensor out({a.extent(1), a.extent(0)});
    kernels::transpose(a.data(), out.data(), a.extent(0), a.extent(1));
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require_rank(a, 2, "softmax_rows");
    Tensor out = a;
    kernels::softmax_rows(out.data(), out.extent(0), out.extent(1));
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias) {
    require_rank(x, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    const std::size_t h = x.extent(0), w = x.extent(1), ci = x.extent(2);
    const std::size_t co = kernel.extent(0), k = kernel.extent(2);
    if (kernel.extent(1) != ci)
        throw ShapeError(detail::msg("conv2d: input has ", ci, " channels but kernel expects ",
                                     kernel.extent(1)));
    if (kernel.extent(3) != k || (k != 1 && k != 3))
        throw ShapeError(detail::msg("conv2d: unsupported kernel size in ", shape_string(kernel),
                                     " (square 1 or 3 required)"));
    if (bias) {
        require_rank(*bias, 1, "conv2d bias");
        if (bias->extent(0) != co)
            throw ShapeError(detail::msg("conv2d: bias has ", bias->extent(0),
                                         " channels, kernel emits ", co));
    }
    Tensor y({h, w, co});
    kernels::conv2d(x.data(), h, w, ci, kernel.data(), bias ? bias->data() : nullptr, co, k,
                    y.data());
    trace::add_macs(static_cast<std::uint64_t>(h) * w * co * ci * k * k);
    return y;
}

Tensor batch_norm_infer(const Tensor& x, const Tensor& mean, const Tensor& var,
                        const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 2)
        throw ShapeError(detail::msg("batch_norm: need rank 2 or 3, got ", shape_string(x)));
    const std::size_t c = x.extent(x.rank() - 1);
    const std::size_t n = x.size() / c;
    for (const Tensor* t : {&mean, &var, &gamma, &beta}) {
        require_rank(*t, 1, "batch_norm parameter");
        if (t->extent(0) != c)
            throw ShapeError(detail::msg("batch_norm: parameter extent ", t->extent(0),
                                         " does not match ", c, " channels"));
    }
    if (eps <= 0.0) throw NumericError("batch_norm: eps must be positive");
    for (std::size_t j = 0; j < c; ++j)
        if (var(j) < 0.0)
            throw NumericError(detail::msg("batch_norm: negative variance at channel ", j));
    Tensor y(x.shape());
    kernels::batch_norm(x.data(), y.data(), n, c, mean.data(), var.data(), gamma.data(),
                        beta.data(), eps);
    trace::add_macs(x.size());
    return y;
}

Tensor bilinear_upsample(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "bilinear_upsample");
    if (factor == 0) throw ShapeError("bilinear_upsample: factor must be at least 1");
    const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
    Tensor y({h * factor, w * factor, c});
    kernels::bilinear_upsample(x.data(), h, w, c, factor, y.data());
    trace::add_macs(4 * y.size());
    return y;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    kernels::relu(x.data(), y.data(), x.size());
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    kernels::sigmoid(x.data(), y.data(), x.size());
    return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(
            detail::msg("add: shapes differ, ", shape_string(a), " vs ", shape_string(b)));
    Tensor y(a.shape());
    kernels::add(a.data(), b.data(), y.data(), a.size());
    return y;
}

Tensor scale(const Tensor& a, double s) {
    Tensor y(a.shape());
    kernels::scale(a.data(), s, y.data(), a.size());
    trace::add_macs(a.size());
    return y;
}

Tensor mix(double alpha, const Tensor& a, double beta, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(
            detail::msg("mix: shapes differ, ", shape_string(a), " vs ", shape_string(b)));
    Tensor y(a.shape());
    kernels::mix(alpha, a.data(), beta, b.data(), y.data(), a.size());
    trace::add_macs(2 * a.size());
    return y;
}

Tensor concat_cols(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts[0]->extent(0);
    std::size_t cols = 0;
    for (const Tensor* t : parts) {
        require_rank(*t, 2, "concat_cols input");
        if (t->extent(0) != rows)
            throw ShapeError(detail::msg("concat_cols: row counts differ, ", rows, " vs ",
                                         t->extent(0)));
        cols += t->extent(1);
    }
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t off = 0;
        for (const Tensor* t : parts) {
            const std::size_t tc = t->extent(1);
            for (std::size_t j = 0; j < tc; ++j) out(i, off + j) = (*t)(i, j);
            off += tc;
        }
    }
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) { return concat_cols({&a, &b}); }

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    require_rank(a, 2, "slice_cols");
    if (c0 >= c1 || c1 > a.extent(1))
        throw ShapeError(detail::msg("slice_cols: bad column range [", c0, ", ", c1, ") for ",
                                     shape_string(a)));
    Tensor out({a.extent(0), c1 - c0});
    for (std::size_t i = 0; i < a.extent(0); ++i)
        for (std::size_t j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
    return out;
}

}  // namespace caver::ops
