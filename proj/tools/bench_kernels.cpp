#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "caver/kernels.hpp"
#include "caver/rng.hpp"

// Times the OpenMP kernels against their serial references and verifies the
// two produce bit-identical output.  --quick shrinks the sizes so the tool
// doubles as a smoke test.

namespace {

using caver::Rng;
namespace kernels = caver::kernels;

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double time_best(const std::function<void()>& fn, int reps) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (s < best) best = s;
    }
    return best;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
    std::string name;
    double serial_s = 0.0;
    double parallel_s = 0.0;
    bool identical = false;
};

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--quick") quick = true;

    const int reps = quick ? 1 : 3;
    Rng rng(20240817);
    std::vector<Row> rows;

    {
        const std::size_t n = quick ? 96 : 512;
        const auto a = random_vec(rng, n * n), b = random_vec(rng, n * n);
        std::vector<double> ys(n * n), yp(n * n);
        Row r{"matmul " + std::to_string(n) + "^3"};
        r.serial_s = time_best([&] { kernels::serial::matmul(a.data(), b.data(), ys.data(), n, n, n); }, reps);
        r.parallel_s = time_best([&] { kernels::matmul(a.data(), b.data(), yp.data(), n, n, n); }, reps);
        r.identical = bits_equal(ys, yp);
        rows.push_back(r);
    }
    {
        const std::size_t h = quick ? 16 : 64, w = h, ci = quick ? 8 : 64, co = ci;
        const auto x = random_vec(rng, h * w * ci);
        const auto k = random_vec(rng, co * ci * 9);
        const auto bias = random_vec(rng, co);
        std::vector<double> ys(h * w * co), yp(h * w * co);
        Row r{"conv2d 3x3 " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(ci)};
        r.serial_s = time_best([&] { kernels::serial::conv2d(x.data(), h, w, ci, k.data(), bias.data(), co, 3, ys.data()); }, reps);
        r.parallel_s = time_best([&] { kernels::conv2d(x.data(), h, w, ci, k.data(), bias.data(), co, 3, yp.data()); }, reps);
        r.identical = bits_equal(ys, yp);
        rows.push_back(r);
    }
    {
        const std::size_t n = quick ? 128 : 2048, c = quick ? 64 : 512;
        const auto x = random_vec(rng, n * c);
        std::vector<double> ys = x, yp = x;
        Row r{"softmax_rows " + std::to_string(n) + "x" + std::to_string(c)};
        r.serial_s = time_best([&] { ys = x; kernels::serial::softmax_rows(ys.data(), n, c); }, reps);
        r.parallel_s = time_best([&] { yp = x; kernels::softmax_rows(yp.data(), n, c); }, reps);
        r.identical = bits_equal(ys, yp);
        rows.push_back(r);
    }
    {
        const std::size_t h = quick ? 16 : 128, w = h, c = quick ? 8 : 64, f = 2;
        const auto x = random_vec(rng, h * w * c);
        std::vector<double> ys(f * h * f * w * c), yp(ys.size());
        Row r{"bilinear x2 " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c)};
        r.serial_s = time_best([&] { kernels::serial::bilinear_upsample(x.data(), h, w, c, f, ys.data()); }, reps);
        r.parallel_s = time_best([&] { kernels::bilinear_upsample(x.data(), h, w, c, f, yp.data()); }, reps);
        r.identical = bits_equal(ys, yp);
        rows.push_back(r);
    }
    {
        const std::size_t n = quick ? 1 << 12 : 1 << 20;
        const auto a = random_vec(rng, n), b = random_vec(rng, n);
        std::vector<double> ys(n), yp(n);
        Row r{"mix n=" + std::to_string(n)};
        r.serial_s = time_best([&] { kernels::serial::mix(0.5, a.data(), 0.5, b.data(), ys.data(), n); }, reps);
        r.parallel_s = time_best([&] { kernels::mix(0.5, a.data(), 0.5, b.data(), yp.data(), n); }, reps);
        r.identical = bits_equal(ys, yp);
        rows.push_back(r);
    }

    std::printf("%-28s %12s %12s %9s %s\n", "kernel", "serial_ms", "parallel_ms", "speedup", "bits");
    bool all_ok = true;
    for (const auto& r : rows) {
        all_ok = all_ok && r.identical;
        std::printf("%-28s %12.3f %12.3f %8.2fx %s\n", r.name.c_str(), r.serial_s * 1e3,
                    r.parallel_s * 1e3, r.serial_s / r.parallel_s,
                    r.identical ? "identical" : "MISMATCH");
    }
    if (!all_ok) {
        std::printf("serial and parallel kernels disagree\n");
        return 1;
    }
    return 0;
}
