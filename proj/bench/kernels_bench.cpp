// Compares the OpenMP kernels against their serial reference twins on the
// shapes the training and evaluation paths actually use, and cross-checks
// outputs while timing. Not part of the test suite; run manually:
//   build/bench/kernels_bench [reps]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dcd/kernels.hpp"
#include "dcd/model.hpp"
#include "dcd/rng.hpp"

using namespace dcd;
using Clock = std::chrono::steady_clock;

namespace {

Matrix random_matrix(size_t r, size_t c, Rng& rng) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
    return m;
}

template <typename F>
double time_s(int reps, const F& f) {
    f();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

void report(const char* name, double flops, double serial_s, double parallel_s, bool equal) {
    printf("%-26s serial %8.2f ms (%6.2f Gflop/s)   omp %8.2f ms (%6.2f Gflop/s)   speedup %.2fx   %s\n",
           name, serial_s * 1e3, flops / serial_s / 1e9, parallel_s * 1e3,
           flops / parallel_s / 1e9, serial_s / parallel_s,
           equal ? "outputs identical" : "OUTPUTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 20;
#ifdef _OPENMP
    printf("openmp threads: %d, reps: %d\n\n", omp_get_max_threads(), reps);
#else
    printf("openmp disabled, reps: %d\n\n", reps);
#endif
    Rng rng(1);

    {
        // Mining-shaped GEMM: a batch of candidate pairs through a hidden layer.
        const size_t n = 5120, k = 128, m = 256;
        Matrix a = random_matrix(n, k, rng), b = random_matrix(k, m, rng);
        Matrix out_p, out_s;
        const double t_p = time_s(reps, [&] { out_p = kern::matmul(a, b); });
        const double t_s = time_s(reps, [&] { out_s = kern::serial::matmul(a, b); });
        report("matmul 5120x128x256", 2.0 * n * k * m, t_s, t_p, out_p == out_s);
    }
    {
        // Backward input gradient: upstream x weights^T.
        const size_t n = 5120, k = 256, m = 128;
        Matrix g = random_matrix(n, k, rng), w = random_matrix(m, k, rng);
        Matrix out_p, out_s;
        const double t_p = time_s(reps, [&] { out_p = kern::matmul_abt(g, w); });
        const double t_s = time_s(reps, [&] { out_s = kern::serial::matmul_abt(g, w); });
        report("matmul_abt 5120x256x128", 2.0 * n * k * m, t_s, t_p, out_p == out_s);
    }
    {
        // Weight gradient: input^T x upstream.
        const size_t n = 5120, k = 128, m = 256;
        Matrix x = random_matrix(n, k, rng), g = random_matrix(n, m, rng);
        Matrix out_p, out_s;
        const double t_p = time_s(reps, [&] { out_p = kern::matmul_atb(x, g); });
        const double t_s = time_s(reps, [&] { out_s = kern::serial::matmul_atb(x, g); });
        report("matmul_atb 5120x128x256", 2.0 * n * k * m, t_s, t_p, out_p == out_s);
    }
    {
        const size_t n = 5120, m = 256;
        Matrix x = random_matrix(n, m, rng);
        Matrix out_p, out_s;
        const double t_p = time_s(reps, [&] { out_p = kern::tanh_map(x); });
        const double t_s = time_s(reps, [&] { out_s = kern::serial::tanh_map(x); });
        report("tanh 5120x256", double(n * m), t_s, t_p, out_p == out_s);
    }
    {
        // Evaluation-shaped scoring: one query against 1000 texts through the
        // default student, exercising the full forward path.
        ScorerParams student = init_scorer(default_student_config(7));
        Matrix input = random_matrix(1000, student.input_dim(), rng);
        const double flops =
            2.0 * 1000 * (128.0 * 128 + 128.0 * 128 + 128.0);
        Matrix out;
        const double t = time_s(reps, [&] { out = forward(student, input); });
        printf("%-26s %8.2f ms (%6.2f Gflop/s) per 1000-pair forward\n",
               "student forward 1000x", t * 1e3, flops / t / 1e9);
    }
    return 0;
}
