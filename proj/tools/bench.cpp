// Throughput comparison of the serial and OpenMP kernel variants. The two
// must agree bit-for-bit; the checksum column proves it on every run.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/io.hpp"
#include "tadlab/kernels.hpp"
#include "tadlab/rng.hpp"

namespace {

using namespace tadlab;
using Clock = std::chrono::steady_clock;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    Rng rng(seed);
    for (double& v : m.data) v = rng.gaussian();
    return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::uint64_t checksum(const Matrix& m) {
    return io::fnv1a(m.data.data(), m.data.size() * sizeof(double));
}

struct Case {
    std::string name;
    std::function<void(Matrix&)> serial;
    std::function<void(Matrix&)> omp;
};

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? static_cast<std::size_t>(std::stoul(argv[1])) : 384;
    const int reps = argc > 2 ? std::stoi(argv[2]) : 5;

    const Matrix a = random_matrix(n, n, 1);
    const Matrix b = random_matrix(n, n, 2);
    const Matrix q = random_matrix(n, 64, 3);
    const Matrix t = random_matrix(2 * n, 64, 4);

    const std::vector<Case> cases = {
        {"matmul", [&](Matrix& c) { kernels::matmul_serial(a, b, c); },
         [&](Matrix& c) { kernels::matmul_omp(a, b, c); }},
        {"matmul_nt", [&](Matrix& c) { kernels::matmul_nt_serial(a, b, c); },
         [&](Matrix& c) { kernels::matmul_nt_omp(a, b, c); }},
        {"matmul_tn", [&](Matrix& c) { kernels::matmul_tn_serial(a, b, c); },
         [&](Matrix& c) { kernels::matmul_tn_omp(a, b, c); }},
        {"gram", [&](Matrix& c) { kernels::gram_serial(a, c); },
         [&](Matrix& c) { kernels::gram_omp(a, c); }},
        {"pairwise_sq_dists", [&](Matrix& c) { kernels::pairwise_sq_dists_serial(q, t, c); },
         [&](Matrix& c) { kernels::pairwise_sq_dists_omp(q, t, c); }},
    };

    std::printf("kernel benchmark: n=%zu, %d reps, omp %s\n", n, reps,
                kernels::parallel_enabled() ? "on" : "off");
    std::printf("%-18s %12s %12s %8s  %s\n", "kernel", "serial ms", "omp ms", "speedup",
                "bit-identical");

    bool all_match = true;
    for (const Case& c : cases) {
        Matrix out_serial, out_omp;
        const double ms_s = time_ms([&] { c.serial(out_serial); }, reps);
        const double ms_p = time_ms([&] { c.omp(out_omp); }, reps);
        const bool match = checksum(out_serial) == checksum(out_omp) &&
                           out_serial == out_omp;
        all_match = all_match && match;
        std::printf("%-18s %12.3f %12.3f %7.2fx  %s\n", c.name.c_str(), ms_s, ms_p,
                    ms_s / ms_p, match ? "yes" : "NO");
    }
    if (!all_match) {
        std::printf("MISMATCH: serial and parallel kernels disagree\n");
        return 1;
    }
    return 0;
}
