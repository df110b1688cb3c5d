#if defined(__x86_64__)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "kernels_impl.hpp"

// AVX2 backend. Accumulation order matches the scalar reference exactly:
// vector lane j holds the partial sum of indices i % 4 == j, the horizontal
// reduction is (a0+a2)+(a1+a3), tails run the same scalar loop. mul/add are
// kept separate (no _mm256_fmadd_pd) so each operation rounds like scalar.

namespace cpcfl::kernels::detail {
namespace {

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d a = _mm256_loadu_pd(x + i);
        const __m256d b = _mm256_loadu_pd(y + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(a, b));
    }
    const __m128d lo = _mm256_castpd256_pd128(acc);         // {a0, a1}
    const __m128d hi = _mm256_extractf128_pd(acc, 1);       // {a2, a3}
    const __m128d pair = _mm_add_pd(lo, hi);                // {a0+a2, a1+a3}
    double sum = _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
    for (std::size_t i = n4; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, xv)));
    }
    for (std::size_t i = n4; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(double a, double* x, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (std::size_t i = n4; i < n; ++i) x[i] *= a;
}

void ema_avx2(double beta, const double* online, double* target, std::size_t n) {
    const double omb = 1.0 - beta;
    const __m256d bv = _mm256_set1_pd(beta);
    const __m256d ov = _mm256_set1_pd(omb);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d t = _mm256_loadu_pd(target + i);
        const __m256d o = _mm256_loadu_pd(online + i);
        _mm256_storeu_pd(target + i, _mm256_add_pd(_mm256_mul_pd(bv, t), _mm256_mul_pd(ov, o)));
    }
    for (std::size_t i = n4; i < n; ++i) target[i] = beta * target[i] + omb * online[i];
}

void adam_avx2(double* param, double* m, double* v, const double* grad, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const __m256d b1v = _mm256_set1_pd(beta1);
    const __m256d ob1v = _mm256_set1_pd(omb1);
    const __m256d b2v = _mm256_set1_pd(beta2);
    const __m256d ob2v = _mm256_set1_pd(omb2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    const __m256d bc1v = _mm256_set1_pd(bc1);
    const __m256d bc2v = _mm256_set1_pd(bc2);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mi =
            _mm256_add_pd(_mm256_mul_pd(b1v, _mm256_loadu_pd(m + i)), _mm256_mul_pd(ob1v, g));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2v, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(ob2v, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, bc2v)), epsv);
        const __m256d step = _mm256_mul_pd(lrv, _mm256_div_pd(_mm256_mul_pd(mi, bc1v), denom));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (std::size_t i = n4; i < n; ++i) {
        const double g = grad[i];
        const double mi = beta1 * m[i] + omb1 * g;
        const double vi = beta2 * v[i] + omb2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        param[i] -= lr * ((mi * bc1) / (std::sqrt(vi * bc2) + eps));
    }
}

}  // namespace

const Vtable kAvx2Table = {dot_avx2, axpy_avx2, scale_avx2, ema_avx2, adam_avx2};

}  // namespace cpcfl::kernels::detail

#endif  // __x86_64__
