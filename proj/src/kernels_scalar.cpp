#include <cmath>
#include <cstddef>

#include "kernels_impl.hpp"

// Reference backend. The dot reduction uses four independent accumulators
// (lane j sums indices i with i % 4 == j) combined as (a0+a2)+(a1+a3), then
// the scalar tail in index order. The SIMD backends reproduce exactly this
// order, which is what makes cross-backend results bitwise identical.

namespace cpcfl::kernels::detail {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        acc0 += x[i] * y[i];
        acc1 += x[i + 1] * y[i + 1];
        acc2 += x[i + 2] * y[i + 2];
        acc3 += x[i + 3] * y[i + 3];
    }
    double sum = (acc0 + acc2) + (acc1 + acc3);
    for (std::size_t i = n4; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void ema_scalar(double beta, const double* online, double* target, std::size_t n) {
    const double omb = 1.0 - beta;
    for (std::size_t i = 0; i < n; ++i) target[i] = beta * target[i] + omb * online[i];
}

void adam_scalar(double* param, double* m, double* v, const double* grad, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        const double mi = beta1 * m[i] + omb1 * g;
        const double vi = beta2 * v[i] + omb2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        param[i] -= lr * ((mi * bc1) / (std::sqrt(vi * bc2) + eps));
    }
}

}  // namespace

const Vtable kScalarTable = {dot_scalar, axpy_scalar, scale_scalar, ema_scalar, adam_scalar};

}  // namespace cpcfl::kernels::detail
