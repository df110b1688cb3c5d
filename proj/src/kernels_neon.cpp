#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "kernels_impl.hpp"

// NEON backend (2-wide doubles). Two registers together model the scalar
// reference's 4 accumulator lanes: acc_a holds lanes {0,1}, acc_b lanes
// {2,3}. Reduction (acc_a+acc_b) then lane0+lane1 equals (a0+a2)+(a1+a3).
// vmulq/vaddq are kept separate (no vfmaq) to round like scalar.

namespace cpcfl::kernels::detail {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc_a = vdupq_n_f64(0.0);
    float64x2_t acc_b = vdupq_n_f64(0.0);
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < n4; i += 4) {
        acc_a = vaddq_f64(acc_a, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
        acc_b = vaddq_f64(acc_b, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
    }
    const float64x2_t pair = vaddq_f64(acc_a, acc_b);  // {a0+a2, a1+a3}
    double sum = vgetq_lane_f64(pair, 0) + vgetq_lane_f64(pair, 1);
    for (std::size_t i = n4; i < n; ++i) sum += x[i] * y[i];
    return sum;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t av = vdupq_n_f64(a);
    const std::size_t n2 = n & ~std::size_t{1};
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
    }
    for (std::size_t i = n2; i < n; ++i) y[i] += a * x[i];
}

void scale_neon(double a, double* x, std::size_t n) {
    const float64x2_t av = vdupq_n_f64(a);
    const std::size_t n2 = n & ~std::size_t{1};
    for (std::size_t i = 0; i < n2; i += 2) {
        vst1q_f64(x + i, vmulq_f64(av, vld1q_f64(x + i)));
    }
    for (std::size_t i = n2; i < n; ++i) x[i] *= a;
}

void ema_neon(double beta, const double* online, double* target, std::size_t n) {
    const double omb = 1.0 - beta;
    const float64x2_t bv = vdupq_n_f64(beta);
    const float64x2_t ov = vdupq_n_f64(omb);
    const std::size_t n2 = n & ~std::size_t{1};
    for (std::size_t i = 0; i < n2; i += 2) {
        const float64x2_t t = vld1q_f64(target + i);
        const float64x2_t o = vld1q_f64(online + i);
        vst1q_f64(target + i, vaddq_f64(vmulq_f64(bv, t), vmulq_f64(ov, o)));
    }
    for (std::size_t i = n2; i < n; ++i) target[i] = beta * target[i] + omb * online[i];
}

void adam_neon(double* param, double* m, double* v, const double* grad, std::size_t n,
               double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    const double omb1 = 1.0 - beta1;
    const double omb2 = 1.0 - beta2;
    const float64x2_t b1v = vdupq_n_f64(beta1);
    const float64x2_t ob1v = vdupq_n_f64(omb1);
    const float64x2_t b2v = vdupq_n_f64(beta2);
    const float64x2_t ob2v = vdupq_n_f64(omb2);
    const float64x2_t lrv = vdupq_n_f64(lr);
    const float64x2_t epsv = vdupq_n_f64(eps);
    const float64x2_t bc1v = vdupq_n_f64(bc1);
    const float64x2_t bc2v = vdupq_n_f64(bc2);
    const std::size_t n2 = n & ~std::size_t{1};
    for (std::size_t i = 0; i < n2; i += 2) {
        const float64x2_t g = vld1q_f64(grad + i);
        const float64x2_t mi = vaddq_f64(vmulq_f64(b1v, vld1q_f64(m + i)), vmulq_f64(ob1v, g));
        const float64x2_t vi = vaddq_f64(vmulq_f64(b2v, vld1q_f64(v + i)),
                                         vmulq_f64(ob2v, vmulq_f64(g, g)));
        vst1q_f64(m + i, mi);
        vst1q_f64(v + i, vi);
        const float64x2_t denom = vaddq_f64(vsqrtq_f64(vmulq_f64(vi, bc2v)), epsv);
        const float64x2_t step = vmulq_f64(lrv, vdivq_f64(vmulq_f64(mi, bc1v), denom));
        vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
    }
    for (std::size_t i = n2; i < n; ++i) {
        const double g = grad[i];
        const double mi = beta1 * m[i] + omb1 * g;
        const double vi = beta2 * v[i] + omb2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        param[i] -= lr * ((mi * bc1) / (std::sqrt(vi * bc2) + eps));
    }
}

}  // namespace

const Vtable kNeonTable = {dot_neon, axpy_neon, scale_neon, ema_neon, adam_neon};

}  // namespace cpcfl::kernels::detail

#endif  // __aarch64__
