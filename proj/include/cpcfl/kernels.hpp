#pragma once

#include <cstddef>

namespace cpcfl::kernels {

// Vector kernels behind the numeric hot loops (dense layers, Adam, EMA,
// weighted averaging). A scalar reference backend always exists; AVX2 (x86)
// and NEON (aarch64) variants are selected at runtime when the CPU supports
// them.
//
// All backends produce bitwise-identical results: reductions use a fixed
// 4-lane accumulation order, elementwise kernels keep the exact per-element
// operation order, and no backend uses FMA contraction (the project compiles
// with -ffp-contract=off). The equivalence tests assert exact equality.

enum class Backend { scalar, avx2, neon };

// Backend in use for subsequent kernel calls.
Backend active_backend();

// Selects a backend explicitly; returns false (and leaves the selection
// unchanged) if the CPU does not support it. Used by tests and the
// CPCFL_KERNELS=scalar|avx2|neon environment override.
bool set_backend(Backend backend);

// Restores automatic detection (honouring CPCFL_KERNELS if set).
void reset_backend();

const char* backend_name(Backend backend);

// sum_i x[i]*y[i], 4-lane blocked accumulation.
double dot(const double* x, const double* y, std::size_t n);

// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

// x[i] *= a
void scale(double a, double* x, std::size_t n);

// target[i] = beta * target[i] + (1 - beta) * online[i]
void ema(double beta, const double* online, double* target, std::size_t n);

// One bias-corrected Adam update over a flat parameter block.
//   m = beta1*m + (1-beta1)*g
//   v = beta2*v + (1-beta2)*g^2
//   p -= lr * (m*bc1) / (sqrt(v*bc2) + eps)
// bc1 = 1/(1-beta1^t), bc2 = 1/(1-beta2^t) are precomputed by the caller.
void adam_update(double* param, double* m, double* v, const double* grad, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);

}  // namespace cpcfl::kernels
