#include "cpcfl/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace cpcfl::kernels {
namespace {

using detail::Vtable;

bool backend_available(Backend backend) {
    switch (backend) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
#if defined(__x86_64__)
            return __builtin_cpu_supports("avx2") != 0;
#else
            return false;
#endif
        case Backend::neon:
#if defined(__aarch64__)
            return true;  // baseline on aarch64
#else
            return false;
#endif
    }
    return false;
}

const Vtable* table_for(Backend backend) {
    switch (backend) {
        case Backend::scalar:
            return &detail::kScalarTable;
        case Backend::avx2:
#if defined(__x86_64__)
            return &detail::kAvx2Table;
#else
            break;
#endif
        case Backend::neon:
#if defined(__aarch64__)
            return &detail::kNeonTable;
#else
            break;
#endif
    }
    return &detail::kScalarTable;
}

Backend detect_backend() {
    if (const char* env = std::getenv("CPCFL_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && backend_available(Backend::avx2)) return Backend::avx2;
        if (std::strcmp(env, "neon") == 0 && backend_available(Backend::neon)) return Backend::neon;
        // "auto" or anything unusable falls through to detection.
    }
    if (backend_available(Backend::avx2)) return Backend::avx2;
    if (backend_available(Backend::neon)) return Backend::neon;
    return Backend::scalar;
}

struct Dispatch {
    Backend backend;
    const Vtable* table;
    Dispatch() : backend(detect_backend()), table(table_for(backend)) {}
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool set_backend(Backend backend) {
    if (!backend_available(backend)) return false;
    dispatch().backend = backend;
    dispatch().table = table_for(backend);
    return true;
}

void reset_backend() {
    dispatch().backend = detect_backend();
    dispatch().table = table_for(dispatch().backend);
}

const char* backend_name(Backend backend) {
    switch (backend) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "unknown";
}

double dot(const double* x, const double* y, std::size_t n) {
    return dispatch().table->dot(x, y, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    dispatch().table->axpy(a, x, y, n);
}

void scale(double a, double* x, std::size_t n) { dispatch().table->scale(a, x, n); }

void ema(double beta, const double* online, double* target, std::size_t n) {
    dispatch().table->ema(beta, online, target, n);
}

void adam_update(double* param, double* m, double* v, const double* grad, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    dispatch().table->adam(param, m, v, grad, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace cpcfl::kernels
