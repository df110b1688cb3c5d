#pragma once

#include <cstddef>

// Private backend tables shared by the kernel translation units.

namespace cpcfl::kernels::detail {

struct Vtable {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    void (*ema)(double, const double*, double*, std::size_t);
    void (*adam)(double*, double*, double*, const double*, std::size_t, double, double, double,
                 double, double, double);
};

extern const Vtable kScalarTable;

#if defined(__x86_64__)
extern const Vtable kAvx2Table;
#endif
#if defined(__aarch64__)
extern const Vtable kNeonTable;
#endif

}  // namespace cpcfl::kernels::detail
