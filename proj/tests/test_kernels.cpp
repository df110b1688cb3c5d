#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "cpcfl/kernels.hpp"
#include "cpcfl/rng.hpp"

using namespace cpcfl;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

struct BackendGuard {
    ~BackendGuard() { kernels::reset_backend(); }
};

// Sizes straddling the 4-lane blocking, including odd tails.
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 64, 127, 1000};

}  // namespace

TEST_CASE("kernels: scalar backend always selectable") {
    BackendGuard guard;
    CHECK(kernels::set_backend(kernels::Backend::scalar));
    CHECK(kernels::active_backend() == kernels::Backend::scalar);
}

TEST_CASE("kernels: dot matches a plain loop") {
    BackendGuard guard;
    Rng rng(7);
    for (std::size_t n : kSizes) {
        const auto x = random_vec(n, rng);
        const auto y = random_vec(n, rng);
        double expected = 0.0;
        for (std::size_t i = 0; i < n; ++i) expected += x[i] * y[i];
        REQUIRE(kernels::set_backend(kernels::Backend::scalar));
        const double got = kernels::dot(x.data(), y.data(), n);
        CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("kernels: SIMD backend is bitwise identical to scalar") {
    BackendGuard guard;
    kernels::Backend simd = kernels::Backend::scalar;
#if defined(__x86_64__)
    simd = kernels::Backend::avx2;
#elif defined(__aarch64__)
    simd = kernels::Backend::neon;
#endif
    if (simd == kernels::Backend::scalar || !kernels::set_backend(simd)) {
        MESSAGE("no SIMD backend available on this CPU; skipping equivalence check");
        return;
    }
    Rng rng(11);
    for (std::size_t n : kSizes) {
        const auto x = random_vec(n, rng);
        const auto y = random_vec(n, rng);
        auto acc_scalar = random_vec(n, rng);
        auto acc_simd = acc_scalar;
        auto ema_scalar = random_vec(n, rng);
        auto ema_simd = ema_scalar;
        auto p_scalar = random_vec(n, rng);
        auto p_simd = p_scalar;
        auto m_scalar = std::vector<double>(n, 0.0);
        auto m_simd = m_scalar;
        auto v_scalar = std::vector<double>(n, 0.0);
        auto v_simd = v_scalar;
        auto scale_scalar = random_vec(n, rng);
        auto scale_simd = scale_scalar;

        REQUIRE(kernels::set_backend(kernels::Backend::scalar));
        const double dot_a = kernels::dot(x.data(), y.data(), n);
        kernels::axpy(0.37, x.data(), acc_scalar.data(), n);
        kernels::scale(-1.25, scale_scalar.data(), n);
        kernels::ema(0.9, x.data(), ema_scalar.data(), n);
        kernels::adam_update(p_scalar.data(), m_scalar.data(), v_scalar.data(), y.data(), n,
                             1e-3, 0.9, 0.999, 1e-8, 10.0, 1000.0);

        REQUIRE(kernels::set_backend(simd));
        const double dot_b = kernels::dot(x.data(), y.data(), n);
        kernels::axpy(0.37, x.data(), acc_simd.data(), n);
        kernels::scale(-1.25, scale_simd.data(), n);
        kernels::ema(0.9, x.data(), ema_simd.data(), n);
        kernels::adam_update(p_simd.data(), m_simd.data(), v_simd.data(), y.data(), n, 1e-3, 0.9,
                             0.999, 1e-8, 10.0, 1000.0);

        CHECK(std::memcmp(&dot_a, &dot_b, sizeof(double)) == 0);
        CHECK(std::memcmp(acc_scalar.data(), acc_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(scale_scalar.data(), scale_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(ema_scalar.data(), ema_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(p_scalar.data(), p_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(m_scalar.data(), m_simd.data(), n * sizeof(double)) == 0);
        CHECK(std::memcmp(v_scalar.data(), v_simd.data(), n * sizeof(double)) == 0);
    }
}

TEST_CASE("kernels: ema endpoints") {
    BackendGuard guard;
    Rng rng(3);
    const auto online = random_vec(16, rng);
    auto target = random_vec(16, rng);
    const auto saved = target;
    kernels::ema(1.0, online.data(), target.data(), 16);
    CHECK(target == saved);  // beta = 1: unchanged
    kernels::ema(0.0, online.data(), target.data(), 16);
    CHECK(target == online);  // beta = 0: becomes the online value
}
