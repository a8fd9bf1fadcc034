#include "uthp/common.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

namespace uthp {

namespace {
bool g_quiet = false;
}

void set_log_quiet(bool quiet) { g_quiet = quiet; }

void log_info(std::string_view message) {
    if (!g_quiet) std::cerr << "[uthp] " << message << '\n';
}

void log_warning(std::string_view message) {
    if (!g_quiet) std::cerr << "[uthp] warning: " << message << '\n';
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal() {
    // Box-Muller, one draw per call.
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::index(std::uint64_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
}

}  // namespace uthp
