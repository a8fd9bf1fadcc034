#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace uthp {

/// Base class for every error raised by the toolkit. `kind()` is a short
/// machine-readable category used by the command-line front end.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DataError : Error {
    explicit DataError(const std::string& m) : Error("data", m) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};
struct GraphError : Error {
    explicit GraphError(const std::string& m) : Error("graph", m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& m) : Error("checkpoint", m) {}
};

// Logging goes to stderr; results never do.
void log_info(std::string_view message);
void log_warning(std::string_view message);
void set_log_quiet(bool quiet);

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream key from a base seed and a path of
/// counters, e.g. derive_key(seed, {epoch, batch, layer}).
[[nodiscard]] constexpr std::uint64_t derive_key(std::uint64_t base,
                                                 std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t k = mix64(base);
    for (auto p : path) k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
    return k;
}

/// Seeded random stream. Distribution helpers are written out here instead of
/// using <random> distributions so streams are identical across standard
/// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential(double rate);

    double normal();

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace uthp
