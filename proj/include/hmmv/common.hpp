// Basic identifiers, simulated time, deterministic RNG and error types
// shared by every module of the simulator.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hmmv {

// Simulated time in nanoseconds since scenario start. Monotone within a run.
using SimTime = std::uint64_t;

using VmId = std::uint16_t;
using VcpuId = std::uint16_t;
using PageIndex = std::uint64_t;   // guest-physical page index within a VM
using GptPageId = std::uint64_t;   // last-level guest page table page index

inline constexpr PageIndex kInvalidPage = ~PageIndex{0};

// Scenario or config rejected before the run starts (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed external input (trace file, report file).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Internal invariant broke mid-run; carries module and simulated time
// context (CLI exit code 3).
class InvariantBreach : public std::runtime_error {
public:
    InvariantBreach(const std::string& module, SimTime when, const std::string& what)
        : std::runtime_error("[" + module + " @" + std::to_string(when) + "ns] " + what) {}
};

// splitmix64, used to seed and to hash seeds into stream-specific seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** seeded via splitmix64. Hand-rolled so that traces are
// bit-identical across compilers and platforms (std:: distributions are not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, bound). Debiased via rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t threshold = (~bound + 1) % bound;  // 2^64 mod bound
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool next_bool(double p_true) { return next_double() < p_true; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4]{};
};

}  // namespace hmmv
