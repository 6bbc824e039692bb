#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <vector>

namespace trialcea {

/// Serial is the reference path; Parallel must produce identical results.
enum class Execution { Serial, Parallel };

/// Runs body(i) for i in [0, n). Exceptions are captured per index and the
/// one from the lowest index is rethrown after the loop, so error reporting
/// does not depend on scheduling.
template <class Body>
void for_each_index(Execution policy, std::size_t n, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (policy == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    } else {
        for (std::ptrdiff_t i = 0; i < count; ++i) {
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Independent generator for (seed, stream, substream).
inline std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    const std::uint64_t a = mix(seed), b = mix(a ^ stream), c = mix(b ^ (substream + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace trialcea
