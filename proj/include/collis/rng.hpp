#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace collis {

// Deterministic random stream. All randomness in a run flows from one master
// seed through named streams (see derive_stream), so toggling one feature
// never perturbs another feature's draws. Distributions are implemented here
// instead of <random> adaptors because the standard leaves those
// implementation-defined and we promise byte-identical reruns.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n), unbiased via rejection. n must be > 0.
    std::uint64_t next_below(std::uint64_t n);

    // Standard normal via Box-Muller (polar form), one value per call.
    double next_normal();

    double next_normal(double mean, double stddev) { return mean + stddev * next_normal(); }

    bool next_bool() { return (engine_() >> 63) != 0; }

    // Fisher-Yates shuffle of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream from (master, name, index). The same tuple
// always yields the same stream.
RngStream derive_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0);

}  // namespace collis
