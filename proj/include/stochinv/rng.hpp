#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "linalg.hpp"

namespace stochinv {

/// SplitMix64 finalizer. Used to derive per-stream keys from (seed, index).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
        std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

/// Reproducible random stream identified by (master_seed, stream_index).
///
/// Counter-based: the n-th output depends only on the key and n, so a stream
/// gives the same sequence no matter which thread advances it. Normals use
/// Box-Muller on 53-bit uniforms; no std::*_distribution is involved, since
/// those are implementation-defined.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
        : master_seed_(master_seed), stream_index_(stream_index) {
        std::uint64_t k = splitmix64(master_seed ^ splitmix64(stream_index));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_index() const { return stream_index_; }

    std::uint64_t next_u64() {
        if (cursor_ == 2) refill();
        return block_[cursor_++];
    }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double radius = std::sqrt(-2.0 * std::log(uniform()));
        double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    template <int N>
    Vec<N> normal_vec() {
        Vec<N> z;
        for (int i = 0; i < N; ++i) z(i) = normal();
        return z;
    }

private:
    void refill() {
        auto out = philox4x32({static_cast<std::uint32_t>(counter_),
                               static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u},
                              key_);
        ++counter_;
        block_[0] = (std::uint64_t{out[0]} << 32) | out[1];
        block_[1] = (std::uint64_t{out[2]} << 32) | out[3];
        cursor_ = 0;
    }

    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> block_{};
    int cursor_ = 2;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// One Brownian increment dB ~ N(0, Q dt). Q must be diagonal with
/// nonnegative entries (independent noise channels).
template <int M>
Vec<M> sample_brownian_increment(const SymMat<M>& q, double dt, RngStream& rng) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("sample_brownian_increment: dt must be positive");
    }
    if (!q.is_diagonal()) {
        throw std::invalid_argument(
            "sample_brownian_increment: noise covariance must be diagonal (independent channels)");
    }
    if ((q.diag().array() < 0.0).any()) {
        throw std::invalid_argument("sample_brownian_increment: negative noise variance");
    }
    Vec<M> db;
    for (int i = 0; i < M; ++i) {
        double z = rng.normal();
        db(i) = q(i, i) == 0.0 ? 0.0 : std::sqrt(q(i, i) * dt) * z;
    }
    return db;
}

}  // namespace stochinv
