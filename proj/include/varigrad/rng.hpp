#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "varigrad/matrix.hpp"

namespace varigrad {

/// Counter-based random stream (Philox4x32-10).
///
/// The output is a pure function of (seed, stream_id, position), so the same pair replays the
/// same draws on every platform, and distinct stream ids give independent sequences. Code that
/// needs per-row or per-layer randomness derives child streams instead of sharing one stream.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on (0, 1], 53-bit resolution.
    double uniform() noexcept;
    double normal() noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    bool bernoulli(double probability_of_true) noexcept;

    void fill_normal(std::span<double> out) noexcept;

    /// Child stream keyed by a fresh draw from this stream and the given sub id.
    RngStream derive(std::uint64_t sub_id) noexcept;

    static std::array<std::uint32_t, 4> philox_block(std::uint64_t key,
                                                     std::array<std::uint32_t, 4> counter) noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t block_counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

Matrix sample_standard_normal(std::size_t rows, std::size_t cols, RngStream& rng);

}  // namespace varigrad
