#include "varigrad/rng.hpp"

#include <cmath>
#include <numbers>

namespace varigrad {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

inline double to_unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>((bits >> 11) + 1) * kTwoPow53Inv;
}

// Box–Muller on two (0, 1] uniforms.
inline void box_muller(std::uint64_t a, std::uint64_t b, double& z0, double& z1) noexcept {
    const double radius = std::sqrt(-2.0 * std::log(to_unit_interval(a)));
    const double angle = 2.0 * std::numbers::pi * to_unit_interval(b);
    z0 = radius * std::cos(angle);
    z1 = radius * std::sin(angle);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
    : seed_(seed), stream_id_(stream_id) {}

std::array<std::uint32_t, 4> RngStream::philox_block(std::uint64_t key,
                                                     std::array<std::uint32_t, 4> ctr) noexcept {
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return ctr;
}

void RngStream::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_counter_), static_cast<std::uint32_t>(block_counter_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    const auto out = philox_block(seed_, ctr);
    ++block_counter_;
    buffer_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
    buffer_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
    buffered_ = 2;
}

std::uint64_t RngStream::next_u64() noexcept {
    if (buffered_ == 0) refill();
    return buffer_[2 - buffered_--];
}

double RngStream::uniform() noexcept { return to_unit_interval(next_u64()); }

double RngStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    const std::uint64_t a = next_u64();
    const std::uint64_t b = next_u64();
    double z0 = 0.0;
    box_muller(a, b, z0, spare_normal_);
    has_spare_ = true;
    return z0;
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

bool RngStream::bernoulli(double probability_of_true) noexcept {
    return uniform() <= probability_of_true;
}

void RngStream::fill_normal(std::span<double> out) noexcept {
    std::size_t i = 0;
    if (has_spare_ && !out.empty()) {
        out[i++] = spare_normal_;
        has_spare_ = false;
    }
    for (; i + 1 < out.size(); i += 2) {
        const std::uint64_t a = next_u64();
        const std::uint64_t b = next_u64();
        box_muller(a, b, out[i], out[i + 1]);
    }
    if (i < out.size()) out[i] = normal();
}

RngStream RngStream::derive(std::uint64_t sub_id) noexcept { return RngStream(next_u64(), sub_id); }

Matrix sample_standard_normal(std::size_t rows, std::size_t cols, RngStream& rng) {
    Matrix out(rows, cols);
    rng.fill_normal(out.values());
    return out;
}

}  // namespace varigrad
