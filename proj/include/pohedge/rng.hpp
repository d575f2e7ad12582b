#pragma once

#include <array>
#include <cstdint>

namespace pohedge {

// Philox4x32-10 block function (Salmon et al. counter-based generator).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// Stream ids separate independent uses of one seed.
enum class StreamId : std::uint64_t {
    InitialState = 1,
    PathP = 2,
    PathPstar = 3,
    ParticleP = 4,
    ParticlePstar = 5,
    FeynmanKac = 6,
    Oracle = 7,
};

// Sequential draws from the block keyed by (seed, stream) and addressed by
// (path, draw counter). Distinct triples never share a counter block, so
// a path's numbers do not depend on which worker generated it.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t path);
    RngStream(std::uint64_t seed, StreamId stream, std::uint64_t path)
        : RngStream(seed, static_cast<std::uint64_t>(stream), path) {}

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform();
    double normal();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t path() const { return path_; }

    // URBG interface.
    using result_type = std::uint32_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }
    result_type operator()() { return next_u32(); }

private:
    void refill();

    std::uint64_t seed_, stream_, path_;
    std::array<std::uint32_t, 2> key_{};
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pohedge
