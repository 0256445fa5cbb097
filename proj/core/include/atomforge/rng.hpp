#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace atomforge {

using Rng = std::mt19937_64;

/// Deterministic random stream for (seed, stream_id). Streams with different
/// ids are seeded through std::seed_seq and are statistically independent.
Rng make_rng(std::uint64_t seed, std::uint64_t stream_id);

/// Folds a tuple of indices (e.g. {module tag, frame, site}) into one stream id.
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) { return std::generate_canonical<double, 64>(rng); }

// Stream tags keep modules from sharing stream ids for the same seed.
namespace stream_tag {
inline constexpr std::uint64_t kMonteCarlo = 0x4d43;
inline constexpr std::uint64_t kImaging = 0x494d;
inline constexpr std::uint64_t kSpectroscopy = 0x5350;
inline constexpr std::uint64_t kPipeline = 0x5049;
inline constexpr std::uint64_t kAutofocus = 0x4146;
}  // namespace stream_tag

}  // namespace atomforge
