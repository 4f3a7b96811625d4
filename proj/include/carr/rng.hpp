#pragma once

#include <cstdint>

#include <boost/random/mersenne_twister.hpp>

namespace carr {

// Boost.Random engines and distributions are implemented in headers, so the
// same seed yields the same stream on every platform for a given Boost release.
using Rng = boost::random::mt19937_64;

inline constexpr const char* kRngAlgorithm = "boost::random::mt19937_64";

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace carr
