#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace compcate {

using Rng = std::mt19937_64;

// Named substreams: every random draw in the pipeline descends from one root
// seed through derive_seed(root, "dataset", unit_id, ...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                    std::uint64_t b = 0) {
  return Rng(derive_seed(root, stream, a, b));
}

// 64-bit FNV-1a; used for content and config hashes written into artifacts.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

}  // namespace compcate
