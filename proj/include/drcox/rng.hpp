#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace drcox {

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic seed for a labelled sub-stream, e.g. (base, replication)
/// or (base, fold, tree). Order of labels matters.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = splitmix64(base);
  for (auto label : labels) s = splitmix64(s ^ splitmix64(label + 0x632BE59BD9B4E019ULL));
  return s;
}

using Rng = std::mt19937_64;

}  // namespace drcox
