#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace ragutil {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform integer in [0, bound) by rejection. std::uniform_int_distribution is
// implementation-defined, which would make samples differ across standard libraries.
inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % bound;
}

// Partial Fisher-Yates: after the call, items[0..take) is a uniform sample without
// replacement in random order.
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t take, std::mt19937_64& gen) {
  const std::size_t n = items.size();
  if (take > n) take = n;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(gen, n - i));
    using std::swap;
    swap(items[i], items[j]);
  }
}

}  // namespace ragutil
