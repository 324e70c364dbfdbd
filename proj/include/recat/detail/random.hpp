#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace recat::detail {

// std::uniform_int_distribution and std::shuffle are implementation-defined;
// mt19937_64's raw output is not, so bounded draws are done by rejection.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(bounded(rng, i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace recat::detail
