#ifndef RELX_COMMON_HPP
#define RELX_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relx {

// Configuration problems (bad keys, missing files, inconsistent settings).
// The CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data. Exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer, used to derive independent seeds from a base seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic RNG. All sampling primitives are implemented by hand on top
// of the raw mt19937_64 stream so that sequences are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform integer in [lo, hi], inclusive, unbiased via rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + static_cast<std::int64_t>(x % range);
  }

  bool coin() { return (next_u64() >> 63) != 0; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Named sub-streams of a run seed; keeps consumers independent of each other.
enum class RngStream : std::uint64_t {
  kParamInit = 1,
  kShuffle = 2,
  kOov = 3,
  kSynth = 4,
  kFolds = 5,
  kSampler = 6,
  kDevSplit = 7,
};

inline Rng derived_rng(std::uint64_t seed, RngStream stream) {
  return Rng(mix64(seed ^ mix64(static_cast<std::uint64_t>(stream))));
}

// Shortest round-trip decimal form of a double, for byte-stable text output.
std::string format_double(double x);

// Parse helpers that reject trailing garbage.
double parse_double(std::string_view s, const std::string& what);
long parse_long(std::string_view s, const std::string& what);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string lowercase_ascii(std::string_view s);

}  // namespace relx

#endif  // RELX_COMMON_HPP
