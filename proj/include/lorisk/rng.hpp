#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lorisk {

// splitmix64 step, used to mix (seed, stream, substream) into one 64-bit state
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t substream = 0) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ (0x517cc1b727220a95ULL * (stream + 1)));
  s = splitmix64(s ^ (0x2545f4914f6cdd1dULL * (substream + 1)));
  return s;
}

// Seeded stream with explicit sampling routines so output is identical across
// platforms and standard-library versions. Each (seed, stream, substream)
// triple is an independent deterministic stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0,
                     std::uint64_t substream = 0)
      : gen_(mix_seed(seed, stream, substream)) {}

  // uniform on (0, 1)
  double uniform() {
    std::uint64_t u = gen_();
    return ((u >> 11) + 0.5) * 0x1.0p-53;
  }

  // standard normal via Box-Muller with a cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  // Knuth's multiplication method; large means are peeled off in chunks so
  // exp(-mu) never underflows.
  long poisson(double mu) {
    long count = 0;
    while (mu > 30.0) {
      count += poisson_small(30.0);
      mu -= 30.0;
    }
    return count + poisson_small(mu);
  }

  std::uint64_t next_u64() { return gen_(); }

 private:
  long poisson_small(double mu) {
    double limit = std::exp(-mu);
    double prod = uniform();
    long k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }

  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids used to keep training data, fresh out-of-sample draws and
// bootstrap resampling statistically independent of each other.
namespace stream {
constexpr std::uint64_t kDesign = 0;
constexpr std::uint64_t kResponse = 1;
constexpr std::uint64_t kOutOfSample = 2;
constexpr std::uint64_t kConditionalMean = 3;
constexpr std::uint64_t kSmoothing = 4;
constexpr std::uint64_t kBootstrap = 5;
constexpr std::uint64_t kProbe = 6;
}  // namespace stream

}  // namespace lorisk
