#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace weaksurg {

using Rng = std::mt19937_64;

/// splitmix64 step; used to derive independent child seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  return splitmix64(s);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  // 53-bit mantissa draw; stable across standard library versions.
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(rng() % span);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  // Box-Muller on explicit uniforms so sequences are reproducible bit-for-bit.
  double u1 = uniform(rng);
  double u2 = uniform(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  const double mag = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * mag * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  return rng;
}

}  // namespace weaksurg
