#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace treebo {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Seeded random stream with bit-stable draw routines.
///
/// Distributions are implemented by hand on top of the raw 64-bit generator so
/// that sequences do not depend on the standard library's (implementation
/// defined) distribution code.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_bits() { return gen_(); }

  /// Uniform double in [0, 1).
  double u01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * u01(); }

  /// Standard normal via Box-Muller (second draw cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = u01();
    } while (u1 <= 0.0);
    const double u2 = u01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (-n) % n;  // 2^64 mod n
    std::uint64_t r;
    do {
      r = gen_();
    } while (r < threshold);
    return r % n;
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives a substream seed from a master seed and a label.  Adding a new
/// labeled consumer never shifts the draws of existing ones.
inline RngStream substream(std::uint64_t master_seed, std::string_view label) {
  return RngStream(detail::splitmix64(master_seed ^ detail::splitmix64(detail::fnv1a(label))));
}

/// The labeled substreams consumed by one optimization run.
struct RunStreams {
  RngStream init_design;
  RngStream gp_fit;
  RngStream pam;
  RngStream svm_cv;
  RngStream swarm;
  RngStream perturbation;

  explicit RunStreams(std::uint64_t master_seed)
      : init_design(substream(master_seed, "init-design")),
        gp_fit(substream(master_seed, "gp-fit")),
        pam(substream(master_seed, "pam")),
        svm_cv(substream(master_seed, "svm-cv")),
        swarm(substream(master_seed, "swarm")),
        perturbation(substream(master_seed, "perturbation")) {}
};

}  // namespace treebo
