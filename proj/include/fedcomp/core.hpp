#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fedcomp {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// Seeded xoshiro256** stream. The (seed, stream-id) pair fully determines the
/// sequence; both words are mixed through splitmix64 before expansion into the
/// 256-bit state, so streams sharing a seed are decorrelated.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    std::uint64_t mix = seed;
    const std::uint64_t a = detail::splitmix64(mix);
    std::uint64_t sm = a ^ (stream_id * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL);
    detail::splitmix64(sm);
    for (auto& word : s_) word = detail::splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased integer in [0, n) (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Per-device stream. Stream ids at and above `kReservedStreamBase` are kept
/// for non-device consumers (initialization, partitioning).
inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t device_index) {
  return RngStream(master_seed, device_index);
}

inline constexpr std::uint64_t kReservedStreamBase = std::uint64_t{1} << 48;
inline constexpr std::uint64_t kInitStream = kReservedStreamBase + 1;
inline constexpr std::uint64_t kPartitionStream = kReservedStreamBase + 2;

/// Primal variable laid out as [w (d entries) | w1 | w2].
class ParamVector {
 public:
  explicit ParamVector(std::size_t d) : d_(d), data_(Vector::Zero(static_cast<Eigen::Index>(d + 2))) {
    if (d == 0) throw DimensionError("ParamVector: weight dimension must be >= 1");
  }
  ParamVector(std::size_t d, Vector flat) : d_(d), data_(std::move(flat)) {
    if (d == 0) throw DimensionError("ParamVector: weight dimension must be >= 1");
    if (static_cast<std::size_t>(data_.size()) != d + 2)
      throw DimensionError("ParamVector: flat length " + std::to_string(data_.size()) +
                           " does not match d + 2 = " + std::to_string(d + 2));
  }

  std::size_t d() const { return d_; }
  std::size_t size() const { return d_ + 2; }

  auto w() { return data_.head(static_cast<Eigen::Index>(d_)); }
  auto w() const { return data_.head(static_cast<Eigen::Index>(d_)); }
  double& w1() { return data_[static_cast<Eigen::Index>(d_)]; }
  double w1() const { return data_[static_cast<Eigen::Index>(d_)]; }
  double& w2() { return data_[static_cast<Eigen::Index>(d_ + 1)]; }
  double w2() const { return data_[static_cast<Eigen::Index>(d_ + 1)]; }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  double operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }

 private:
  std::size_t d_;
  Vector data_;
};

/// The dual variable (a single scalar for the AUC objective).
struct DualScalar {
  double y = 0.0;

  DualScalar() = default;
  explicit DualScalar(double value) : y(value) {
    if (!std::isfinite(value)) throw Error("DualScalar: value must be finite");
  }
};

/// w ~ N(0, init_scale^2) i.i.d., w1 = w2 = 0.
inline ParamVector make_param(std::size_t d, double init_scale, RngStream& rng) {
  if (d == 0) throw DimensionError("make_param: d must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("make_param: init_scale must be nonnegative");
  ParamVector x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = init_scale * rng.normal();
  return x;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace fedcomp
