#pragma once

// Counter-based random numbers.
//
// Every random draw in the library is a pure function of (seed, stream, index)
// through the Philox4x32-10 block cipher, so sampling a block of work never
// depends on which thread runs it or in which order.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace conclab {

/// Stream domains keep unrelated consumers of the same seed apart.
enum class StreamDomain : std::uint64_t {
  sampler = 1,
  sphere_mc = 2,
  transform = 3,
  seeds = 4,
  calculus = 5,
};

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter encrypt(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// UniformRandomBitGenerator over Philox: key = seed, high counter words =
/// stream, low counter words = draw index.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

  CounterRng(std::uint64_t seed, StreamDomain domain, std::uint64_t index)
      : CounterRng(seed, (static_cast<std::uint64_t>(domain) << 56) ^ index) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (buffered_ == 0) refill();
    return buffer_[--buffered_];
  }

  std::uint64_t stream() const { return stream_; }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(index_), static_cast<std::uint32_t>(index_ >> 32),
                                  static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const auto out = Philox4x32::encrypt(ctr, key_);
    ++index_;
    buffer_[1] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[0] = (std::uint64_t{out[3]} << 32) | out[2];
    buffered_ = 2;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t index_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

/// Derives the i-th child seed of a base seed (used for per-trial seeds).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, StreamDomain::seeds, index);
  return rng();
}

/// Uniform point on S^{n-1} via a normalized Gaussian vector.
template <class Rng>
Eigen::VectorXd uniform_sphere_point(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  double norm2 = 0.0;
  do {
    for (int i = 0; i < n; ++i) v[i] = normal(rng);
    norm2 = v.squaredNorm();
  } while (norm2 == 0.0);
  return v / std::sqrt(norm2);
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed so
/// that R has a positive diagonal).
template <class Rng>
Eigen::MatrixXd random_orthogonal(int n, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

/// Well-conditioned random element of GL_n: U diag(e^{s_i}) V with s_i
/// uniform on [-spread, spread].
template <class Rng>
Eigen::MatrixXd random_gl(int n, Rng& rng, double spread = 1.0) {
  std::uniform_real_distribution<double> uni(-spread, spread);
  Eigen::VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = std::exp(uni(rng));
  const Eigen::MatrixXd u = random_orthogonal(n, rng);
  const Eigen::MatrixXd v = random_orthogonal(n, rng);
  return u * s.asDiagonal() * v;
}

}  // namespace conclab
