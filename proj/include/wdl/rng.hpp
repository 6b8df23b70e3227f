#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace wdl {

/// Named substreams. Every random quantity is drawn from a stream keyed by
/// (seed, stream id, index), so results do not depend on evaluation order or
/// on the number of threads.
enum class Stream : std::uint32_t {
  kTimes = 1,
  kNoise = 2,
  kData = 3,
  kInit = 4,
  kPrior = 5,
  kRepeat = 6,
  kBootstrap = 7,
  kSampler = 8,
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox {
 public:
  using Block = std::array<std::uint32_t, 4>;
  static Block generate(Block counter, std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * counter[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * counter[2];
      counter = {static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ key[0],
                 static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ key[1],
                 static_cast<std::uint32_t>(p0)};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return counter;
  }
};

/// A sequential view onto one (seed, stream, index) substream.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, Stream stream, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(static_cast<std::uint32_t>(stream)),
        index_(index) {}

  std::uint32_t next_u32() {
    if (lane_ == 4) refill();
    return block_[lane_++];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = next_u32() >> 5;
    const std::uint64_t lo = next_u32() >> 6;
    return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
  }

  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do u = uniform();
    while (u == 0.0);
    return u;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  void refill() {
    block_ = Philox::generate({static_cast<std::uint32_t>(counter_),
                               static_cast<std::uint32_t>(counter_ >> 32),
                               static_cast<std::uint32_t>(index_) ^ (stream_ << 24),
                               static_cast<std::uint32_t>(index_ >> 32) ^ stream_},
                              key_);
    ++counter_;
    lane_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_;
  std::uint64_t index_;
  std::uint64_t counter_ = 0;
  Philox::Block block_{};
  int lane_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives a child seed, e.g. one per repeat of an experiment.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  RandomStream s(seed, Stream::kRepeat, tag);
  return (std::uint64_t{s.next_u32()} << 32) | s.next_u32();
}

}  // namespace wdl
