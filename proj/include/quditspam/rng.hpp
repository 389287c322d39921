#pragma once
// Counter-based Philox4x32-10 generator. A stream is fully determined by its
// key and counter prefix, so every shot can own an independent substream
// regardless of which worker thread runs it.

#include <array>
#include <cstdint>

namespace quditspam {

class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }
};

/// Uniform doubles for one (seed, stream a, stream b) triple; the last counter
/// word indexes successive blocks.
class SubStream {
public:
  SubStream(std::uint64_t seed, std::uint64_t a, std::uint32_t b)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, 0} {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    if (used_ == 4) refill();
    const std::uint64_t hi = buffer_[used_] >> 5, lo = buffer_[used_ + 1] >> 6;
    used_ += 2;
    return (static_cast<double>(hi) * 67108864.0 + static_cast<double>(lo)) * (1.0 / 9007199254740992.0);
  }
  bool bernoulli(double p) { return uniform() < p; }

private:
  void refill() {
    buffer_ = Philox4x32::block(ctr_, key_);
    ++ctr_[3];
    used_ = 0;
  }

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
};

} // namespace quditspam
