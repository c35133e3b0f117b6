#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace safevpr {

/// Philox4x32-10 block cipher (Salmon et al., Random123). Output is a pure
/// function of (key, counter), so streams are reproducible on any platform.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  Block operator()(Block counter) const noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
};

/// Sequential reader over one Philox stream.
///
/// The key is the user seed. Block i of stream s uses the counter
/// (lo32(i), hi32(i), lo32(s), hi32(s)); each block yields two 64-bit words,
/// low word first ((w1 << 32) | w0, then (w3 << 32) | w2).
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t stream) noexcept : cipher_(seed), stream_(stream) {}

  std::uint64_t next_u64() noexcept;

  // Uniform on [0, 1) with 53 random bits.
  double next_double() noexcept;

  // Uniform on (0, 1].
  double next_open_double() noexcept { return 1.0 - next_double(); }

  // Uniform index in [0, n); n must be positive.
  std::size_t next_index(std::size_t n) noexcept;

 private:
  Philox4x32 cipher_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

// Stream-id domains. Ids are (domain << 40) | index.
enum class StreamDomain : std::uint64_t { SyntheticCal = 1, SyntheticTest = 2, Bootstrap = 3 };

constexpr std::uint64_t stream_id(StreamDomain domain, std::uint64_t index) noexcept {
  return (static_cast<std::uint64_t>(domain) << 40) | (index & ((std::uint64_t{1} << 40) - 1));
}

}  // namespace safevpr
