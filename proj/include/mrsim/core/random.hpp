#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mrsim/core/matrix.hpp"

namespace mrsim {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: the output
/// depends only on (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

struct StreamLabel {
  std::string label;
  std::uint64_t index = 0;

  friend bool operator==(const StreamLabel&, const StreamLabel&) = default;
};

/// Address of an independent random stream: a master seed plus a labeled
/// path such as chip/3, layer/1, tile/7. Two contexts with equal seed and
/// path produce identical draws; draws never depend on what other streams
/// were consumed before.
class SeedContext {
public:
  SeedContext() = default;
  explicit SeedContext(std::uint64_t master_seed) : master_seed_(master_seed) {}

  [[nodiscard]] SeedContext child(std::string_view label, std::uint64_t index = 0) const;

  [[nodiscard]] std::uint64_t master_seed() const noexcept { return master_seed_; }
  [[nodiscard]] const std::vector<StreamLabel>& path() const noexcept { return path_; }
  [[nodiscard]] std::string path_string() const;

  /// 128-bit stream identity derived from (master_seed, path).
  [[nodiscard]] std::array<std::uint64_t, 2> stream_key() const;

  friend bool operator==(const SeedContext&, const SeedContext&) = default;

private:
  std::uint64_t master_seed_ = 0;
  std::vector<StreamLabel> path_;
};

/// Random-access view of one stream. Draw i is a pure function of
/// (stream, i), so any subset of draws can be evaluated in any order.
class RandomStream {
public:
  explicit RandomStream(const SeedContext& ctx);

  [[nodiscard]] std::uint64_t bits(std::uint64_t i) const;
  /// Uniform on [0, 1).
  [[nodiscard]] double uniform(std::uint64_t i) const;
  /// Uniform integer on [0, n).
  [[nodiscard]] std::uint64_t below(std::uint64_t i, std::uint64_t n) const;
  /// Standard normal via Box-Muller on the pair of words in block i/2.
  [[nodiscard]] double normal(std::uint64_t i) const;

private:
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t domain_ = 0;
};

/// n i.i.d. N(mean, std^2) draws from the stream addressed by ctx.
Vector gauss(const SeedContext& ctx, std::size_t n, double mean, double std);

/// Fisher-Yates permutation of 0..n-1 driven by ctx.
std::vector<std::size_t> permutation(const SeedContext& ctx, std::size_t n);

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

} // namespace mrsim
