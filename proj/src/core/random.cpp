#include "mrsim/core/random.hpp"

#include <cmath>
#include <numbers>

namespace mrsim {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

} // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

SeedContext SeedContext::child(std::string_view label, std::uint64_t index) const {
  SeedContext out = *this;
  out.path_.push_back(StreamLabel{std::string(label), index});
  return out;
}

std::string SeedContext::path_string() const {
  std::string s = std::to_string(master_seed_);
  for (const auto& p : path_) {
    s += '/';
    s += p.label;
    s += ':';
    s += std::to_string(p.index);
  }
  return s;
}

std::array<std::uint64_t, 2> SeedContext::stream_key() const {
  std::uint64_t a = splitmix64(master_seed_ ^ 0x6d7273696d2d6130ull);
  std::uint64_t b = splitmix64(a ^ 0x5bd1e9955bd1e995ull);
  for (const auto& p : path_) {
    const std::uint64_t lh = fnv1a64(p.label);
    a = splitmix64(a ^ lh);
    a = splitmix64(a ^ p.index);
    b = splitmix64(b + lh * 0x9E3779B97F4A7C15ull);
    b = splitmix64(b ^ (p.index + 0x632BE59BD9B4E019ull));
  }
  return {a, b};
}

RandomStream::RandomStream(const SeedContext& ctx) {
  const auto k = ctx.stream_key();
  key_ = {static_cast<std::uint32_t>(k[0]), static_cast<std::uint32_t>(k[0] >> 32)};
  domain_ = k[1];
}

std::uint64_t RandomStream::bits(std::uint64_t i) const {
  const auto block = philox4x32({static_cast<std::uint32_t>(i >> 1),
                                 static_cast<std::uint32_t>(i >> 33),
                                 static_cast<std::uint32_t>(domain_),
                                 static_cast<std::uint32_t>(domain_ >> 32)},
                                key_);
  const std::size_t w = (i & 1u) * 2;
  return (static_cast<std::uint64_t>(block[w + 1]) << 32) | block[w];
}

double RandomStream::uniform(std::uint64_t i) const {
  return to_unit(bits(i));
}

std::uint64_t RandomStream::below(std::uint64_t i, std::uint64_t n) const {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(i)) * n) >> 64);
}

double RandomStream::normal(std::uint64_t i) const {
  const std::uint64_t pair = i & ~std::uint64_t{1};
  const auto block = philox4x32({static_cast<std::uint32_t>(pair >> 1),
                                 static_cast<std::uint32_t>(pair >> 33),
                                 static_cast<std::uint32_t>(domain_),
                                 static_cast<std::uint32_t>(domain_ >> 32)},
                                key_);
  const std::uint64_t w0 = (static_cast<std::uint64_t>(block[1]) << 32) | block[0];
  const std::uint64_t w1 = (static_cast<std::uint64_t>(block[3]) << 32) | block[2];
  // u1 in (0, 1] keeps the log finite.
  const double u1 = (static_cast<double>(w0 >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = to_unit(w1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return (i & 1u) ? r * std::sin(theta) : r * std::cos(theta);
}

Vector gauss(const SeedContext& ctx, std::size_t n, double mean, double std) {
  if (!(std >= 0.0) || !std::isfinite(std)) {
    throw ParameterError("gauss: std must be finite and >= 0");
  }
  Vector out(static_cast<Eigen::Index>(n));
  if (std == 0.0) {
    out.setConstant(mean);
    return out;
  }
  const RandomStream stream(ctx);
  for (std::size_t i = 0; i < n; ++i) {
    out(static_cast<Eigen::Index>(i)) = mean + std * stream.normal(i);
  }
  return out;
}

std::vector<std::size_t> permutation(const SeedContext& ctx, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) {
    perm[i] = i;
  }
  const RandomStream stream(ctx);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

} // namespace mrsim
