#include <doctest.h>

#include <numeric>
#include <set>

#include "mrsim/core/matrix.hpp"
#include "mrsim/core/normal.hpp"
#include "mrsim/core/random.hpp"
#include "support.hpp"

using namespace mrsim;

TEST_CASE("matmul: identity and hand examples") {
  const Matrix m = testing::random_matrix(SeedContext(1), 3, 4);
  CHECK(matmul(Matrix::Identity(3, 3), m) == m);

  Matrix a(2, 2), b(2, 1), want(2, 1);
  a << 1, 2, 3, 4;
  b << 0, 1;
  want << 2, 4;
  CHECK(matmul(a, b) == want);
}

TEST_CASE("matmul: bit-identical to a separately written triple loop") {
  const Matrix a = testing::random_matrix(SeedContext(2).child("a"), 7, 5);
  const Matrix b = testing::random_matrix(SeedContext(2).child("b"), 5, 3);
  CHECK(matmul(a, b) == testing::naive_product(a, b));

  // 100 random shapes up to 16
  const RandomStream dims(SeedContext(3));
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto m = 1 + static_cast<Eigen::Index>(dims.below(3 * t, 16));
    const auto k = 1 + static_cast<Eigen::Index>(dims.below(3 * t + 1, 16));
    const auto n = 1 + static_cast<Eigen::Index>(dims.below(3 * t + 2, 16));
    const Matrix x = testing::random_matrix(SeedContext(4).child("x", t), m, k);
    const Matrix y = testing::random_matrix(SeedContext(4).child("y", t), k, n);
    REQUIRE(matmul(x, y) == testing::naive_product(x, y));
  }
}

TEST_CASE("matmul: shape mismatch throws") {
  CHECK_THROWS_AS(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("matrix containers round-trip exactly") {
  const Matrix m = testing::random_matrix(SeedContext(5), 6, 9, 1e3);
  CHECK(decode_matrix_binary(encode_matrix_binary(m)) == m);

  const auto dir = testing::temp_dir("core_io");
  save_matrix_binary(m, dir / "m.bin");
  CHECK(load_matrix_binary(dir / "m.bin") == m);
  save_matrix_csv(m, dir / "m.csv");
  CHECK(load_matrix_csv(dir / "m.csv") == m);

  std::string bad = encode_matrix_binary(m);
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_matrix_binary(bad), FormatError);
  CHECK_THROWS_AS(decode_matrix_binary(encode_matrix_binary(m).substr(0, 40)), FormatError);
}

TEST_CASE("gauss: degenerate, determinism, moments") {
  const Vector d = gauss(SeedContext(1), 3, 0.5, 0.0);
  CHECK(d == Vector::Constant(3, 0.5));

  const SeedContext ctx = SeedContext(11).child("draws");
  CHECK(gauss(ctx, 1000, 0.0, 1.0) == gauss(ctx, 1000, 0.0, 1.0));
  CHECK(gauss(ctx, 1000, 0.0, 1.0) != gauss(ctx.child("other"), 1000, 0.0, 1.0));

  const Vector g = gauss(ctx, 1'000'000, 0.0, 1.0);
  CHECK(std::abs(g.mean()) < 0.005);
  const double var = (g.array() - g.mean()).square().mean();
  CHECK(var == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("SeedContext: streams are addressed by path, not by consumption order") {
  const SeedContext chip = SeedContext(9).child("chip", 3);
  const double before = RandomStream(chip.child("fab")).normal(17);
  // consuming an unrelated stream changes nothing
  (void)gauss(chip.child("thermal", 0), 5000, 0.0, 1.0);
  CHECK(RandomStream(chip.child("fab")).normal(17) == before);

  CHECK(chip.child("a", 1).stream_key() != chip.child("a", 2).stream_key());
  CHECK(chip.child("a", 1).stream_key() != chip.child("b", 1).stream_key());
  CHECK(SeedContext(1).child("x").stream_key() != SeedContext(2).child("x").stream_key());
  CHECK(chip.path_string().find("chip") != std::string::npos);
}

TEST_CASE("RandomStream: uniform range and integer bounds") {
  const RandomStream s(SeedContext(4));
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(i);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(s.below(i, 7) < 7);
  }
}

TEST_CASE("permutation is a permutation and reproducible") {
  const auto p = permutation(SeedContext(8), 257);
  std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(seen.size() == 257);
  CHECK(*seen.rbegin() == 256);
  CHECK(permutation(SeedContext(8), 257) == p);
}

TEST_CASE("philox matches the published known-answer vectors") {
  // Random123 kat_vectors, philox4x32-10
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) ==
        std::array<std::uint32_t, 4>{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        std::array<std::uint32_t, 4>{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
}

TEST_CASE("normal cdf and quantile") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std_normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(std_normal_quantile(0.80) == doctest::Approx(0.8416212335729143).epsilon(1e-12));
  CHECK(std_normal_cdf(-1.6448536269514722) == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(std_normal_quantile(0.0), ParameterError);
  CHECK_THROWS_AS(std_normal_quantile(1.0), ParameterError);

  double prev = 0.0;
  for (int i = -500; i <= 500; ++i) {
    const double x = i / 100.0;
    const double c = std_normal_cdf(x);
    REQUIRE(c >= prev);
    prev = c;
    REQUIRE(std::abs(std_normal_quantile(c) - x) < 1e-8);
  }
}

TEST_CASE("fnv1a known value") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
