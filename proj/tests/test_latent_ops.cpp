#include <gtest/gtest.h>

#include <random>

#include "demea/latent_ops.hpp"
#include "test_util.hpp"

using namespace demea;

namespace {

LatentSequence random_sequence(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  LatentSequence s(frames, LatentCode(dim));
  for (auto& c : s) {
    for (auto& x : c) x = n(rng);
  }
  return s;
}

}  // namespace

TEST(LatentOps, InterpolationEndpointsAreExact) {
  const auto s = random_sequence(2, 8, 1);
  EXPECT_EQ(interpolate(s[0], s[1], 0.0), s[0]);
  EXPECT_EQ(interpolate(s[0], s[1], 1.0), s[1]);
  const auto mid = interpolate(s[0], s[1], 0.5);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_FLOAT_EQ(mid[k], 0.5f * (s[0][k] + s[1][k]));
  EXPECT_THROW(interpolate(s[0], LatentCode(3), 0.5), ShapeError);
}

TEST(LatentOps, TransferKeepsConstantOffset) {
  const auto src = random_sequence(6, 8, 2);
  const auto target0 = random_sequence(1, 8, 3)[0];
  const auto out = transfer(src, target0);
  ASSERT_EQ(out.size(), src.size());
  EXPECT_EQ(out[0], target0);
  for (std::size_t i = 1; i < out.size(); ++i) {
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(out[i][k], src[i][k] + (target0[k] - src[0][k]));
    }
  }
}

TEST(LatentOps, SmoothingLimits) {
  const auto seq = random_sequence(5, 4, 4);
  EXPECT_EQ(smooth(seq, 1.0), seq);
  for (const auto& c : smooth(seq, 0.0)) EXPECT_EQ(c, seq[0]);
  const auto half = smooth(seq, 0.5);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_FLOAT_EQ(half[1][k], 0.5f * seq[1][k] + 0.5f * seq[0][k]);
  EXPECT_THROW(smooth(seq, 1.5), Error);
  EXPECT_THROW(smooth({}, 0.5), Error);
}

TEST(LatentOps, CsvRoundTripAndErrors) {
  const auto d = testkit::scratch_dir("latent_csv");
  const auto seq = random_sequence(3, 8, 5);
  write_latent_csv(seq, d / "a.csv");
  EXPECT_EQ(read_latent_csv(d / "a.csv"), seq);

  {
    std::ofstream out(d / "bad.csv");
    out << "1,2,3\n1,x,3\n";
  }
  try {
    read_latent_csv(d / "bad.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  {
    std::ofstream out(d / "ragged.csv");
    out << "1,2,3\n1,2\n";
  }
  EXPECT_THROW(read_latent_csv(d / "ragged.csv"), ParseError);
}
