#include <gtest/gtest.h>

#include <random>

#include "demea/checkpoint.hpp"
#include "test_util.hpp"

using namespace demea;

namespace {

ParameterStore<float> filled_store(std::uint64_t seed) {
  ParameterStore<float> s;
  s.add("enc.w", {3, 4});
  s.add("enc.b", {3});
  s.add("theta", {2, 3, 2});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (auto& x : s[i].value) x = n(rng);
    for (auto& x : s[i].m) x = n(rng);
    for (auto& x : s[i].v) x = std::abs(n(rng));
  }
  s.set_step(17);
  return s;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const auto d = testkit::scratch_dir("ckpt");
  const ParameterStore<float> a = filled_store(1);
  save_checkpoint(a, d / "c.bin");
  EXPECT_TRUE(std::filesystem::exists(adam_state_path(d / "c.bin")));

  ParameterStore<float> b = filled_store(2);
  load_checkpoint(b, d / "c.bin");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].value, b[i].value);
    EXPECT_EQ(a[i].m, b[i].m);
    EXPECT_EQ(a[i].v, b[i].v);
  }
  EXPECT_EQ(b.step(), 17u);

  save_checkpoint(b, d / "again.bin");
  EXPECT_EQ(testkit::slurp(d / "c.bin"), testkit::slurp(d / "again.bin"));
}

TEST(Checkpoint, RejectsMismatchedStore) {
  const auto d = testkit::scratch_dir("ckpt_mismatch");
  save_checkpoint(filled_store(1), d / "c.bin");
  ParameterStore<float> other;
  other.add("enc.w", {4, 3});
  other.add("enc.b", {3});
  other.add("theta", {2, 3, 2});
  EXPECT_THROW(load_checkpoint(other, d / "c.bin"), Error);
}

TEST(Checkpoint, RejectsTruncatedFile) {
  const auto d = testkit::scratch_dir("ckpt_trunc");
  save_checkpoint(filled_store(1), d / "c.bin");
  const std::string bytes = testkit::slurp(d / "c.bin");
  {
    std::ofstream out(d / "c.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  ParameterStore<float> s = filled_store(3);
  EXPECT_THROW(load_checkpoint(s, d / "c.bin"), Error);
}
