#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <sstream>

#include "test_oracles.hpp"
#include "zotune/checkpoint.hpp"
#include "zotune/error.hpp"

namespace zotune {
namespace {

TEST(Checkpoint, ParamsRoundTripBitExact) {
  ParamSet p({{"attn.q", Role::AttnQ, 7}, {"b", Role::Bias, 3}});
  testing::fill_normal(p, 3, 1e-300);
  p.flat()[0] = -0.0;
  p.flat()[1] = 1.0 / 3.0;
  std::stringstream buf;
  write_params(buf, p);
  const auto back = read_params(buf);
  EXPECT_EQ(back.specs().size(), 2u);
  EXPECT_EQ(back.spec(0).role, Role::AttnQ);
  for (std::size_t i = 0; i < p.total_dim(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.flat()[i]),
              std::bit_cast<std::uint64_t>(p.flat()[i]));
  }
}

TEST(Checkpoint, AnchorRoundTripKeepsCodes) {
  ParamSet p({{"q", Role::AttnQ, 20}, {"v", Role::AttnV, 20}, {"o", Role::AttnO, 4}});
  testing::fill_normal(p, 8);
  for (auto precision : {AnchorPrecision::F64, AnchorPrecision::Q8}) {
    const auto a = build_anchor(p, {Role::AttnQ, Role::AttnV}, precision);
    std::stringstream buf;
    write_anchor(buf, a);
    const auto b = read_anchor(buf);
    ASSERT_EQ(b.layers().size(), 2u);
    EXPECT_EQ(b.roles(), a.roles());
    EXPECT_EQ(b.source_total_dim(), a.source_total_dim());
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_EQ(b.layers()[l].precision, precision);
      EXPECT_EQ(b.layers()[l].reconstruct(), a.layers()[l].reconstruct());
    }
  }
}

TEST(Checkpoint, KindAndMagicAreChecked) {
  ParamSet p({{"w", Role::Dense, 2}});
  std::stringstream buf;
  write_params(buf, p);
  EXPECT_ANY_THROW(read_anchor(buf));
  std::stringstream junk("not a checkpoint");
  EXPECT_ANY_THROW(read_params(junk));
  std::stringstream truncated(buf.str().substr(0, 20));
  EXPECT_ANY_THROW(read_params(truncated));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "zotune_ckpt_test";
  std::filesystem::create_directories(dir);
  ParamSet p({{"w", Role::Dense, 5}});
  testing::fill_normal(p, 1);
  save_params(dir / "p.ckpt", p);
  EXPECT_EQ(load_params(dir / "p.ckpt"), p);
  EXPECT_FALSE(std::filesystem::exists(dir / "p.ckpt.tmp"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace zotune
