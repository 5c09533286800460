#include <gtest/gtest.h>

#include "oracles.hpp"
#include "probe/rng.hpp"
#include "probe/volume.hpp"
#include "support.hpp"

using namespace probe;

namespace {

MaskVolume random_mask(Dims d, SplitMix64& rng, double p = 0.3) {
  MaskVolume m(d, Spacing{});
  for (std::int64_t z = 0; z < d.nz; ++z)
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) m.set(x, y, z, rng.uniform() < p);
  return m;
}

MaskVolume with_first(Dims d, std::size_t count, std::size_t offset = 0) {
  MaskVolume m(d, Spacing{});
  for (std::size_t i = offset; i < offset + count; ++i) {
    const auto x = static_cast<std::int64_t>(i % static_cast<std::size_t>(d.nx));
    const auto y = static_cast<std::int64_t>((i / static_cast<std::size_t>(d.nx)) % static_cast<std::size_t>(d.ny));
    const auto z = static_cast<std::int64_t>(i / static_cast<std::size_t>(d.nx * d.ny));
    m.set(x, y, z, true);
  }
  return m;
}

}  // namespace

TEST(Dice, IdenticalNonemptyIsOne) {
  SplitMix64 rng(1);
  const auto m = random_mask({8, 8, 8}, rng);
  EXPECT_EQ(dice(m, m).value, 1.0);
  EXPECT_FALSE(dice(m, m).both_empty);
}

TEST(Dice, DisjointIsZero) {
  const Dims d{4, 4, 4};
  EXPECT_EQ(dice(with_first(d, 8), with_first(d, 8, 8)).value, 0.0);
}

TEST(Dice, KnownOverlapMatchesCountingOracle) {
  // |A| = 100, |B| = 60, |A∩B| = 40.
  const Dims d{10, 10, 10};
  const auto a = with_first(d, 100);
  const auto b = with_first(d, 60, 60);
  EXPECT_EQ(oracle::dice(a, b), 0.5);
  EXPECT_EQ(dice(a, b).value, 0.5);
}

TEST(Dice, BothEmptyIsOneAndFlagged) {
  const MaskVolume a({3, 3, 3}, Spacing{}), b({3, 3, 3}, Spacing{});
  const auto s = dice(a, b);
  EXPECT_EQ(s.value, 1.0);
  EXPECT_TRUE(s.both_empty);
}

TEST(Dice, OneEmptyIsZero) {
  const Dims d{3, 3, 3};
  EXPECT_EQ(dice(MaskVolume(d, Spacing{}), with_first(d, 5)).value, 0.0);
}

TEST(Dice, ShapeMismatchNamesBothDims) {
  const MaskVolume a({2, 3, 4}, Spacing{}), b({4, 3, 2}, Spacing{});
  try {
    dice(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3,4)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4,3,2)"), std::string::npos) << msg;
  }
}

TEST(Dice, RandomPairsMatchOracle) {
  SplitMix64 rng(99);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_mask({7, 5, 6}, rng, rng.uniform());
    const auto b = random_mask({7, 5, 6}, rng, rng.uniform());
    EXPECT_EQ(dice(a, b).value, oracle::dice(a, b));
  }
}

TEST(ZeroMask, Basics) {
  MaskVolume m({4, 4, 4}, Spacing{});
  EXPECT_TRUE(is_zero_mask(m));
  m.set(1, 2, 3, true);
  EXPECT_FALSE(is_zero_mask(m));
}

TEST(VoxelCount, Basics) {
  EXPECT_EQ(voxel_count(MaskVolume({4, 4, 4}, Spacing{})), 0u);
  MaskVolume ones({2, 2, 2}, Spacing{}, std::vector<std::uint8_t>(8, 1));
  EXPECT_EQ(voxel_count(ones), 8u);
  SplitMix64 rng(5);
  const auto r = random_mask({16, 16, 16}, rng);
  EXPECT_EQ(voxel_count(r), oracle::count(r));
}

TEST(MaskVolume, RejectsNonBinaryValues) {
  EXPECT_THROW(MaskVolume({2, 1, 1}, Spacing{}, std::vector<std::uint8_t>{0, 2}), Error);
}

TEST(MaskVolume, RejectsBadGeometry) {
  EXPECT_THROW(MaskVolume({0, 1, 1}, Spacing{}), Error);
  EXPECT_THROW(MaskVolume({1, 1, 1}, Spacing{0.0, 1.0, 1.0}), Error);
  EXPECT_THROW(MaskVolume({2, 2, 2}, Spacing{}, std::vector<std::uint8_t>(7, 0)), Error);
}

TEST(Pvol, MaskRoundTripIsByteIdentical) {
  test::TempDir tmp;
  SplitMix64 rng(3);
  MaskVolume m = random_mask({5, 6, 7}, rng);
  m = MaskVolume(m.dims(), Spacing{0.5, 1.25, 3.0}, std::vector<std::uint8_t>(m.voxels().begin(), m.voxels().end()));
  write_volume(m, tmp / "m.pvol");
  const auto bytes = io::read_file(tmp / "m.pvol");
  const MaskVolume back = read_mask(tmp / "m.pvol");
  EXPECT_EQ(back, m);
  write_volume(back, tmp / "m2.pvol");
  EXPECT_EQ(io::read_file(tmp / "m2.pvol"), bytes);
}

TEST(Pvol, ImageRoundTripLittleEndian) {
  test::TempDir tmp;
  ImageVolume img({2, 1, 1}, Spacing{}, std::vector<std::int16_t>{-800, 0x0102});
  write_volume(img, tmp / "i.pvol");
  const auto bytes = io::read_file(tmp / "i.pvol");
  ASSERT_GE(bytes.size(), 4u);
  const std::string tail = bytes.substr(bytes.size() - 4);
  EXPECT_EQ(static_cast<unsigned char>(tail[2]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(tail[3]), 0x01);
  EXPECT_EQ(read_image(tmp / "i.pvol"), img);
}

TEST(Pvol, HeaderLayout) {
  const MaskVolume m({2, 1, 1}, Spacing{1.5, 1.5, 1.5}, std::vector<std::uint8_t>{1, 0});
  const std::string bytes = encode_volume(m);
  EXPECT_EQ(bytes.substr(0, 6), "PVOL1\n");
  const auto nl = bytes.find('\n', 6);
  ASSERT_NE(nl, std::string::npos);
  const auto header = nlohmann::json::parse(bytes.substr(6, nl - 6));
  EXPECT_EQ(header.at("dims"), nlohmann::json({2, 1, 1}));
  EXPECT_EQ(header.at("dtype"), "u8");
  EXPECT_EQ(bytes.size(), nl + 1 + 2);
}

namespace {

VolumeFormatError::Kind decode_error_kind(const std::string& bytes) {
  try {
    decode_volume(bytes);
  } catch (const VolumeFormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no VolumeFormatError";
  return VolumeFormatError::Kind::bad_magic;
}

}  // namespace

TEST(Pvol, BadMagic) {
  std::string bytes = encode_volume(MaskVolume({1, 1, 1}, Spacing{}));
  bytes[0] = 'X';
  EXPECT_EQ(decode_error_kind(bytes), VolumeFormatError::Kind::bad_magic);
}

TEST(Pvol, MalformedHeader) {
  EXPECT_EQ(decode_error_kind("PVOL1\n{\"dims\":[1,1]}\n\x00"), VolumeFormatError::Kind::malformed_header);
  EXPECT_EQ(decode_error_kind("PVOL1\nnot json\n"), VolumeFormatError::Kind::malformed_header);
}

TEST(Pvol, TruncatedBufferNamesOffset) {
  std::string bytes = encode_volume(MaskVolume({2, 2, 2}, Spacing{}));
  bytes.pop_back();
  try {
    decode_volume(bytes);
    FAIL();
  } catch (const VolumeFormatError& e) {
    EXPECT_EQ(e.kind(), VolumeFormatError::Kind::truncated);
    EXPECT_EQ(e.offset(), bytes.size());
  }
}

TEST(Pvol, BadVoxelValueNamesOffset) {
  std::string bytes = encode_volume(MaskVolume({2, 2, 2}, Spacing{}));
  bytes[bytes.size() - 3] = 7;
  try {
    decode_volume(bytes);
    FAIL();
  } catch (const VolumeFormatError& e) {
    EXPECT_EQ(e.kind(), VolumeFormatError::Kind::bad_voxel_value);
    EXPECT_EQ(e.offset(), bytes.size() - 3);
  }
}

TEST(Pvol, TrailingBytes) {
  std::string bytes = encode_volume(MaskVolume({2, 2, 2}, Spacing{}));
  bytes += '\0';
  EXPECT_EQ(decode_error_kind(bytes), VolumeFormatError::Kind::trailing_bytes);
}

TEST(Pvol, ReadMaskRejectsImage) {
  test::TempDir tmp;
  write_volume(ImageVolume({1, 1, 1}, Spacing{}), tmp / "i.pvol");
  EXPECT_THROW(read_mask(tmp / "i.pvol"), Error);
}

TEST(Io, AtomicWriteLeavesNoTempFiles) {
  test::TempDir tmp;
  io::atomic_write(tmp / "a.txt", "hello");
  io::atomic_write(tmp / "a.txt", "world");
  EXPECT_EQ(io::read_file(tmp / "a.txt"), "world");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(tmp.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Io, Sha256KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
