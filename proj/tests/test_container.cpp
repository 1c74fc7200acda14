#include "ploff/container.hpp"
#include "ploff/errors.hpp"
#include "ploff/rng.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

using namespace ploff;
using namespace ploff::io;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ploff_test_container";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.meta = {{"kind", "demo"}, {"widths", {3, 2}}};
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  c.tensors.push_back(tensor_from_matrix("w", m));
  c.tensors.push_back(tensor_from_vector("b", Eigen::Vector2d(-0.5, 0.25)));
  return c;
}

}  // namespace

TEST(Bytes, LittleEndianScalars) {
  ByteWriter w;
  w.u32(0x01020304u);
  w.f32(1.0f);
  w.f64(-2.0);
  const auto& b = w.bytes();
  ASSERT_EQ(b.size(), 16u);
  EXPECT_EQ(static_cast<unsigned char>(b[0]), 0x04);
  EXPECT_EQ(static_cast<unsigned char>(b[3]), 0x01);
  // IEEE-754 single 1.0 = 0x3f800000
  EXPECT_EQ(static_cast<unsigned char>(b[6]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(b[7]), 0x3f);

  ByteReader r(b);
  EXPECT_EQ(r.u32(), 0x01020304u);
  EXPECT_EQ(r.f32(), 1.0f);
  EXPECT_EQ(r.f64(), -2.0);
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(r.u32(), ValidationError);
}

TEST(Bytes, HeaderLineAndMagic) {
  ByteWriter w;
  w.raw("ABCDE");
  w.json_line({{"x", 1}});
  ByteReader r(w.bytes());
  EXPECT_THROW(ByteReader(w.bytes()).expect_magic("ABCDF", "demo"), ValidationError);
  r.expect_magic("ABCDE", "demo");
  EXPECT_EQ(r.json_line().at("x").get<int>(), 1);
  ByteReader bad(std::string("ABCDE{\"x\":"));
  bad.expect_magic("ABCDE", "demo");
  EXPECT_THROW(bad.json_line(), ValidationError);
}

TEST(Hash, Fnv1aReferenceValues) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(hash_bytes(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hash_bytes("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hash_bytes("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(Rng, NamedStreamsAreDistinctAndReproducible) {
  Rng a = make_rng(1, "batch"), b = make_rng(1, "batch"), c = make_rng(1, "init"), d = make_rng(2, "batch");
  auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
}

TEST(Tensor, RowMajorLayout) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  auto t = tensor_from_matrix("m", m);
  EXPECT_EQ(t.shape, (std::vector<std::uint32_t>{2, 3}));
  EXPECT_EQ(t.data, (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(matrix_from_tensor(t), m);
  EXPECT_THROW(vector_from_tensor(t), ValidationError);
}

TEST(Checkpoint, RoundTrip) {
  auto c = sample_checkpoint();
  auto path = temp_path("ck.plck");
  save_checkpoint(c, path);
  auto back = load_checkpoint(path);
  EXPECT_EQ(back.meta.at("kind"), "demo");
  EXPECT_EQ(back.meta.at("version").get<int>(), kCheckpointVersion);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.get("w").data, c.get("w").data);
  EXPECT_EQ(back.get("b").shape, c.get("b").shape);
  EXPECT_TRUE(back.has("b"));
  EXPECT_FALSE(back.has("zzz"));
  EXPECT_THROW(back.get("zzz"), ValidationError);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
}

TEST(Checkpoint, RejectsCorruption) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  auto path = temp_path("bad.plck");

  auto wrong = bytes;
  wrong[4] = '2';
  write_file(path, wrong);
  EXPECT_THROW(load_checkpoint(path), ValidationError);

  write_file(path, bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(path), ValidationError);

  write_file(path, bytes + "xx");
  EXPECT_THROW(load_checkpoint(path), ValidationError);

  auto eol = bytes.find('\n');
  auto meta = nlohmann::json::parse(bytes.substr(5, eol - 5));
  meta["version"] = 7;
  write_file(path, bytes.substr(0, 5) + meta.dump() + bytes.substr(eol));
  EXPECT_THROW(load_checkpoint(path), ValidationError);

  EXPECT_THROW(load_checkpoint(temp_path("missing.plck")), ValidationError);
}

TEST(Checkpoint, ShapePayloadMismatchRejectedOnWrite) {
  Checkpoint c;
  c.tensors.push_back({"x", {2, 2}, {1.0f, 2.0f, 3.0f}});
  EXPECT_THROW(encode_checkpoint(c), ValidationError);
}
