#include "ploff/container.hpp"

#include "ploff/errors.hpp"
#include "ploff/rng.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ploff::io {
namespace {

template <typename T>
void append_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(const char* src) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { append_le(buffer_, v); }
void ByteWriter::f32(float v) { append_le(buffer_, v); }
void ByteWriter::f64(double v) { append_le(buffer_, v); }
void ByteWriter::json_line(const nlohmann::json& j) {
  buffer_.append(j.dump());
  buffer_.push_back('\n');
}

void ByteReader::need(std::size_t count) {
  if (bytes_.size() - pos_ < count) throw ValidationError("truncated file");
}

void ByteReader::expect_magic(std::string_view magic, std::string_view what) {
  if (bytes_.size() < magic.size() || std::string_view(bytes_).substr(0, magic.size()) != magic)
    throw ValidationError("bad magic: not a " + std::string(what) + " file");
  pos_ = magic.size();
}

nlohmann::json ByteReader::json_line() {
  const auto end = bytes_.find('\n', pos_);
  if (end == std::string::npos) throw ValidationError("truncated file: missing header line");
  try {
    auto j = nlohmann::json::parse(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(end));
    pos_ = end + 1;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed header: ") + e.what());
  }
}

std::uint32_t ByteReader::u32() {
  need(4);
  auto v = read_le<std::uint32_t>(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}

float ByteReader::f32() {
  need(4);
  auto v = read_le<float>(bytes_.data() + pos_);
  pos_ += 4;
  return v;
}

double ByteReader::f64() {
  need(8);
  auto v = read_le<double>(bytes_.data() + pos_);
  pos_ += 8;
  return v;
}

std::string ByteReader::bytes(std::size_t count) {
  need(count);
  std::string out = bytes_.substr(pos_, count);
  pos_ += count;
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::uint64_t hash_bytes(std::string_view bytes) { return fnv1a(bytes); }

std::uint64_t file_hash(const std::filesystem::path& path) { return hash_bytes(read_file(path)); }

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return out;
}

Tensor tensor_from_matrix(std::string name, const Eigen::MatrixXd& m) {
  Tensor t{std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

Tensor tensor_from_vector(std::string name, const Eigen::VectorXd& v) {
  Tensor t{std::move(name), {static_cast<std::uint32_t>(v.size())}, {}};
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(v[i]));
  return t;
}

Eigen::MatrixXd matrix_from_tensor(const Tensor& t) {
  if (t.shape.size() != 2) throw ValidationError("tensor " + t.name + " is not a matrix");
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.data[k++];
  return m;
}

Eigen::VectorXd vector_from_tensor(const Tensor& t) {
  if (t.shape.size() != 1) throw ValidationError("tensor " + t.name + " is not a vector");
  Eigen::VectorXd v(t.shape[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = t.data[static_cast<std::size_t>(i)];
  return v;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw ValidationError("checkpoint has no tensor '" + std::string(name) + "'");
}

bool Checkpoint::has(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kCheckpointMagic);
  nlohmann::json meta = ckpt.meta;
  meta["version"] = kCheckpointVersion;
  meta["num_tensors"] = ckpt.tensors.size();
  w.json_line(meta);
  for (const auto& t : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    std::size_t count = 1;
    for (auto d : t.shape) {
      w.u32(d);
      count *= d;
    }
    if (count != t.data.size()) throw ValidationError("tensor " + t.name + " payload does not match its shape");
    for (float v : t.data) w.f32(v);
  }
  return w.bytes();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  r.expect_magic(kCheckpointMagic, "PLCK1 checkpoint");
  Checkpoint ckpt;
  ckpt.meta = r.json_line();
  if (ckpt.meta.value("version", -1) != kCheckpointVersion) throw ValidationError("checkpoint version mismatch");
  const auto count = ckpt.meta.value("num_tensors", std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.bytes(r.u32());
    const auto rank = r.u32();
    std::size_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      elements *= t.shape.back();
    }
    if (elements > r.remaining() / 4) throw ValidationError("truncated file: tensor " + t.name);
    t.data.resize(elements);
    for (auto& v : t.data) v = r.f32();
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw ValidationError("trailing bytes after checkpoint tensors");
  return ckpt;
}

}  // namespace ploff::io
