#pragma once

#include <Eigen/Core>
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ploff::io {

// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void raw(std::string_view bytes) { buffer_.append(bytes); }
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  void json_line(const nlohmann::json& j);
  const std::string& bytes() const { return buffer_; }

 private:
  std::string buffer_;
};

// Bounds-checked reader over a loaded file; throws ValidationError on
// truncation.
class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}
  void expect_magic(std::string_view magic, std::string_view what);
  nlohmann::json json_line();
  std::uint32_t u32();
  float f32();
  double f64();
  std::string bytes(std::size_t count);
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t count);
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);
std::uint64_t hash_bytes(std::string_view bytes);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;  // row-major
};

Tensor tensor_from_matrix(std::string name, const Eigen::MatrixXd& m);
Tensor tensor_from_vector(std::string name, const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_tensor(const Tensor& t);
Eigen::VectorXd vector_from_tensor(const Tensor& t);

// "PLCK1" container: magic, one JSON metadata line, then named float32
// tensors (u32 name length, name, u32 rank, u32 dims, row-major payload).
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Tensor> tensors;

  const Tensor& get(std::string_view name) const;
  bool has(std::string_view name) const;
};

inline constexpr std::string_view kCheckpointMagic = "PLCK1";
inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ploff::io
