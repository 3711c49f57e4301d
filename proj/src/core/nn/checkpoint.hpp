#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nn/tape.hpp"

namespace unlasting::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // row-major

  static NamedTensor from_matrix(const std::string& name, const Matrix& m);
  static NamedTensor scalar(const std::string& name, double v);
  Matrix to_matrix() const;  // rank 0/1 become a column
};

class Checkpoint {
 public:
  void add(NamedTensor t);
  void add_matrix(const std::string& name, const Matrix& m) { add(NamedTensor::from_matrix(name, m)); }
  void add_scalar(const std::string& name, double v) { add(NamedTensor::scalar(name, v)); }
  void add_params(const ParameterSet& ps);

  bool contains(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  Matrix matrix(const std::string& name) const;
  // Overwrites every parameter from a same-named, same-shaped tensor.
  void load_params(ParameterSet& ps) const;

  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  // "ULCK", u32 version, u32 tensor count, then per tensor:
  // u32 name length, name bytes, u32 rank, u64 dims, f64 values. All little-endian.
  std::string encode() const;
  static Checkpoint decode(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<NamedTensor> tensors_;
};

}  // namespace unlasting::nn
