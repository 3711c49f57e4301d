#include "nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace unlasting::nn {

NamedTensor NamedTensor::from_matrix(const std::string& name, const Matrix& m) {
  NamedTensor t;
  t.name = name;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

NamedTensor NamedTensor::scalar(const std::string& name, double v) {
  NamedTensor t;
  t.name = name;
  t.data = {v};
  return t;
}

Matrix NamedTensor::to_matrix() const {
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  if (dims.size() == 1) {
    rows = static_cast<Eigen::Index>(dims[0]);
  } else if (dims.size() == 2) {
    rows = static_cast<Eigen::Index>(dims[0]);
    cols = static_cast<Eigen::Index>(dims[1]);
  } else if (!dims.empty()) {
    fail(ErrorCode::format, "tensor '" + name + "' has unsupported rank");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)];
  return m;
}

void Checkpoint::add(NamedTensor t) {
  require(!contains(t.name), ErrorCode::argument, "checkpoint already has tensor '" + t.name + "'");
  std::uint64_t n = 1;
  for (auto d : t.dims) n *= d;
  require(n == t.data.size(), ErrorCode::argument, "tensor '" + t.name + "' dims do not match data");
  tensors_.push_back(std::move(t));
}

void Checkpoint::add_params(const ParameterSet& ps) {
  for (std::size_t i = 0; i < ps.size(); ++i) add_matrix("param." + ps.name(i), ps.value(i));
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return true;
  return false;
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  fail(ErrorCode::format, "checkpoint has no tensor '" + name + "'");
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& t = get(name);
  require(t.data.size() == 1, ErrorCode::format, "tensor '" + name + "' is not a scalar");
  return t.data[0];
}

Matrix Checkpoint::matrix(const std::string& name) const { return get(name).to_matrix(); }

void Checkpoint::load_params(ParameterSet& ps) const {
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Matrix m = matrix("param." + ps.name(i));
    require(m.rows() == ps.value(i).rows() && m.cols() == ps.value(i).cols(), ErrorCode::format,
            "checkpoint tensor shape mismatch for " + ps.name(i));
    require(m.allFinite(), ErrorCode::format, "checkpoint tensor " + ps.name(i) + " is not finite");
    ps.value(i) = std::move(m);
  }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_++])) << (8 * k);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail(ErrorCode::format, "checkpoint truncated");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::encode() const {
  std::string out = "ULCK";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& t : tensors_) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u64(out, d);
    for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::decode(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(4) != "ULCK") fail(ErrorCode::format, "not a checkpoint (bad magic)");
  const auto version = r.uint(4);
  require(version == kCheckpointVersion, ErrorCode::format,
          "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.uint(4);
  Checkpoint ck;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.text(r.uint(4));
    const auto rank = r.uint(4);
    require(rank <= 8, ErrorCode::format, "checkpoint tensor rank too large");
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.uint(8));
      n *= t.dims.back();
    }
    require(n <= bytes.size() / 8, ErrorCode::format, "checkpoint tensor larger than file");
    t.data.resize(n);
    for (auto& v : t.data) v = std::bit_cast<double>(r.uint(8));
    ck.add(std::move(t));
  }
  require(r.done(), ErrorCode::format, "trailing bytes after checkpoint");
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  const std::string bytes = encode();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::io, "failed writing '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace unlasting::nn
