#include "dsco/tensor_block.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dsco {

std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << "(" << s.channels << "," << s.height << "," << s.width << ")";
  return os.str();
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("tensor block: truncated input");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t TensorBlock::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string encode(const TensorBlock& block) {
  if (block.numel() != block.data.size())
    throw ShapeError("tensor block: payload size does not match dims");
  std::string out(TensorBlock::kMagic, 8);
  put_le<std::uint32_t>(out, TensorBlock::kVersion);
  put_le<std::uint32_t>(out, TensorBlock::kDtypeFloat32);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(block.dims.size()));
  for (auto d : block.dims) put_le<std::uint32_t>(out, d);
  out.reserve(out.size() + 4 * block.data.size() + 8 + block.manifest.size());
  for (float f : block.data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  put_le<std::uint64_t>(out, block.manifest.size());
  out += block.manifest;
  return out;
}

TensorBlock decode(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(8) != std::string(TensorBlock::kMagic, 8))
    throw std::runtime_error("tensor block: bad magic");
  const auto version = in.get_le<std::uint32_t>();
  if (version != TensorBlock::kVersion)
    throw std::runtime_error("tensor block: unsupported version " + std::to_string(version));
  if (in.get_le<std::uint32_t>() != TensorBlock::kDtypeFloat32)
    throw std::runtime_error("tensor block: unsupported dtype");
  TensorBlock block;
  const auto rank = in.get_le<std::uint32_t>();
  block.dims.resize(rank);
  for (auto& d : block.dims) d = in.get_le<std::uint32_t>();
  block.data.resize(block.numel());
  for (auto& f : block.data) f = std::bit_cast<float>(in.get_le<std::uint32_t>());
  const auto len = in.get_le<std::uint64_t>();
  block.manifest = in.take(static_cast<std::size_t>(len));
  if (!in.done()) throw std::runtime_error("tensor block: trailing bytes");
  return block;
}

void write_tensor_block(const std::filesystem::path& path, const TensorBlock& block) {
  const std::string bytes = encode(block);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TensorBlock read_tensor_block(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode(ss.str());
}

TensorBlock pack_samples(const Eigen::Ref<const Matrix>& samples, const Shape3& shape,
                         std::string manifest) {
  require_shape(static_cast<std::size_t>(samples.cols()) == shape.size(),
                "pack_samples: column count does not match shape " + to_string(shape));
  TensorBlock block;
  block.dims = {static_cast<std::uint32_t>(samples.rows()),
                static_cast<std::uint32_t>(shape.channels),
                static_cast<std::uint32_t>(shape.height),
                static_cast<std::uint32_t>(shape.width)};
  block.data.reserve(samples.size());
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c)
      block.data.push_back(static_cast<float>(samples(r, c)));
  block.manifest = std::move(manifest);
  return block;
}

Matrix unpack_samples(const TensorBlock& block, Shape3* shape) {
  if (block.dims.size() != 4) throw ShapeError("unpack_samples: expected rank-4 block");
  const Shape3 s{block.dims[1], block.dims[2], block.dims[3]};
  if (shape) *shape = s;
  const auto n = static_cast<Eigen::Index>(block.dims[0]);
  const auto d = static_cast<Eigen::Index>(s.size());
  Matrix out(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out(r, c) = block.data[static_cast<std::size_t>(r * d + c)];
  return out;
}

}  // namespace dsco
