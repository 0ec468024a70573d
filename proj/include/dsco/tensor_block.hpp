#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsco/common.hpp"

namespace dsco {

/// n-dimensional float32 array with an attached UTF-8 manifest.
///
/// On-disk layout (all integers little-endian):
///
///   bytes 0..7    magic "DSCOTNSR"
///   u32           format version (currently 1)
///   u32           dtype tag (0 = float32)
///   u32           rank
///   u32 x rank    dims
///   f32 x prod    payload, row-major, little-endian IEEE-754
///   u64           manifest byte length
///   bytes         manifest (UTF-8, JSON text)
struct TensorBlock {
  static constexpr char kMagic[9] = "DSCOTNSR";
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint32_t kDtypeFloat32 = 0;

  std::vector<std::uint32_t> dims;
  std::vector<float> data;
  std::string manifest;

  std::size_t numel() const;
  friend bool operator==(const TensorBlock&, const TensorBlock&) = default;
};

std::string encode(const TensorBlock& block);
TensorBlock decode(const std::string& bytes);

void write_tensor_block(const std::filesystem::path& path, const TensorBlock& block);
TensorBlock read_tensor_block(const std::filesystem::path& path);

/// Packs an N x D sample matrix as an (N, C, H, W) block.
TensorBlock pack_samples(const Eigen::Ref<const Matrix>& samples, const Shape3& shape,
                         std::string manifest = {});
/// Inverse of pack_samples; requires rank 4.
Matrix unpack_samples(const TensorBlock& block, Shape3* shape = nullptr);

}  // namespace dsco
