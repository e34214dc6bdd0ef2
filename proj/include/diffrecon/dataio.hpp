#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace diffrecon {

/// A batch of grayscale images with labels. Pixels are float32 in the model
/// range [-1, 1], shape [N, 1, H, W]; labels are int64 class ids 0..9.
struct ImageBatch {
  torch::Tensor pixels;
  torch::Tensor labels;

  std::int64_t size() const { return pixels.size(0); }

  /// Throws if the shape/range/label invariants do not hold.
  void validate() const;

  /// Row-subset by index tensor (int64).
  ImageBatch index(const torch::Tensor& idx) const;
  ImageBatch head(std::int64_t n) const;
};

struct DatasetSplit {
  ImageBatch train;
  ImageBatch test;
  std::string name;
};

/// Parse an IDX rank-3 image file (magic 2051). Returns a uint8 tensor
/// [count, rows, cols].
torch::Tensor load_idx_images(const std::filesystem::path& path);

/// Parse an IDX rank-1 label file (magic 2049). Returns an int64 tensor
/// [count] with every entry in 0..9.
torch::Tensor load_idx_labels(const std::filesystem::path& path);

/// Map raw bytes 0..255 to [-1, 1]: v -> v/127.5 - 1.
torch::Tensor normalize(const torch::Tensor& raw);

/// Inverse of normalize with rounding, clamped to 0..255.
torch::Tensor denormalize(const torch::Tensor& pixels);

/// Load the canonical four-file layout from a directory:
///   train-images-idx3-ubyte, train-labels-idx1-ubyte,
///   t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
/// MNIST and KMNIST share this layout; `name` is the dataset identifier.
DatasetSplit load_dataset(const std::filesystem::path& dir,
                          const std::string& name);

/// Deterministic permutation of 0..n-1 for a given seed.
torch::Tensor shuffled_indices(std::int64_t n, std::uint64_t seed);

/// Split the permutation into batches; every index appears exactly once.
std::vector<torch::Tensor> epoch_batches(std::int64_t n,
                                         std::int64_t batch_size,
                                         std::uint64_t seed);

}  // namespace diffrecon
