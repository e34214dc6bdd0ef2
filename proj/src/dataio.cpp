#include "diffrecon/dataio.hpp"

#include <cstring>

#include "diffrecon/util.hpp"

namespace diffrecon {

namespace {

constexpr std::uint32_t kImageMagic = 2051;  // 0x00000803, rank-3 u8
constexpr std::uint32_t kLabelMagic = 2049;  // 0x00000801, rank-1 u8

std::uint32_t read_be32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return (std::uint32_t(u[0]) << 24) | (std::uint32_t(u[1]) << 16) |
         (std::uint32_t(u[2]) << 8) | std::uint32_t(u[3]);
}

}  // namespace

void ImageBatch::validate() const {
  TORCH_CHECK(pixels.dim() == 4 && pixels.size(1) == 1,
              "pixels must be [N,1,H,W]");
  TORCH_CHECK(pixels.scalar_type() == torch::kFloat32, "pixels must be float32");
  TORCH_CHECK(labels.dim() == 1 && labels.size(0) == pixels.size(0),
              "labels length must equal image count");
  if (size() == 0) return;
  auto mn = pixels.min().item<float>();
  auto mx = pixels.max().item<float>();
  if (mn < -1.0f || mx > 1.0f)
    throw CorruptionError("pixel values outside [-1,1]");
  auto lmin = labels.min().item<std::int64_t>();
  auto lmax = labels.max().item<std::int64_t>();
  if (lmin < 0 || lmax > 9) throw CorruptionError("class index outside 0..9");
}

ImageBatch ImageBatch::index(const torch::Tensor& idx) const {
  return {pixels.index_select(0, idx), labels.index_select(0, idx)};
}

ImageBatch ImageBatch::head(std::int64_t n) const {
  n = std::min(n, size());
  return {pixels.narrow(0, 0, n), labels.narrow(0, 0, n)};
}

torch::Tensor load_idx_images(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 16)
    throw CorruptionError("IDX image file shorter than header: " +
                          path.string());
  auto magic = read_be32(bytes.data());
  if (magic != kImageMagic)
    throw FormatError("bad IDX image magic " + std::to_string(magic) +
                      " (want 2051): " + path.string());
  std::int64_t count = read_be32(bytes.data() + 4);
  std::int64_t rows = read_be32(bytes.data() + 8);
  std::int64_t cols = read_be32(bytes.data() + 12);
  std::size_t want = std::size_t(count) * rows * cols;
  if (bytes.size() - 16 != want)
    throw CorruptionError("IDX payload length " +
                          std::to_string(bytes.size() - 16) + " != " +
                          std::to_string(want) + ": " + path.string());
  auto out = torch::empty({count, rows, cols}, torch::kUInt8);
  std::memcpy(out.data_ptr<std::uint8_t>(), bytes.data() + 16, want);
  return out;
}

torch::Tensor load_idx_labels(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 8)
    throw CorruptionError("IDX label file shorter than header: " +
                          path.string());
  auto magic = read_be32(bytes.data());
  if (magic != kLabelMagic)
    throw FormatError("bad IDX label magic " + std::to_string(magic) +
                      " (want 2049): " + path.string());
  std::int64_t count = read_be32(bytes.data() + 4);
  if (bytes.size() - 8 != std::size_t(count))
    throw CorruptionError("IDX label payload length mismatch: " +
                          path.string());
  auto out = torch::empty({count}, torch::kInt64);
  auto* dst = out.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < count; ++i) {
    auto v = static_cast<unsigned char>(bytes[8 + i]);
    if (v > 9)
      throw CorruptionError("label " + std::to_string(int(v)) +
                            " outside 0..9 at index " + std::to_string(i));
    dst[i] = v;
  }
  return out;
}

torch::Tensor normalize(const torch::Tensor& raw) {
  TORCH_CHECK(raw.scalar_type() == torch::kUInt8, "normalize expects uint8");
  auto x = raw.to(torch::kFloat32).div(127.5).sub(1.0);
  if (x.dim() == 3) x = x.unsqueeze(1);
  return x;
}

torch::Tensor denormalize(const torch::Tensor& pixels) {
  return pixels.add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8);
}

DatasetSplit load_dataset(const std::filesystem::path& dir,
                          const std::string& name) {
  auto images = [&](const char* f) { return load_idx_images(dir / f); };
  auto labels = [&](const char* f) { return load_idx_labels(dir / f); };
  DatasetSplit split;
  split.name = name;
  split.train = {normalize(images("train-images-idx3-ubyte")),
                 labels("train-labels-idx1-ubyte")};
  split.test = {normalize(images("t10k-images-idx3-ubyte")),
                labels("t10k-labels-idx1-ubyte")};
  split.train.validate();
  split.test.validate();
  return split;
}

torch::Tensor shuffled_indices(std::int64_t n, std::uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randperm(n, gen, torch::kInt64);
}

std::vector<torch::Tensor> epoch_batches(std::int64_t n,
                                         std::int64_t batch_size,
                                         std::uint64_t seed) {
  TORCH_CHECK(batch_size > 0, "batch_size must be positive");
  auto perm = shuffled_indices(n, seed);
  std::vector<torch::Tensor> out;
  for (std::int64_t i = 0; i < n; i += batch_size)
    out.push_back(perm.narrow(0, i, std::min(batch_size, n - i)));
  return out;
}

}  // namespace diffrecon
