#include "diffrecon/checkpoint.hpp"

#include <cstring>
#include <map>

namespace diffrecon {

namespace {

using ordered_json = nlohmann::ordered_json;

struct NamedTensor {
  std::string name;
  torch::Tensor tensor;
};

// Parameters first, then buffers, each in registration order. The order is
// deterministic for a given module class, which keeps re-saves byte-identical.
std::vector<NamedTensor> collect_tensors(const torch::nn::Module& module) {
  std::vector<NamedTensor> out;
  for (const auto& p : module.named_parameters(/*recurse=*/true))
    out.push_back({p.key(), p.value()});
  for (const auto& b : module.named_buffers(/*recurse=*/true))
    out.push_back({b.key(), b.value()});
  return out;
}

void write_u32le(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

void write_u64le(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32le(const char* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;  // host is little-endian on all supported targets
}

std::uint64_t read_u64le(const char* p) {
  std::uint64_t v = 0;
  std::memcpy(&v, p, 8);
  return v;
}

struct Parsed {
  nlohmann::json manifest;
  const char* buffer;
  std::size_t buffer_len;
};

Parsed parse(const std::vector<char>& bytes) {
  if (bytes.size() < 20) throw CorruptionError("checkpoint shorter than header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("bad checkpoint magic");
  auto version = read_u32le(bytes.data() + 8);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  auto manifest_len = read_u64le(bytes.data() + 12);
  if (20 + manifest_len > bytes.size())
    throw CorruptionError("manifest extends past end of file");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.data() + 20,
                                     bytes.data() + 20 + manifest_len);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("unparseable manifest: ") + e.what());
  }
  return {std::move(manifest), bytes.data() + 20 + manifest_len,
          bytes.size() - 20 - std::size_t(manifest_len)};
}

}  // namespace

void save_checkpoint(const torch::nn::Module& module,
                     const nlohmann::json& meta,
                     const std::filesystem::path& path) {
  auto tensors = collect_tensors(module);

  ordered_json manifest;
  manifest["meta"] = meta;
  auto& list = manifest["tensors"] = ordered_json::array();

  std::string buffer;
  for (const auto& [name, t] : tensors) {
    TORCH_CHECK(t.scalar_type() == torch::kFloat32,
                "only float32 tensors are serialized, got ", t.scalar_type(),
                " for ", name);
    auto c = t.detach().contiguous();
    ordered_json entry;
    entry["name"] = name;
    entry["shape"] = c.sizes().vec();
    entry["dtype"] = "float32";
    entry["offset"] = buffer.size();
    list.push_back(std::move(entry));
    auto n = std::size_t(c.numel()) * 4;
    buffer.append(reinterpret_cast<const char*>(c.data_ptr<float>()), n);
  }

  std::string manifest_str = manifest.dump();
  std::string out;
  out.reserve(20 + manifest_str.size() + buffer.size());
  out.append(kCheckpointMagic, 8);
  write_u32le(out, kCheckpointVersion);
  write_u64le(out, manifest_str.size());
  out += manifest_str;
  out += buffer;
  atomic_write_file(path, out);
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  auto parsed = parse(bytes);
  return parsed.manifest.value("meta", nlohmann::json::object());
}

nlohmann::json load_checkpoint_into(torch::nn::Module& module,
                                    const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  auto parsed = parse(bytes);

  if (!parsed.manifest.contains("tensors"))
    throw CorruptionError("manifest missing tensor list");

  std::map<std::string, torch::Tensor> want;
  for (auto& [name, t] : collect_tensors(module)) {
    if (!want.emplace(name, t).second)
      throw CheckpointError("duplicate tensor name in module: " + name);
  }

  torch::NoGradGuard ng;
  std::size_t consumed = 0;
  for (const auto& entry : parsed.manifest["tensors"]) {
    std::string name = entry.at("name");
    auto it = want.find(name);
    if (it == want.end())
      throw CheckpointError("manifest names tensor absent from model: " + name);
    auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    if (shape != it->second.sizes().vec())
      throw CheckpointError("shape mismatch for " + name);
    if (entry.at("dtype").get<std::string>() != "float32")
      throw CheckpointError("unsupported dtype for " + name);
    std::size_t offset = entry.at("offset");
    std::size_t len = std::size_t(it->second.numel()) * 4;
    if (offset + len > parsed.buffer_len)
      throw CorruptionError("tensor " + name + " extends past buffer end");
    auto src = torch::from_blob(
        const_cast<char*>(parsed.buffer + offset), it->second.sizes(),
        torch::kFloat32);
    it->second.copy_(src);
    consumed += len;
    want.erase(it);
  }
  if (!want.empty())
    throw CheckpointError("checkpoint missing tensor: " + want.begin()->first);
  if (consumed != parsed.buffer_len)
    throw CorruptionError("buffer length does not match manifest total");
  return parsed.manifest.value("meta", nlohmann::json::object());
}

}  // namespace diffrecon
