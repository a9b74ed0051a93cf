#include "changen/gennet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "changen/core/error.hpp"

namespace changen {
namespace {

constexpr char kMagic[8] = {'C', 'H', 'G', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw CheckpointError("truncated checkpoint");
  return value;
}

std::string get_str(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 40)) throw CheckpointError("corrupt string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw CheckpointError("truncated checkpoint");
  return s;
}

std::uint8_t dtype_code(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kInt32: return 3;
    case torch::kUInt8: return 4;
    case torch::kBool: return 5;
    default: throw CheckpointError("unsupported tensor dtype in checkpoint");
  }
}

torch::Dtype code_dtype(std::uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kInt32;
    case 4: return torch::kUInt8;
    case 5: return torch::kBool;
    default: throw CheckpointError("unknown dtype code " + std::to_string(c));
  }
}

void put_tensor(std::ostream& os, const std::string& name, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  put_str(os, name);
  put<std::uint8_t>(os, dtype_code(c.scalar_type()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(c.dim()));
  for (auto d : c.sizes()) put<std::int64_t>(os, d);
  const auto nbytes = static_cast<std::uint64_t>(c.numel() * c.element_size());
  put<std::uint64_t>(os, nbytes);
  os.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(nbytes));
}

std::pair<std::string, torch::Tensor> get_tensor(std::istream& is) {
  auto name = get_str(is);
  const auto dtype = code_dtype(get<std::uint8_t>(is));
  const auto ndim = get<std::uint32_t>(is);
  if (ndim > 16) throw CheckpointError("corrupt tensor rank for " + name);
  std::vector<std::int64_t> dims(ndim);
  for (auto& d : dims) d = get<std::int64_t>(is);
  auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
  const auto nbytes = get<std::uint64_t>(is);
  if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
    throw CheckpointError("tensor " + name + " has inconsistent byte count");
  }
  is.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
  if (!is) throw CheckpointError("truncated tensor " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace

const TensorDict& Checkpoint::group(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint lacks tensor group '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::blob(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw CheckpointError("checkpoint lacks blob '" + name + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, ckpt.format_version);
    put<std::uint64_t>(os, ckpt.config_hash);
    put<std::uint64_t>(os, ckpt.iteration);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [group, dict] : ckpt.tensors) {
      put_str(os, group);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(dict.size()));
      for (const auto& [name, t] : dict) put_tensor(os, name, t);
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& [name, bytes] : ckpt.blobs) {
      put_str(os, name);
      put_str(os, bytes);
    }
    if (!os) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  Checkpoint ckpt;
  ckpt.format_version = get<std::uint32_t>(is);
  if (ckpt.format_version != Checkpoint::kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(ckpt.format_version));
  }
  ckpt.config_hash = get<std::uint64_t>(is);
  ckpt.iteration = get<std::uint64_t>(is);
  const auto groups = get<std::uint32_t>(is);
  for (std::uint32_t g = 0; g < groups; ++g) {
    auto name = get_str(is);
    const auto count = get<std::uint32_t>(is);
    TensorDict dict;
    dict.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) dict.push_back(get_tensor(is));
    ckpt.tensors.emplace(std::move(name), std::move(dict));
  }
  const auto blobs = get<std::uint32_t>(is);
  for (std::uint32_t b = 0; b < blobs; ++b) {
    auto name = get_str(is);
    ckpt.blobs.emplace(std::move(name), get_str(is));
  }
  return ckpt;
}

void check_config_hash(const Checkpoint& ckpt, std::uint64_t expected, bool force) {
  if (ckpt.config_hash != expected && !force) {
    throw CheckpointError("checkpoint was produced with a different configuration (hash " +
                          std::to_string(ckpt.config_hash) + " vs " + std::to_string(expected) +
                          "); pass --force to load anyway");
  }
}

TensorDict module_state(const torch::nn::Module& module) {
  TensorDict dict;
  for (const auto& item : module.named_parameters(true)) {
    dict.emplace_back("param:" + item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers(true)) {
    dict.emplace_back("buffer:" + item.key(), item.value().detach().clone());
  }
  return dict;
}

void load_module_state(torch::nn::Module& module, const TensorDict& state) {
  torch::NoGradGuard no_grad;
  std::map<std::string, torch::Tensor> targets;
  for (auto& item : module.named_parameters(true)) targets.emplace("param:" + item.key(), item.value());
  for (auto& item : module.named_buffers(true)) targets.emplace("buffer:" + item.key(), item.value());
  if (targets.size() != state.size()) {
    throw CheckpointError("module has " + std::to_string(targets.size()) + " tensors, checkpoint has " +
                          std::to_string(state.size()));
  }
  for (const auto& [name, value] : state) {
    auto it = targets.find(name);
    if (it == targets.end()) throw CheckpointError("unexpected tensor '" + name + "' in checkpoint");
    if (!it->second.sizes().equals(value.sizes()) || it->second.scalar_type() != value.scalar_type()) {
      throw CheckpointError("tensor '" + name + "' has a different shape or dtype");
    }
    it->second.copy_(value);
  }
}

std::string optimizer_bytes(const torch::optim::Optimizer& optimizer) {
  std::ostringstream os(std::ios::binary);
  torch::serialize::OutputArchive archive;
  optimizer.save(archive);
  archive.save_to(os);
  return os.str();
}

void load_optimizer_bytes(torch::optim::Optimizer& optimizer, const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  torch::serialize::InputArchive archive;
  archive.load_from(is);
  optimizer.load(archive);
}

}  // namespace changen
