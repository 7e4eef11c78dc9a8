#include "tsr/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unistd.h>

namespace tsr::nn {

namespace fs = std::filesystem;

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

template <typename T>
std::string to_le_bytes(const std::vector<T>& values) {
  std::string out(values.size() * sizeof(T), '\0');
  std::memcpy(out.data(), values.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i * sizeof(T)),
                   out.begin() + static_cast<std::ptrdiff_t>((i + 1) * sizeof(T)));
    }
  }
  return out;
}

template <typename T>
void from_le_bytes(std::string bytes, std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i * sizeof(T)),
                   bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * sizeof(T)));
    }
  }
  std::memcpy(values.data(), bytes.data(), bytes.size());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool selected(const std::string& name, const std::string& prefix) {
  return prefix.empty() || name.rfind(prefix, 0) == 0;
}

fs::path temp_sibling(const fs::path& target) {
  static int counter = 0;
  return target.parent_path() /
         (target.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void atomic_write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = temp_sibling(path);
  write_file(tmp, content);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::IoError, "rename to " + path.string() + ": " + ec.message());
  }
}

template <typename T>
void save_checkpoint(const fs::path& dir, const ParamStore<T>& store, const CheckpointInfo& info,
                     const std::string& prefix) {
  if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
  const fs::path tmp = temp_sibling(dir);
  fs::remove_all(tmp);
  try {
    fs::create_directories(tmp);
    nlohmann::json manifest;
    manifest["schema_version"] = kCheckpointSchema;
    manifest["tag"] = info.tag;
    manifest["seed"] = info.seed;
    manifest["dtype"] = dtype_name<T>();
    manifest["extra"] = info.extra;
    auto& params = manifest["params"] = nlohmann::json::array();
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Parameter<T>& p = store[i];
      if (!selected(p.name, prefix)) continue;
      const std::string file = p.name + ".bin";
      write_file(tmp / file, to_le_bytes(p.value.values()));
      params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"file", file}});
    }
    write_file(tmp / "manifest.json", manifest.dump(2));
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::rename(tmp, dir);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw Error(ErrorCode::IoError, e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointMismatch, "bad manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("schema_version", 0) != kCheckpointSchema) {
    throw Error(ErrorCode::CheckpointMismatch, "unsupported schema version in " + dir.string());
  }
  CheckpointInfo info;
  info.tag = manifest.value("tag", "");
  info.seed = manifest.value("seed", std::uint64_t{0});
  info.extra = manifest.value("extra", nlohmann::json::object());
  return info;
}

template <typename T>
CheckpointInfo load_checkpoint(const fs::path& dir, ParamStore<T>& store, const LoadOptions& opts) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  if (manifest.value("dtype", "") != dtype_name<T>()) {
    throw Error(ErrorCode::CheckpointMismatch, "dtype " + manifest.value("dtype", std::string{"?"}) + " in " +
                                                   dir.string() + ", expected " + dtype_name<T>());
  }
  std::unordered_map<std::string, nlohmann::json> entries;
  for (const auto& e : manifest.at("params")) entries[e.at("name").get<std::string>()] = e;

  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter<T>& p = store[i];
    if (!selected(p.name, opts.prefix)) continue;
    auto it = entries.find(p.name);
    if (it == entries.end()) {
      if (opts.allow_missing) continue;
      throw Error(ErrorCode::CheckpointMismatch, "parameter " + p.name + " missing from " + dir.string());
    }
    const Shape shape = it->second.at("shape").template get<Shape>();
    if (shape != p.value.shape()) {
      throw Error(ErrorCode::CheckpointMismatch, "parameter " + p.name + " has shape " + shape_str(shape) +
                                                     ", model expects " + shape_str(p.value.shape()));
    }
    std::string bytes = read_file(dir / it->second.at("file").template get<std::string>());
    if (bytes.size() != p.value.size() * sizeof(T)) {
      throw Error(ErrorCode::CheckpointMismatch, "parameter file for " + p.name + " has wrong length");
    }
    from_le_bytes(std::move(bytes), p.value.values());
  }
  return info;
}

template <typename T>
std::uint64_t params_hash(const ParamStore<T>& store, const std::string& prefix) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter<T>& p = store[i];
    if (!selected(p.name, prefix)) continue;
    h = fnv1a(p.name.data(), p.name.size(), h);
    const std::string bytes = to_le_bytes(p.value.values());
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return h;
}

template void save_checkpoint<float>(const fs::path&, const ParamStore<float>&, const CheckpointInfo&,
                                     const std::string&);
template void save_checkpoint<double>(const fs::path&, const ParamStore<double>&, const CheckpointInfo&,
                                      const std::string&);
template CheckpointInfo load_checkpoint<float>(const fs::path&, ParamStore<float>&, const LoadOptions&);
template CheckpointInfo load_checkpoint<double>(const fs::path&, ParamStore<double>&, const LoadOptions&);
template std::uint64_t params_hash<float>(const ParamStore<float>&, const std::string&);
template std::uint64_t params_hash<double>(const ParamStore<double>&, const std::string&);

}  // namespace tsr::nn
