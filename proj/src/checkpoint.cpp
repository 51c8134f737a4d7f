#include "tamrl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace tamrl {
namespace {

constexpr char kMagic[8] = {'T', 'A', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw TensorError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const TensorMap& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw TensorError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [key, t] : entries) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_pod<int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.data().size() * sizeof(double)));
  }
  if (!os) throw TensorError("write failure on checkpoint: " + path);
}

TensorMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw TensorError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw TensorError("bad checkpoint magic in " + path);
  }
  uint32_t count = read_pod<uint32_t>(is);
  TensorMap out;
  out.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    uint32_t klen = read_pod<uint32_t>(is);
    std::string key(klen, '\0');
    is.read(key.data(), klen);
    uint32_t ndim = read_pod<uint32_t>(is);
    std::vector<int> shape(ndim);
    size_t n = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = read_pod<int32_t>(is);
      n *= static_cast<size_t>(shape[d]);
    }
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw TensorError("truncated checkpoint: " + path);
    out.emplace_back(std::move(key), Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

void restore_into(const TensorMap& archive, const TensorMap& params) {
  std::map<std::string, const Tensor*> index;
  for (const auto& [k, t] : archive) index[k] = &t;
  for (const auto& [k, t] : params) {
    auto it = index.find(k);
    if (it == index.end()) throw TensorError("checkpoint missing key: " + k);
    if (it->second->shape() != t.shape()) {
      throw TensorError("checkpoint shape mismatch for " + k + ": " +
                        Tensor::shape_str(it->second->shape()) + " vs " +
                        Tensor::shape_str(t.shape()));
    }
    const_cast<Tensor&>(t).data() = it->second->data();
  }
}

uint64_t params_checksum(const TensorMap& params) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [k, t] : params) {
    mix(k.data(), k.size());
    mix(t.data().data(), t.data().size() * sizeof(double));
  }
  return h;
}

}  // namespace tamrl
