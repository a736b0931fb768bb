#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "lesiontl/errors.hpp"
#include "lesiontl/model.hpp"

namespace lesiontl::model {
namespace {

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

constexpr char kMagic[4] = {'L', 'T', 'L', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ofstream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U get(std::ifstream& in, const std::filesystem::path& path) {
  U value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(U));
  if (!in) throw Error(ErrorCode::weight_load, "truncated weight file " + path.string());
  return value;
}

}  // namespace

void write_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

std::vector<NamedTensor> read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::weight_load, "cannot open weight file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error(ErrorCode::weight_load, "not a weight file: " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw Error(ErrorCode::weight_load, "unsupported weight file version");
  const auto count = get<std::uint32_t>(in, path);
  std::vector<NamedTensor> tensors(count);
  for (auto& t : tensors) {
    const auto name_len = get<std::uint32_t>(in, path);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto ndim = get<std::uint32_t>(in, path);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.dims.push_back(get<std::uint64_t>(in, path));
      n *= t.dims.back();
    }
    t.values.resize(n);
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw Error(ErrorCode::weight_load, "truncated weight file " + path.string());
  }
  return tensors;
}

std::vector<NamedTensor> collect_weights(const Model& model) {
  std::vector<NamedTensor> out;
  for (const auto* p : model.all_parameters()) {
    out.push_back({p->name, std::vector<std::uint64_t>(p->dims.begin(), p->dims.end()), p->value});
  }
  return out;
}

void assign_weights(Model& model, const std::vector<NamedTensor>& tensors, bool backbone_only) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (std::size_t i = 0; i < model.size(); ++i) {
    auto& layer = model.layer(i);
    if (backbone_only && layer.role() != nn::LayerRole::backbone) continue;
    for (auto* p : layer.parameters()) {
      const auto it = by_name.find(p->name);
      if (it == by_name.end()) throw Error(ErrorCode::weight_load, "weight file lacks tensor " + p->name);
      const NamedTensor& t = *it->second;
      if (!std::equal(t.dims.begin(), t.dims.end(), p->dims.begin(), p->dims.end())) {
        throw Error(ErrorCode::weight_load, "shape mismatch for " + p->name);
      }
      p->value = t.values;
    }
  }
}

}  // namespace lesiontl::model
