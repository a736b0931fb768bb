#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lesiontl/csv.hpp"
#include "lesiontl/dataset.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/hash.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::dataset {
namespace {

constexpr std::size_t kIdLength = 16;
constexpr std::uint64_t kBalanceStream = 0xba1a;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool has_image_extension(const std::filesystem::path& p) {
  const std::string ext = lower(p.extension().string());
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

Source infer_source(const std::string& filename) {
  const std::string name = lower(filename);
  if (name.rfind("isic", 0) == 0) return Source::isic;
  if (name.find("mednode") != std::string::npos || name.find("med-node") != std::string::npos ||
      name.find("med_node") != std::string::npos) {
    return Source::mednode;
  }
  return Source::other;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::melanoma ? "melanoma" : "benign"; }

std::string_view to_string(Source source) {
  switch (source) {
    case Source::isic: return "isic";
    case Source::mednode: return "mednode";
    case Source::other: return "other";
  }
  return "other";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "melanoma") return Label::melanoma;
  if (text == "benign") return Label::benign;
  return std::nullopt;
}

std::optional<Source> parse_source(std::string_view text) {
  if (text == "isic") return Source::isic;
  if (text == "mednode") return Source::mednode;
  if (text == "other") return Source::other;
  return std::nullopt;
}

std::size_t DatasetManifest::count(Label label) const {
  const auto it = class_counts.find(label);
  return it == class_counts.end() ? 0 : it->second;
}

const LesionSample* DatasetManifest::find(std::string_view id) const {
  const auto it = std::lower_bound(samples.begin(), samples.end(), id,
                                   [](const LesionSample& s, std::string_view v) { return s.id < v; });
  return it != samples.end() && it->id == id ? &*it : nullptr;
}

DatasetManifest make_manifest(std::vector<LesionSample> samples, std::uint64_t seed, double balancing_ratio) {
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].id == samples[i - 1].id) throw Error(ErrorCode::data, "duplicate sample id " + samples[i].id);
  }
  DatasetManifest m;
  m.class_counts = {{Label::melanoma, 0}, {Label::benign, 0}};
  for (const auto& s : samples) ++m.class_counts[s.label];
  m.samples = std::move(samples);
  m.seed = seed;
  m.balancing_ratio = balancing_ratio;
  return m;
}

ManifestBuild build_manifest(const std::filesystem::path& root, std::uint64_t seed, double balancing_ratio) {
  namespace fs = std::filesystem;
  if (!(balancing_ratio >= 1.0) || !std::isfinite(balancing_ratio)) {
    throw Error(ErrorCode::config, "balancing ratio must be a finite value >= 1");
  }
  ManifestBuild out;
  std::unordered_map<std::string, std::string> seen;  // full hash -> id
  std::vector<LesionSample> by_class[2];

  for (Label label : {Label::melanoma, Label::benign}) {
    const fs::path dir = root / std::string(to_string(label));
    if (!fs::is_directory(dir)) {
      throw Error(ErrorCode::structural, "missing class directory " + dir.string());
    }
  }
  for (Label label : {Label::melanoma, Label::benign}) {
    const fs::path dir = root / std::string(to_string(label));
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && has_image_extension(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const fs::path shown = file.lexically_normal();
      std::vector<std::uint8_t> bytes;
      try {
        bytes = read_bytes(file);
        decode_image(bytes);
      } catch (const Error& e) {
        out.rejects.push_back({shown, std::string("decode: ") + e.what()});
        continue;
      }
      const std::string digest = sha256_hex(bytes);
      const std::string id = digest.substr(0, kIdLength);
      if (auto [it, inserted] = seen.emplace(digest, id); !inserted) {
        out.rejects.push_back({shown, "duplicate of " + it->second});
        continue;
      }
      by_class[label == Label::melanoma ? 0 : 1].push_back(
          {id, shown, label, infer_source(file.filename().string())});
    }
    if (by_class[label == Label::melanoma ? 0 : 1].empty()) {
      throw Error(ErrorCode::empty_class, "no usable images in " + dir.string());
    }
  }

  auto& mel = by_class[0];
  auto& ben = by_class[1];
  auto& majority = mel.size() >= ben.size() ? mel : ben;
  const std::size_t minority = std::min(mel.size(), ben.size());
  const auto cap = static_cast<std::size_t>(std::ceil(balancing_ratio * static_cast<double>(minority) - 1e-9));
  if (majority.size() > cap) {
    std::sort(majority.begin(), majority.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    Rng rng(derive_seed(seed, kBalanceStream));
    rng.shuffle(std::span<LesionSample>(majority));
    majority.resize(cap);
  }

  std::vector<LesionSample> all;
  all.reserve(mel.size() + ben.size());
  std::move(mel.begin(), mel.end(), std::back_inserter(all));
  std::move(ben.begin(), ben.end(), std::back_inserter(all));
  out.manifest = make_manifest(std::move(all), seed, balancing_ratio);
  return out;
}

DatasetManifest subset(const DatasetManifest& manifest, std::span<const std::string> ids) {
  std::vector<LesionSample> picked;
  picked.reserve(ids.size());
  for (const auto& id : ids) {
    const LesionSample* s = manifest.find(id);
    if (s == nullptr) throw Error(ErrorCode::data, "unknown sample id " + id);
    picked.push_back(*s);
  }
  return make_manifest(std::move(picked), manifest.seed, manifest.balancing_ratio);
}

std::string manifest_csv(const DatasetManifest& manifest) {
  std::string text = "id,image_path,label,source\n";
  for (const auto& s : manifest.samples) {
    text += csv::join({s.id, s.image_path.generic_string(), std::string(to_string(s.label)),
                       std::string(to_string(s.source))});
    text += '\n';
  }
  return text;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << manifest_csv(manifest);
}

DatasetManifest read_manifest(const std::filesystem::path& path, std::uint64_t seed, double balancing_ratio) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows[0] != csv::Row{"id", "image_path", "label", "source"}) {
    throw Error(ErrorCode::structural, "manifest header must be id,image_path,label,source");
  }
  std::vector<LesionSample> samples;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw Error(ErrorCode::structural, "manifest row " + std::to_string(i) + " has wrong arity");
    const auto label = parse_label(r[2]);
    const auto source = parse_source(r[3]);
    if (!label || !source) throw Error(ErrorCode::structural, "manifest row " + std::to_string(i) + " is malformed");
    samples.push_back({r[0], r[1], *label, *source});
  }
  return make_manifest(std::move(samples), seed, balancing_ratio);
}

void write_rejects(const std::filesystem::path& path, std::span<const Reject> rejects) {
  std::vector<csv::Row> rows;
  for (const auto& r : rejects) rows.push_back({r.path.generic_string(), r.reason});
  csv::write(path, {"path", "reason"}, rows);
}

}  // namespace lesiontl::dataset
