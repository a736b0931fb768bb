#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesiontl/backbone.hpp"
#include "lesiontl/image.hpp"

namespace lesiontl::dataset {

/// Melanoma is the positive class throughout.
enum class Label { melanoma, benign };
enum class Source { isic, mednode, other };

std::string_view to_string(Label label);
std::string_view to_string(Source source);
std::optional<Label> parse_label(std::string_view text);
std::optional<Source> parse_source(std::string_view text);

/// Class index used by the network output layer.
inline int class_index(Label label) { return label == Label::melanoma ? 1 : 0; }
inline Label label_from_index(int index) { return index == 1 ? Label::melanoma : Label::benign; }

struct LesionSample {
  std::string id;  // content-hash prefix, unique within a manifest
  std::filesystem::path image_path;
  Label label = Label::benign;
  Source source = Source::other;
};

inline constexpr double kDefaultBalancingRatio = 1.12;

struct DatasetManifest {
  std::vector<LesionSample> samples;  // sorted by id
  std::map<Label, std::size_t> class_counts;
  std::uint64_t seed = 0;
  double balancing_ratio = kDefaultBalancingRatio;

  std::size_t size() const { return samples.size(); }
  std::size_t count(Label label) const;
  const LesionSample* find(std::string_view id) const;
};

struct Reject {
  std::filesystem::path path;
  std::string reason;
};

struct ManifestBuild {
  DatasetManifest manifest;
  std::vector<Reject> rejects;
};

/// Scans <root>/melanoma and <root>/benign, validates every image, drops
/// content duplicates, and downsamples the majority class (seeded) so that
/// majority <= ceil(ratio * minority).
ManifestBuild build_manifest(const std::filesystem::path& root, std::uint64_t seed,
                             double balancing_ratio = kDefaultBalancingRatio);

/// Sorts, checks id uniqueness and recomputes class counts.
DatasetManifest make_manifest(std::vector<LesionSample> samples, std::uint64_t seed,
                              double balancing_ratio);

/// Manifest restricted to `ids` (order of the parent manifest is kept).
DatasetManifest subset(const DatasetManifest& manifest, std::span<const std::string> ids);

std::string manifest_csv(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path, std::uint64_t seed,
                              double balancing_ratio);
void write_rejects(const std::filesystem::path& path, std::span<const Reject> rejects);

struct SplitPlan {
  std::vector<std::string> train_ids;  // sorted
  std::vector<std::string> test_ids;   // sorted
  double test_fraction = 0.0;
  bool stratified = true;
  std::uint64_t seed = 0;
};

/// |test| = round(test_fraction * N). Stratified splits allocate per-class
/// test counts by largest remainder, so each class is within one of its
/// proportional share.
SplitPlan split_train_test(const DatasetManifest& manifest, double test_fraction, bool stratified,
                           std::uint64_t seed);

struct LabeledId {
  std::string id;
  Label label;
};

std::vector<LabeledId> labeled_ids(const DatasetManifest& manifest);
std::vector<LabeledId> labeled_ids(const DatasetManifest& manifest, std::span<const std::string> ids);

struct FoldPlan {
  int k = 0;
  bool stratified = true;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;  // id -> fold in [0, k)

  std::vector<std::string> fold(int index) const;
  std::vector<std::string> outside(int index) const;
  std::vector<std::size_t> sizes() const;
};

/// Shuffled ids are dealt round-robin; with stratification each class is
/// dealt in turn, continuing the round-robin counter, so both fold sizes and
/// per-class fold counts differ by at most one.
FoldPlan make_folds(std::span<const LabeledId> ids, int k, bool stratified, std::uint64_t seed);

enum class ResizeMode { bilinear };

struct PreprocessSpec {
  int target_height = 224;
  int target_width = 224;
  std::array<float, 3> channel_means{};
  std::array<float, 3> channel_stds{1.0f, 1.0f, 1.0f};
  ResizeMode resize_mode = ResizeMode::bilinear;
  BackboneId backbone_id = BackboneId::vgg16;

  /// Normalisation statistics of the generic pretraining set the shipped
  /// weights were trained with.
  static PreprocessSpec for_backbone(BackboneId id);
  void validate() const;
};

/// Planar [3][224][224] floats: (resized / 255 - mean_c) / std_c.
std::vector<float> preprocess(const Image& image, const PreprocessSpec& spec);
std::vector<float> preprocess_image(const std::filesystem::path& path, const PreprocessSpec& spec);

}  // namespace lesiontl::dataset
