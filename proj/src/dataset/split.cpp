#include <algorithm>
#include <cmath>
#include <numeric>

#include "lesiontl/dataset.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::dataset {
namespace {

constexpr std::uint64_t kSplitStream = 0x5b117;
constexpr std::uint64_t kFoldStream = 0xf01d;

std::vector<std::string> ids_of(const DatasetManifest& m, std::optional<Label> label) {
  std::vector<std::string> ids;
  for (const auto& s : m.samples) {
    if (!label || s.label == *label) ids.push_back(s.id);
  }
  return ids;
}

}  // namespace

SplitPlan split_train_test(const DatasetManifest& manifest, double test_fraction, bool stratified,
                           std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw Error(ErrorCode::config, "test fraction must lie in [0, 1]");
  }
  if (manifest.samples.empty()) throw Error(ErrorCode::data, "cannot split an empty manifest");

  const std::size_t n = manifest.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

  SplitPlan plan;
  plan.test_fraction = test_fraction;
  plan.stratified = stratified;
  plan.seed = seed;
  Rng rng(derive_seed(seed, kSplitStream));

  std::vector<std::string> test;
  if (!stratified) {
    auto ids = ids_of(manifest, std::nullopt);
    rng.shuffle(std::span<std::string>(ids));
    test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  } else {
    const Label classes[2] = {Label::melanoma, Label::benign};
    std::size_t quota[2];
    double remainder[2];
    std::size_t allocated = 0;
    for (int c = 0; c < 2; ++c) {
      const std::size_t count = manifest.count(classes[c]);
      if (test_fraction > 0.0 && test_fraction < 1.0 && count == 0) {
        throw Error(ErrorCode::stratification,
                    "cannot stratify: class " + std::string(to_string(classes[c])) + " has no samples");
      }
      const double ideal = test_fraction * static_cast<double>(count);
      quota[c] = static_cast<std::size_t>(std::floor(ideal));
      remainder[c] = ideal - static_cast<double>(quota[c]);
      allocated += quota[c];
    }
    // Largest remainder; ties go to the positive class.
    std::size_t missing = n_test > allocated ? n_test - allocated : 0;
    int order[2] = {0, 1};
    if (remainder[1] > remainder[0]) std::swap(order[0], order[1]);
    for (int c : order) {
      if (missing == 0) break;
      if (quota[c] < manifest.count(classes[c])) {
        ++quota[c];
        --missing;
      }
    }
    if (missing != 0) throw Error(ErrorCode::stratification, "stratified test allocation is infeasible");
    for (int c = 0; c < 2; ++c) {
      auto ids = ids_of(manifest, classes[c]);
      rng.shuffle(std::span<std::string>(ids));
      test.insert(test.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
  }

  std::sort(test.begin(), test.end());
  plan.test_ids = test;
  for (const auto& s : manifest.samples) {
    if (!std::binary_search(test.begin(), test.end(), s.id)) plan.train_ids.push_back(s.id);
  }
  return plan;
}

std::vector<LabeledId> labeled_ids(const DatasetManifest& manifest) {
  std::vector<LabeledId> out;
  out.reserve(manifest.size());
  for (const auto& s : manifest.samples) out.push_back({s.id, s.label});
  return out;
}

std::vector<LabeledId> labeled_ids(const DatasetManifest& manifest, std::span<const std::string> ids) {
  std::vector<LabeledId> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const LesionSample* s = manifest.find(id);
    if (s == nullptr) throw Error(ErrorCode::data, "unknown sample id " + id);
    out.push_back({s->id, s->label});
  }
  return out;
}

FoldPlan make_folds(std::span<const LabeledId> ids, int k, bool stratified, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::config, "k must be at least 2");
  if (ids.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::insufficient_data, "need at least k=" + std::to_string(k) + " samples, got " +
                                                  std::to_string(ids.size()));
  }
  FoldPlan plan;
  plan.k = k;
  plan.stratified = stratified;
  plan.seed = seed;

  std::vector<LabeledId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].id == sorted[i - 1].id) throw Error(ErrorCode::data, "duplicate id " + sorted[i].id);
  }

  Rng rng(derive_seed(seed, kFoldStream));
  std::vector<std::string> deal;
  deal.reserve(sorted.size());
  if (stratified) {
    for (Label label : {Label::melanoma, Label::benign}) {
      std::vector<std::string> group;
      for (const auto& s : sorted) {
        if (s.label == label) group.push_back(s.id);
      }
      rng.shuffle(std::span<std::string>(group));
      deal.insert(deal.end(), group.begin(), group.end());
    }
  } else {
    for (const auto& s : sorted) deal.push_back(s.id);
    rng.shuffle(std::span<std::string>(deal));
  }
  for (std::size_t i = 0; i < deal.size(); ++i) plan.assignment[deal[i]] = static_cast<int>(i % k);
  return plan;
}

std::vector<std::string> FoldPlan::fold(int index) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == index) out.push_back(id);
  }
  return out;
}

std::vector<std::string> FoldPlan::outside(int index) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f != index) out.push_back(id);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [id, f] : assignment) ++out[static_cast<std::size_t>(f)];
  return out;
}

}  // namespace lesiontl::dataset
