#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/training.hpp"

namespace lesiontl::training {

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::vector<csv::Row> rows;
  rows.reserve(history.size());
  for (const auto& r : history) {
    rows.push_back({std::to_string(r.epoch), csv::format_real(r.train_loss), csv::format_real(r.train_accuracy),
                    csv::format_real(r.val_loss), csv::format_real(r.val_accuracy)});
  }
  csv::write(path, {"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"}, rows);
}

std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path) {
  const auto rows = csv::read(path);
  if (rows.empty() || rows[0] != csv::Row{"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"}) {
    throw Error(ErrorCode::schema, "unexpected history header in " + path.string());
  }
  std::vector<EpochRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw Error(ErrorCode::schema, "malformed history row in " + path.string());
    out.push_back({std::stoi(r[0]), std::stod(r[1]), std::stod(r[2]), std::stod(r[3]), std::stod(r[4])});
  }
  return out;
}

}  // namespace lesiontl::training
