#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <fstream>
#include <regex>
#include <sstream>

#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/experiment.hpp"
#include "support.hpp"

using namespace lesiontl;
using namespace lesiontl::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 20 red/blue images, tiny backbone, one short epoch, no k-fold.
ExperimentConfig fixture_config(const testing::ScratchDir& dir, int per_class = 10) {
  if (!fs::exists(dir / "data")) testing::write_two_class_corpus(dir / "data", per_class, per_class, 3);
  ExperimentConfig c;
  c.dataset_root = dir / "data";
  c.output_dir = dir / "runs";
  c.seed = 7;
  c.model = testing::tiny_spec(224);
  c.model.head_widths = {8};
  c.training.learning_rate = 1e-3;
  c.training.max_epochs = 1;
  c.training.batch_size = 4;
  c.kfold.enabled = false;
  c.validation_fraction = 0.25;
  return c;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::io;
}

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(LESIONTL_CLI) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config validation reports every violation at once") {
  testing::ScratchDir dir("cfg");
  const nlohmann::json j = {{"dataset_root", (dir / "missing").string()},
                            {"output_dir", (dir / "out").string()},
                            {"split", {{"test_fraction", 1.5}}},
                            {"kfold", {{"k", 1}}},
                            {"model", {{"backbone", "vgg16"}, {"input_size", 64}}},
                            {"training", {{"max_epochs", 0}}},
                            {"colour", "blue"}};
  try {
    parse_config(j);
    FAIL("unknown key should be rejected");
  } catch (const ValidationError& e) {
    CHECK(e.violations().size() == 1);
    CHECK(e.violations()[0].find("colour") != std::string::npos);
  }
  auto clean = j;
  clean.erase("colour");
  const auto c = parse_config(clean);
  try {
    validate(c);
    FAIL("expected violations");
  } catch (const ValidationError& e) {
    CHECK(e.code() == ErrorCode::validation);
    const auto& v = e.violations();
    CHECK(v.size() == 5);
    const auto mentions = [&](const std::string& what) {
      return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(what) != std::string::npos; });
    };
    CHECK(mentions("dataset_root"));
    CHECK(mentions("test_fraction"));
    CHECK(mentions("kfold.k"));
    CHECK(mentions("input_size"));
    CHECK(mentions("max_epochs"));
  }
}

TEST_CASE("config JSON round-trips and the digest ignores output_dir") {
  testing::ScratchDir dir("cfg-rt");
  auto c = fixture_config(dir);
  c.suite = Suite::compare_optimizers;
  c.optimizer_learning_rates[training::OptimizerKind::sgd] = 0.05;
  const nlohmann::json j = c;
  const auto back = parse_config(j);
  CHECK(back.training.seed == c.seed);
  CHECK(nlohmann::json(parse_config(nlohmann::json(back))) == nlohmann::json(back));
  CHECK(config_digest(back) == config_digest(c));

  auto moved = c;
  moved.output_dir = dir / "elsewhere";
  CHECK(config_digest(moved) == config_digest(c));
  auto reseeded = c;
  reseeded.seed = 8;
  CHECK(config_digest(reseeded) != config_digest(c));

  const auto id = run_id(c);
  CHECK(std::regex_match(id, std::regex("compare_optimizers-7-[0-9a-f]{8}")));
  CHECK(id.substr(id.size() - 8) == config_digest(c).substr(0, 8));

  CHECK(parse_config(nlohmann::json{{"seed", 5}}).training.seed == 5);
  CHECK(parse_suite("ablation") == Suite::ablation);
  CHECK_FALSE(parse_suite("everything"));
}

TEST_CASE("a single run writes every artifact and is byte-reproducible") {
  testing::ScratchDir dir("single");
  auto c = fixture_config(dir);
  c.training.max_epochs = 2;
  const auto art = run_experiment(c);
  CHECK(art.run_dir == c.output_dir / run_id(c));
  for (const char* leaf : {"config_snapshot.json", "manifest.csv", "rejects.csv", "model_summary.csv", "history.csv",
                           "report.json", "learning_curves.png", "learning_curves.csv", "timing.json",
                           "model/weights.ltlw", "model/model_spec.json", "checkpoints/best/weights.ltlw"}) {
    CAPTURE(leaf);
    CHECK(fs::exists(art.run_dir / leaf));
  }
  for (const auto& p : art.all()) CHECK(fs::exists(p));

  const auto report = evaluation::read_report(art.run_dir / "report.json");
  CHECK(report.architecture == "tiny");
  CHECK(report.config_digest == config_digest(c));
  REQUIRE(report.test_confusion);
  CHECK(report.test_confusion->total() == 6);
  CHECK(report.provenance["run"]["epochs_run"] == 2);
  CHECK(report.provenance["seed"] == 7);
  CHECK(parse_config(nlohmann::json::parse(slurp(art.config_snapshot_path))).seed == 7);

  auto again = c;
  again.output_dir = dir / "runs2";
  const auto art2 = run_experiment(again);
  for (const char* leaf : {"report.json", "history.csv", "manifest.csv", "learning_curves.csv", "learning_curves.png",
                           "model/weights.ltlw"}) {
    CAPTURE(leaf);
    CHECK(slurp(art.run_dir / leaf) == slurp(art2.run_dir / leaf));
  }
}

TEST_CASE("the plot sidecar holds exactly the history values") {
  testing::ScratchDir dir("sidecar");
  auto c = fixture_config(dir);
  c.training.max_epochs = 3;
  c.training.early_stopping.enabled = false;
  const auto art = run_experiment(c);
  const auto history = training::read_history_csv(art.run_dir / "history.csv");
  const auto rows = csv::read(art.run_dir / "learning_curves.csv");
  REQUIRE(rows.size() == history.size() + 1);
  CHECK(rows[0] == csv::Row{"series", "epoch", "val_accuracy", "val_loss"});
  for (std::size_t i = 0; i < history.size(); ++i) {
    CHECK(rows[i + 1][0] == "tiny");
    CHECK(std::stoi(rows[i + 1][1]) == history[i].epoch);
    CHECK(std::stod(rows[i + 1][2]) == history[i].val_accuracy);
    CHECK(std::stod(rows[i + 1][3]) == history[i].val_loss);
  }
}

TEST_CASE("plotting needs at least one point") {
  testing::ScratchDir dir("plot");
  const std::vector<LabeledHistory> none;
  CHECK(code_of([&] { plot_learning_curves(none, dir / "x.png"); }) == ErrorCode::plot);
  const std::vector<LabeledHistory> empty = {{"a", {}}};
  CHECK(code_of([&] { plot_learning_curves(empty, dir / "x.png"); }) == ErrorCode::plot);
  const std::vector<LabeledHistory> one = {{"a", {{1, 0.7, 0.5, 0.69, 0.5}}}, {"b", {{1, 0.6, 0.6, 0.5, 0.75}}}};
  const auto out = plot_learning_curves(one, dir / "x.png");
  const auto img = read_image(out.image);
  CHECK(img.width == 800);
  CHECK(img.height == 600);
  CHECK(csv::read(out.sidecar).size() == 3);
}

TEST_CASE("optimizer comparison trains Adam and SGD side by side") {
  testing::ScratchDir dir("cmp-opt");
  auto c = fixture_config(dir);
  c.suite = Suite::compare_optimizers;
  c.training.max_epochs = 2;
  c.optimizer_learning_rates[training::OptimizerKind::sgd] = 0.01;
  const auto art = run_experiment(c);
  CHECK(fs::exists(art.run_dir / "adam" / "report.json"));
  CHECK(fs::exists(art.run_dir / "sgd" / "report.json"));
  CHECK(fs::exists(art.run_dir / "optimizer_comparison.png"));
  const auto rows = csv::read(art.run_dir / "optimizer_comparison.csv");
  std::set<std::string> series;
  for (std::size_t i = 1; i < rows.size(); ++i) series.insert(rows[i][0]);
  CHECK(series == std::set<std::string>{"tiny/adam", "tiny/sgd"});

  const auto sgd = evaluation::read_report(art.run_dir / "sgd" / "report.json");
  CHECK(sgd.provenance["optimizer"]["kind"] == "sgd");
  CHECK(sgd.provenance["optimizer"]["learning_rate"] == 0.01);
  const auto adam = evaluation::read_report(art.run_dir / "adam" / "report.json");
  CHECK(adam.provenance["optimizer"]["learning_rate"] == 1e-4);
  CHECK(csv::read(art.run_dir / "comparison.csv").size() == 3);
}

TEST_CASE("ablation removes one head layer at a time") {
  testing::ScratchDir dir("ablate");
  auto c = fixture_config(dir);
  c.suite = Suite::ablation;
  c.model.head_widths = {8, 4};
  const auto art = run_experiment(c);
  for (const char* sub : {"baseline", "without_fc1", "without_fc2"}) {
    CAPTURE(sub);
    CHECK(fs::exists(art.run_dir / sub / "report.json"));
  }
  const auto rows = csv::read(art.run_dir / "ablation_deltas.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == csv::Row{"layer_name", "val_accuracy", "delta_val_accuracy"});
  const auto base = evaluation::read_report(art.run_dir / "baseline" / "report.json");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto r = evaluation::read_report(art.run_dir / ("without_" + rows[i][0]) / "report.json");
    CHECK(std::stod(rows[i][1]) == *r.val_accuracy);
    CHECK(std::stod(rows[i][2]) == *r.val_accuracy - *base.val_accuracy);
  }
  const auto spec =
      nlohmann::json::parse(slurp(art.run_dir / "without_fc1" / "model" / "model_spec.json")).get<model::ModelSpec>();
  CHECK(spec.head_widths == std::vector<int>{4});

  c.model.head_widths = {8};
  CHECK(code_of([&] { run_experiment(c); }) == ErrorCode::ablation_impossible);
}

TEST_CASE("ablation deltas are ablated minus baseline") {
  evaluation::EvaluationReport base, a, b;
  base.val_accuracy = 0.75;
  a.val_accuracy = 0.5;
  b.val_accuracy = 1.0;
  const std::vector<std::pair<std::string, evaluation::EvaluationReport>> runs = {{"fc1", a}, {"fc2", b}};
  const auto d = ablation_deltas(base, runs);
  REQUIRE(d.size() == 2);
  CHECK(d[0].delta_val_accuracy == -0.25);
  CHECK(d[1].delta_val_accuracy == 0.25);
  evaluation::EvaluationReport missing;
  CHECK(code_of([&] { ablation_deltas(missing, runs); }) == ErrorCode::schema);
}

TEST_CASE("architecture comparison with k-fold writes a comparison table") {
  testing::ScratchDir dir("cmp-arch");
  auto c = fixture_config(dir, 12);
  c.suite = Suite::compare_architectures;
  c.architectures = {BackboneId::tiny};
  c.kfold.enabled = true;
  c.kfold.k = 2;
  const auto art = run_experiment(c);
  CHECK(fs::exists(art.run_dir / "tiny" / "report.json"));
  CHECK(fs::exists(art.run_dir / "architecture_comparison.png"));
  const auto report = evaluation::read_report(art.run_dir / "tiny" / "report.json");
  REQUIRE(report.kfold);
  CHECK(report.kfold->k == 2);
  CHECK(fs::exists(art.run_dir / "tiny" / "kfold" / "fold_0" / "history.csv"));
  const auto rows = csv::read(art.run_dir / "comparison.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "tiny");
  CHECK(rows[1][4] == evaluation::format_percent(report.kfold->mean_metrics.accuracy));
}

TEST_CASE("dataset problems surface as dataset errors") {
  testing::ScratchDir dir("bad-data");
  auto c = fixture_config(dir);
  fs::create_directories(dir / "broken" / "melanoma");
  fs::create_directories(dir / "broken" / "benign");
  c.dataset_root = dir / "broken";
  CHECK(is_dataset_error(code_of([&] { run_experiment(c); })));
}

TEST_CASE("command-line interface") {
  testing::ScratchDir dir("cli");
  auto c = fixture_config(dir);
  std::ofstream(dir / "config.json") << nlohmann::json(c).dump(2);
  const auto cfg = (dir / "config.json").string();
  const auto out = dir / "out.txt";

  CHECK(run_cli("--config " + cfg + " --dry-run run", out) == 0);
  CHECK(slurp(out).find("run_id: " + run_id(c)) != std::string::npos);
  CHECK_FALSE(fs::exists(c.output_dir));

  CHECK(run_cli("--config " + cfg + " --seed 9 --dry-run compare-opt", out) == 0);
  CHECK(slurp(out).find("compare_optimizers-9-") != std::string::npos);

  CHECK(run_cli("", out) == 2);
  CHECK(run_cli("--config " + (dir / "nope.json").string() + " run", out) == 2);
  CHECK(run_cli("--config " + cfg + " --dry-run ablate", out) == 1);

  auto bad = nlohmann::json(c);
  bad["training"]["batch_size"] = 0;
  std::ofstream(dir / "bad.json") << bad.dump();
  CHECK(run_cli("--config " + (dir / "bad.json").string() + " run", out) == 2);

  fs::create_directories(dir / "empty" / "melanoma");
  fs::create_directories(dir / "empty" / "benign");
  auto empty = nlohmann::json(c);
  empty["dataset_root"] = (dir / "empty").string();
  std::ofstream(dir / "empty.json") << empty.dump();
  CHECK(run_cli("--config " + (dir / "empty.json").string() + " run", out) == 3);

  REQUIRE(run_cli("--config " + cfg + " run", out) == 0);
  const auto run_dir = c.output_dir / run_id(c);
  CHECK(slurp(out).find(run_dir.string()) != std::string::npos);
  CHECK(fs::exists(run_dir / "report.json"));

  CHECK(run_cli("--output-dir " + (dir / "table").string() + " report " + c.output_dir.string(), out) == 0);
  CHECK(slurp(out).find("architecture") != std::string::npos);
  CHECK(fs::exists(dir / "table" / "comparison.csv"));
  CHECK(run_cli("report " + (dir / "empty").string(), out) == 1);
}

// The expected direction (Adam no slower) is observed, not asserted: at the
// default rates it holds for most seeds on this fixture but not all.
TEST_CASE("default-rate optimizer comparison on separable data") {
  testing::ScratchDir dir("adam-vs-sgd");
  testing::write_two_class_corpus(dir / "data", 32, 32, 7);
  auto c = fixture_config(dir);
  c.suite = Suite::compare_optimizers;
  c.model.head_widths = {16};
  c.training.learning_rate.reset();
  c.training.max_epochs = 100;
  c.training.batch_size = 8;
  c.training.early_stopping.monitor = training::Monitor::val_accuracy;
  c.training.early_stopping.patience = 5;
  const auto art = run_experiment(c);
  const auto adam = training::read_history_csv(art.run_dir / "adam" / "history.csv");
  const auto sgd = training::read_history_csv(art.run_dir / "sgd" / "history.csv");
  MESSAGE("epochs to early stop: adam " << adam.size() << ", sgd " << sgd.size());
  CHECK(adam.size() < 100);
  CHECK(sgd.size() < 100);
  CHECK(adam.back().val_accuracy == 1.0);
  CHECK(sgd.back().val_accuracy == 1.0);
}
