#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/training.hpp"
#include "support.hpp"

using namespace lesiontl;
using namespace lesiontl::training;

namespace {

nn::Parameter<float> scalar_param(float w, float g) {
  nn::Parameter<float> p;
  p.name = "w";
  p.dims = {1};
  p.value = {w};
  p.grad = {g};
  return p;
}

std::vector<EpochRecord> losses(std::initializer_list<double> values) {
  std::vector<EpochRecord> h;
  int e = 0;
  for (double v : values) h.push_back({++e, 0.0, 0.0, v, 0.0});
  return h;
}

// Red-vs-blue style data: class decides the sign of the channel offset.
InMemorySource separable(nn::FeatureShape shape, std::size_t n, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  InMemorySource src(shape);
  const std::size_t plane = shape.height * shape.width;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    std::vector<float> v(shape.size());
    for (std::size_t c = 0; c < 3; ++c) {
      const float base = (c == 0) == (label == 1) ? 1.0f : -1.0f;
      for (std::size_t k = 0; k < plane; ++k) v[c * plane + k] = base + static_cast<float>(0.2 * rng.normal());
    }
    src.add(prefix + std::to_string(i), label, v);
  }
  return src;
}

TrainingConfig quick_config(int epochs) {
  TrainingConfig c;
  c.optimizer_kind = OptimizerKind::adam;
  c.learning_rate = 1e-2;
  c.max_epochs = epochs;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("one SGD step without momentum is w - lr*g") {
  auto p = scalar_param(1.0f, 0.5f);
  nn::Parameter<float>* ps[] = {&p};
  auto opt = make_optimizer(OptimizerKind::sgd, 0.1, 0.0);
  opt->step(ps);
  CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-7));
}

TEST_CASE("SGD momentum accumulates velocity") {
  auto p = scalar_param(0.0f, 1.0f);
  nn::Parameter<float>* ps[] = {&p};
  auto opt = make_optimizer(OptimizerKind::sgd, 0.1, 0.9);
  opt->step(ps);
  opt->step(ps);
  // v1 = -0.1, v2 = 0.9*v1 - 0.1 = -0.19; w = -0.29
  CHECK(p.value[0] == doctest::Approx(-0.29).epsilon(1e-6));
}

TEST_CASE("first Adam step matches the closed-form oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double w = rng.normal();
    double g = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(5)) - 2.0);
    if (g == 0.0) g = 0.25;
    const double lr = std::pow(10.0, -1.0 - static_cast<double>(rng.below(4)));
    auto p = scalar_param(static_cast<float>(w), static_cast<float>(g));
    nn::Parameter<float>* ps[] = {&p};
    make_optimizer(OptimizerKind::adam, lr)->step(ps);
    // m_hat = g, v_hat = g^2 after bias correction.
    const double gf = static_cast<float>(g);
    const double expect = static_cast<float>(w) - lr * gf / (std::fabs(gf) + kAdamEpsilon);
    CHECK(std::fabs(p.value[0] - expect) <= 1e-6);
    CHECK(std::fabs(std::fabs(p.value[0] - static_cast<float>(w)) - lr) <= 1e-6 + lr * 1e-3);
  }
}

TEST_CASE("optimizer arguments are validated") {
  CHECK_THROWS_AS(make_optimizer(OptimizerKind::adam, 0.0), Error);
  CHECK_THROWS_AS(make_optimizer(OptimizerKind::sgd, -1.0, 0.5), Error);
  CHECK_THROWS_AS(make_optimizer(OptimizerKind::sgd, 0.1, 1.0), Error);
  const auto d = make_optimizer(OptimizerKind::adam, 1e-4)->describe();
  CHECK(d["beta1"] == 0.9);
  CHECK(d["beta2"] == 0.999);
  CHECK(d["epsilon"] == 1e-7);
}

TEST_CASE("early stopping examples") {
  EarlyStopSpec spec;
  spec.monitor = Monitor::val_loss;
  spec.patience = 2;
  const auto h = losses({1.0, 0.9, 0.95, 0.96, 0.97});
  auto d = early_stop_check(std::span(h).first(3), spec);
  CHECK_FALSE(d.stop);
  d = early_stop_check(std::span(h).first(4), spec);
  CHECK(d.stop);
  CHECK(d.best_epoch == 2);

  const auto flat = losses({1.0, 1.0});
  spec.patience = 0;
  d = early_stop_check(std::span(flat).first(1), spec);
  CHECK_FALSE(d.stop);
  d = early_stop_check(flat, spec);
  CHECK(d.stop);
  CHECK(d.best_epoch == 1);

  std::vector<EpochRecord> falling;
  for (int e = 1; e <= 100; ++e) falling.push_back({e, 0, 0, 1.0 / e, 0});
  for (int p : {0, 1, 5, 50}) {
    spec.patience = p;
    for (std::size_t n = 1; n <= falling.size(); ++n) CHECK_FALSE(early_stop_check(std::span(falling).first(n), spec).stop);
  }

  spec.enabled = false;
  spec.patience = 0;
  CHECK_FALSE(early_stop_check(flat, spec).stop);
}

TEST_CASE("accuracy monitoring treats higher as better and honours min_delta") {
  const std::vector<double> acc = {0.5, 0.7, 0.705, 0.71, 0.6};
  auto d = early_stop_check(acc, true, 2, 0.02);
  // 0.705 and 0.71 are new bests but not improvements beyond min_delta.
  CHECK(d.best_epoch == 4);
  CHECK(d.stop);
  d = early_stop_check(std::span(acc).first(3), true, 2, 0.0);
  CHECK_FALSE(d.stop);
}

TEST_CASE("training config validation lists violations") {
  TrainingConfig c;
  CHECK(c.violations().empty());
  CHECK(c.effective_learning_rate() == kDefaultAdamRate);
  c.optimizer_kind = OptimizerKind::sgd;
  CHECK(c.effective_learning_rate() == kDefaultSgdRate);
  c.max_epochs = 0;
  c.batch_size = 0;
  c.learning_rate = -1;
  CHECK(c.violations().size() == 3);
  CHECK_THROWS_AS(c.validate(), Error);
  const nlohmann::json j = TrainingConfig{};
  CHECK(j.get<TrainingConfig>().max_epochs == 100);
}

TEST_CASE("history CSV round-trips exactly") {
  testing::ScratchDir dir("history");
  std::vector<EpochRecord> h = {{1, 0.6931471805599453, 0.5, 0.1 + 0.2, 1.0 / 3.0}, {2, 1e-300, 1.0, 12345.678, 0.0}};
  write_history_csv(dir / "history.csv", h);
  const auto rows = csv::read(dir / "history.csv");
  CHECK(rows.front() == csv::Row{"epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"});
  const auto back = read_history_csv(dir / "history.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].train_loss == h[0].train_loss);
  CHECK(back[0].val_loss == h[0].val_loss);
  CHECK(back[0].val_accuracy == h[0].val_accuracy);
  CHECK(back[1].train_loss == h[1].train_loss);
}

TEST_CASE("train rejects empty and overlapping sets") {
  auto spec = testing::tiny_spec();
  auto built = model::build_model(spec);
  const nn::FeatureShape shape{3, 8, 8};
  const auto a = testing::random_source(shape, 6, 1, "a");
  const auto b = testing::random_source(shape, 6, 2, "a");  // same ids
  const InMemorySource empty(shape);
  const auto code = [&](const SampleSource& tr, const SampleSource& va) {
    try {
      train(*built.model, tr, va, quick_config(1));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  CHECK(code(a, b) == ErrorCode::data);
  CHECK(code(empty, a) == ErrorCode::data);
  CHECK(code(a, empty) == ErrorCode::data);
}

TEST_CASE("non-finite loss raises a divergence error naming the epoch") {
  auto spec = testing::tiny_spec();
  auto built = model::build_model(spec);
  const nn::FeatureShape shape{3, 8, 8};
  InMemorySource bad(shape);
  for (int i = 0; i < 4; ++i) bad.add("n" + std::to_string(i), i % 2, std::vector<float>(shape.size(), std::nanf("")));
  const auto val = testing::random_source(shape, 4, 2, "v");
  try {
    train(*built.model, bad, val, quick_config(5));
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.code() == ErrorCode::divergence);
  }
}

TEST_CASE("one-epoch budget gives one record and no early stop") {
  auto built = model::build_model(testing::tiny_spec());
  const auto tr = testing::random_source({3, 8, 8}, 10, 1, "t");
  const auto va = testing::random_source({3, 8, 8}, 4, 2, "v");
  const auto res = train(*built.model, tr, va, quick_config(1));
  REQUIRE(res.history.size() == 1);
  CHECK(res.history[0].epoch == 1);
  CHECK_FALSE(res.stopped_early);
  CHECK(res.best_epoch == 1);
}

TEST_CASE("initial loss on balanced data is close to ln 2") {
  auto spec = testing::tiny_spec(32);
  spec.head_widths = {64, 64};
  auto built = model::build_model(spec, 8);
  const auto src = testing::random_source({3, 32, 32}, 64, 5, "s");
  const auto ev = evaluate(*built.model, src, 16);
  CHECK(std::fabs(ev.loss - std::numbers::ln2) < 0.1);
}

TEST_CASE("frozen layers are untouched and trainable ones move") {
  auto spec = testing::tiny_spec();
  spec.freeze.freeze_first_n = 1;
  auto built = model::build_model(spec, 2);
  const auto before = model::collect_weights(*built.model);
  const auto tr = separable({3, 8, 8}, 24, 1, "t");
  const auto va = separable({3, 8, 8}, 8, 2, "v");
  auto cfg = quick_config(5);
  cfg.early_stopping.enabled = false;
  train(*built.model, tr, va, cfg);
  const auto after = model::collect_weights(*built.model);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CAPTURE(before[i].name);
    if (before[i].name.rfind("conv1", 0) == 0) {
      CHECK(std::memcmp(before[i].values.data(), after[i].values.data(), before[i].values.size() * sizeof(float)) == 0);
    } else {
      CHECK(before[i].values != after[i].values);
    }
  }
}

TEST_CASE("training is reproducible from the seed") {
  auto spec = testing::tiny_spec(8);
  spec.dropout_rate = 0.3;
  const auto tr = testing::random_source({3, 8, 8}, 20, 1, "t");
  const auto va = testing::random_source({3, 8, 8}, 6, 2, "v");
  std::vector<std::vector<EpochRecord>> runs;
  std::vector<std::vector<float>> finals;
  for (int r = 0; r < 2; ++r) {
    auto built = model::build_model(spec, 4);
    auto cfg = quick_config(4);
    cfg.early_stopping.enabled = false;
    runs.push_back(train(*built.model, tr, va, cfg).history);
    finals.push_back(model::collect_weights(*built.model).back().values);
  }
  REQUIRE(runs[0].size() == runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    CHECK(runs[0][i].train_loss == runs[1][i].train_loss);
    CHECK(runs[0][i].val_loss == runs[1][i].val_loss);
  }
  CHECK(finals[0] == finals[1]);
}

TEST_CASE("separable data reaches perfect validation accuracy") {
  auto spec = testing::tiny_spec(8);
  auto built = model::build_model(spec, 1);
  const auto tr = separable({3, 8, 8}, 40, 1, "t");
  const auto va = separable({3, 8, 8}, 10, 2, "v");
  auto cfg = quick_config(30);
  cfg.early_stopping.monitor = Monitor::val_accuracy;
  cfg.early_stopping.patience = 3;
  const auto res = train(*built.model, tr, va, cfg);
  double best = 0.0;
  for (const auto& r : res.history) best = std::max(best, r.val_accuracy);
  CHECK(best == 1.0);
  CHECK(res.stopped_early);
}

TEST_CASE("property: epoch budget, stopping bound and restored snapshot") {
  Rng rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    CAPTURE(trial);
    auto spec = testing::tiny_spec(8);
    spec.dropout_rate = 0.2;
    auto built = model::build_model(spec, rng.next());
    const auto tr = testing::random_source({3, 8, 8}, 12, rng.next(), "t");
    const auto va = testing::random_source({3, 8, 8}, 6, rng.next(), "v");
    TrainingConfig cfg;
    cfg.optimizer_kind = rng.below(2) ? OptimizerKind::adam : OptimizerKind::sgd;
    cfg.learning_rate = 0.05 * rng.uniform() + 1e-3;
    cfg.max_epochs = 1 + static_cast<int>(rng.below(12));
    cfg.batch_size = 1 + static_cast<int>(rng.below(8));
    cfg.early_stopping.patience = static_cast<int>(rng.below(4));
    cfg.early_stopping.monitor = rng.below(2) ? Monitor::val_loss : Monitor::val_accuracy;
    cfg.seed = rng.next();
    const auto res = train(*built.model, tr, va, cfg);

    const auto n = static_cast<int>(res.history.size());
    CHECK(n <= cfg.max_epochs);
    if (n < cfg.max_epochs) CHECK(res.stopped_early);
    if (res.stopped_early) CHECK(n <= res.best_epoch + cfg.early_stopping.patience + 1);
    for (int e = 0; e < n; ++e) CHECK(res.history[static_cast<std::size_t>(e)].epoch == e + 1);

    // The restored model reproduces the best monitored value.
    const auto ev = evaluate(*built.model, va, cfg.batch_size);
    const auto& best = res.history[static_cast<std::size_t>(res.best_epoch - 1)];
    if (cfg.early_stopping.monitor == Monitor::val_loss) {
      CHECK(ev.loss == doctest::Approx(best.val_loss).epsilon(1e-12));
    } else {
      CHECK(ev.accuracy == best.val_accuracy);
    }
  }
}

TEST_CASE("checkpoint layout") {
  testing::ScratchDir dir("ckpt");
  auto spec = testing::tiny_spec();
  auto built = model::build_model(spec);
  const auto tr = testing::random_source({3, 8, 8}, 8, 1, "t");
  const auto va = testing::random_source({3, 8, 8}, 4, 2, "v");
  TrainOptions opts;
  opts.checkpoint_dir = dir / "checkpoints";
  opts.spec = &spec;
  opts.save_every_epoch = true;
  int seen = 0;
  opts.on_epoch = [&](const EpochRecord&) { ++seen; };
  auto cfg = quick_config(3);
  cfg.early_stopping.enabled = false;
  train(*built.model, tr, va, cfg, opts);
  CHECK(seen == 3);
  for (int e = 1; e <= 3; ++e) {
    CHECK(std::filesystem::exists(dir / "checkpoints" / ("epoch_" + std::to_string(e)) / "weights.ltlw"));
  }
  CHECK(std::filesystem::exists(dir / "checkpoints" / "best" / "model_spec.json"));
}

TEST_CASE("dropout is active in training passes only") {
  auto spec = testing::tiny_spec(8);
  spec.dropout_rate = 0.5;
  spec.head_widths = {32};
  auto net = model::build_network<float>(spec, 1);
  Rng drop(1);
  net->set_random_source(&drop);
  Rng rng(2);
  nn::Tensor<float> x(2, {3, 8, 8});
  x.data = testing::random_values(x.data.size(), rng);
  const auto eval1 = net->forward(x, nn::Mode::eval).data;
  const auto eval2 = net->forward(x, nn::Mode::eval).data;
  const auto train1 = net->forward(x, nn::Mode::train).data;
  CHECK(eval1 == eval2);
  CHECK(train1 != eval1);
  net->set_random_source(nullptr);
}
