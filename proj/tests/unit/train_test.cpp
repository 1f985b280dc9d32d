#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "unnas/error.hpp"
#include "unnas/train/study.hpp"

using namespace unnas;
namespace fs = std::filesystem;

namespace {

TrainRecipe tiny_recipe() {
  TrainRecipe r;
  r.width = 4;
  r.depth = 3;
  r.epochs = 2;
  r.warmup_epochs = 0;
  r.lr = 0.05;
  r.batch_size = 16;
  r.jigsaw_K = 6;
  r.seed = 3;
  return r;
}

Architecture small_genotype(std::uint64_t seed) {
  Rng rng(seed);
  return sample_genotype(rng, 2);
}

std::vector<PoolEntry> tiny_pool(int n) {
  Rng rng(17);
  PoolOptions opts;
  opts.nodes = 2;
  nn::NetworkConfig cfg;
  cfg.width = 4;
  cfg.depth = 3;
  auto cost = [&](const Architecture& a) { return nn::architecture_cost(a, cfg, {3, 16, 16}); };
  return sample_pool(rng, n, opts, cost).entries;
}

fs::path temp_file(const std::string& name) {
  auto p = fs::temp_directory_path() / ("unnas_train_test_" + name);
  fs::remove(p);
  return p;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST(Recipe, HeadWidthFollowsTask) {
  TrainRecipe r;
  EXPECT_EQ(r.network_config(Task::rot, 10).num_classes, 4);
  EXPECT_EQ(r.network_config(Task::supv_cls, 10).num_classes, 10);
  EXPECT_EQ(r.network_config(Task::jigsaw, 10).num_classes, 24);
  const auto color = r.network_config(Task::color, 10);
  EXPECT_EQ(color.num_classes, 64);
  EXPECT_EQ(color.head, nn::HeadKind::pixel);
  EXPECT_FALSE(color.auxiliary);
  r.depth = 6;
  EXPECT_FALSE(r.network_config(Task::rot, 10).auxiliary);
  r.depth = 8;
  EXPECT_TRUE(r.network_config(Task::rot, 10).auxiliary);
}

TEST(Recipe, JsonRoundtripAndUnknownKey) {
  auto r = tiny_recipe();
  r.max_batches_per_epoch = 7;
  const auto j = recipe_to_json(r);
  EXPECT_EQ(recipe_to_json(recipe_from_json(j)), j);
  auto bad = j;
  bad["learning_rate"] = 0.1;
  EXPECT_THROW(recipe_from_json(bad), FormatError);
  bad = j;
  bad["epochs"] = "many";
  EXPECT_THROW(recipe_from_json(bad), FormatError);
}

TEST(Recipe, Validation) {
  auto r = tiny_recipe();
  r.warmup_epochs = 2;
  EXPECT_THROW(r.validate(), ContractViolation);
  r = tiny_recipe();
  r.batch_size = 0;
  EXPECT_THROW(r.validate(), ContractViolation);
}

TEST(Train, UntrainedRotationIsAtChance) {
  const auto data = make_synthetic_shapes(816, 10, 16, 4);
  auto r = tiny_recipe();
  r.epochs = 0;
  const auto rep = train_and_score(small_genotype(1), data.subset(0, 16), data.subset(16, 816), Task::rot, r);
  const double sigma = std::sqrt(0.25 * 0.75 / 800.0);
  EXPECT_NEAR(rep.val_accuracy, 0.25, 3 * sigma);
  EXPECT_TRUE(std::isnan(rep.final_train_loss));
}

TEST(Train, OneBatchOverfit) {
  const auto data = make_synthetic_shapes(16, 10, 16, 5);
  StreamConfig sc;
  sc.batch_size = 16;
  sc.augment = false;
  sc.shuffle = false;
  SupervisedStream stream(data.labeled(), 1, sc);
  const Batch batch = stream.batch(0, 0);
  nn::NetworkConfig cfg;
  cfg.width = 8;
  cfg.depth = 3;
  Rng rng(2);
  auto model = nn::make_model<float>(small_genotype(3), cfg, rng);
  double loss = 0;
  for (int step = 0; step < 50; ++step) loss = train_step(*model, batch, SgdOptions{0.05, 0.9, 0.0}, 0.0);
  EXPECT_LT(loss, 0.05);
}

TEST(Train, SameSeedSameReport) {
  const auto data = make_synthetic_shapes(96, 4, 16, 6);
  const auto a = train_and_score(small_genotype(2), data.subset(0, 64), data.subset(64, 96), Task::rot, tiny_recipe());
  const auto b = train_and_score(small_genotype(2), data.subset(0, 64), data.subset(64, 96), Task::rot, tiny_recipe());
  EXPECT_EQ(a.val_accuracy, b.val_accuracy);
  EXPECT_EQ(a.final_train_loss, b.final_train_loss);
  EXPECT_GE(a.val_accuracy, 0.0);
  EXPECT_LE(a.val_accuracy, 1.0);
}

TEST(Train, EveryTaskAndBenchGraphRun) {
  const auto data = make_synthetic_shapes(48, 4, 16, 7);
  auto r = tiny_recipe();
  r.epochs = 1;
  for (Task t : {Task::supv_cls, Task::rot, Task::color, Task::jigsaw}) {
    const auto rep = train_and_score(small_genotype(4), data.subset(0, 32), data.subset(32, 48), t, r);
    EXPECT_EQ(rep.task, task_name(t));
    EXPECT_TRUE(std::isfinite(rep.final_train_loss)) << rep.task;
  }
  Rng rng(9);
  const Architecture g = sample_bench_graph(rng, 5);
  const auto rep = train_and_score(g, data.subset(0, 32), data.subset(32, 48), Task::rot, r);
  EXPECT_TRUE(std::isfinite(rep.final_train_loss));
}

TEST(Train, PretextJobsIgnoreLabels) {
  const auto data = make_synthetic_shapes(64, 4, 16, 8);
  const auto stripped = data.images_only();
  const auto a = train_and_score(small_genotype(5), data.subset(0, 48), data.subset(48, 64), Task::rot, tiny_recipe());
  const auto b =
      train_and_score(small_genotype(5), stripped.subset(0, 48), stripped.subset(48, 64), Task::rot, tiny_recipe());
  EXPECT_EQ(a.val_accuracy, b.val_accuracy);
  EXPECT_EQ(a.final_train_loss, b.final_train_loss);
  EXPECT_THROW(train_and_score(small_genotype(5), stripped.subset(0, 48), stripped.subset(48, 64), Task::supv_cls,
                               tiny_recipe()),
               LabelAccessDenied);
}

TEST(Train, DivergenceIsReported) {
  const auto data = make_synthetic_shapes(64, 4, 16, 9);
  auto r = tiny_recipe();
  r.lr = 1e30;
  r.epochs = 3;
  try {
    (void)train_and_score(small_genotype(6), data.subset(0, 48), data.subset(48, 64), Task::supv_cls, r);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos);
  }
}

TEST(Repeat, SingleRunHasZeroStd) {
  const auto s = repeat_and_average([](std::uint64_t seed) { return static_cast<double>(seed % 7); }, 1, 4);
  ASSERT_EQ(s.values.size(), 1u);
  EXPECT_EQ(s.mean, s.values[0]);
  EXPECT_EQ(s.std, 0.0);
}

TEST(Repeat, MatchesDirectRecomputation) {
  auto job = [](std::uint64_t seed) { return static_cast<double>(seed % 1000) / 1000.0; };
  const auto s = repeat_and_average(job, 5, 11);
  double m = 0;
  for (double v : s.values) m += v;
  m /= 5;
  double var = 0;
  for (double v : s.values) var += (v - m) * (v - m);
  EXPECT_DOUBLE_EQ(s.mean, m);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(var / 5));
  const auto again = repeat_and_average(job, 5, 11);
  EXPECT_EQ(again.values, s.values);
  EXPECT_EQ(again.seeds, s.seeds);
  EXPECT_EQ(std::set<std::uint64_t>(s.seeds.begin(), s.seeds.end()).size(), 5u);
  EXPECT_THROW(repeat_and_average(job, 0, 1), ContractViolation);
}

TEST(Study, BookkeepingResumeAndReproducibility) {
  const auto data = make_synthetic_shapes(48, 4, 16, 10);
  const auto pool = tiny_pool(2);
  auto r = tiny_recipe();
  r.epochs = 1;
  StudyOptions opts;
  opts.tasks = {Task::supv_cls, Task::rot};
  const auto path = temp_file("study.jsonl");
  const Stamp stamp{"abc123", 3};
  std::vector<ArchRecord> first;
  {
    RecordStore store(path, stamp);
    first = run_sample_study(pool, data.subset(0, 32), data.subset(32, 48), r, opts, store);
  }
  EXPECT_EQ(count_lines(path), 4u);
  ASSERT_EQ(first.size(), 2u);
  for (const auto& rec : first) {
    EXPECT_EQ(rec.accuracies.size(), 2u);
    EXPECT_TRUE(rec.failures.empty());
  }

  {
    RecordStore store(path, stamp);
    const auto resumed = run_sample_study(pool, data.subset(0, 32), data.subset(32, 48), r, opts, store);
    EXPECT_EQ(count_lines(path), 4u);
    ASSERT_EQ(resumed.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(record_to_json(resumed[i]), record_to_json(first[i]));
  }

  const auto path2 = temp_file("study2.jsonl");
  RecordStore fresh(path2, stamp);
  opts.workers = 2;
  const auto second = run_sample_study(pool, data.subset(0, 32), data.subset(32, 48), r, opts, fresh);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(second[i].accuracies, first[i].accuracies);

  const auto lines = read_store_lines(path);
  ASSERT_EQ(lines.size(), 4u);
  for (const auto& [s, rec] : lines) {
    EXPECT_EQ(s, stamp);
    EXPECT_TRUE(rec.violation().empty());
  }
  fs::remove(path);
  fs::remove(path2);
}

TEST(Study, FailedCellsAreMarkedAndStudyContinues) {
  const auto data = make_synthetic_shapes(48, 4, 16, 11);
  const auto pool = tiny_pool(2);
  auto r = tiny_recipe();
  r.epochs = 1;
  r.color_pool = 5;   // 16 is not divisible by 5
  StudyOptions opts;
  opts.tasks = {Task::color, Task::rot};
  const auto path = temp_file("fail.jsonl");
  RecordStore store(path, {"h", 0});
  const auto recs = run_sample_study(pool, data.subset(0, 32), data.subset(32, 48), r, opts, store);
  ASSERT_EQ(recs.size(), 2u);
  for (const auto& rec : recs) {
    EXPECT_TRUE(rec.failures.contains("color"));
    EXPECT_TRUE(rec.accuracies.contains("rot"));
  }
  fs::remove(path);
}

TEST(Store, MalformedLineReportsLineNumber) {
  const auto path = temp_file("bad.jsonl");
  {
    std::ofstream out(path);
    ArchRecord r{"x", SpaceKind::darts, std::nullopt, {}, {{"rot", 0.5}}, {}};
    out << nlohmann::json{{"schema_version", 1}, {"manifest_hash", "h"}, {"seed", 0}, {"record", record_to_json(r)}}
               .dump()
        << "\n";
    out << "not json\n";
  }
  try {
    RecordStore store(path, {"h", 0});
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  fs::remove(path);
}

TEST(Store, MergeKeepsOrderAndLatestValue) {
  ArchRecord a{"a", SpaceKind::darts, std::nullopt, {}, {{"rot", 0.1}}, {}};
  ArchRecord b{"b", SpaceKind::darts, std::nullopt, {}, {{"rot", 0.2}}, {}};
  ArchRecord a2{"a", SpaceKind::darts, std::nullopt, {}, {{"supv_cls", 0.3}}, {}};
  ArchRecord a3{"a", SpaceKind::darts, std::nullopt, {}, {}, {{"rot", "boom"}}};
  const auto m = merge_records({a, b, a2, a3});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].arch_id, "a");
  EXPECT_EQ(m[0].accuracies, (std::map<std::string, double>{{"supv_cls", 0.3}}));
  EXPECT_EQ(m[0].failures.at("rot"), "boom");
  EXPECT_EQ(m[1].accuracies.at("rot"), 0.2);
}
