#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "unnas/analysis/stats.hpp"
#include "unnas/cli/commands.hpp"
#include "unnas/error.hpp"
#include "unnas/nn/network.hpp"

namespace unnas::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("unnas_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static json tiny_manifest() {
    return json::parse(R"({
      "experiment": "cli-test", "space": "darts",
      "dataset": {"kind": "synthetic", "train": 64, "val": 32, "size": 16, "classes": 4, "seed": 3},
      "sample": {"n": 4, "nodes": 2},
      "recipe": {"width": 8, "depth": 2, "epochs": 1, "warmup_epochs": 0, "batch_size": 32},
      "search": {"epochs": 2, "nodes": 2, "width": 8, "depth": 2, "batch_size": 16, "objective": "rot"},
      "seed": 11
    })");
  }

  fs::path write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path write_manifest(const json& m, const std::string& name = "manifest.json") {
    return write(name, m.dump(2));
  }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }
  int run_with(const fs::path& manifest, const fs::path& out, const std::vector<std::string>& tail) {
    std::vector<std::string> args{"--manifest", manifest.string(), "--out", out.string()};
    args.insert(args.end(), tail.begin(), tail.end());
    return run(args);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static json read_json(const fs::path& p) { return json::parse(slurp(p)); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, SampleWritesValidRecordsAndIsByteIdentical) {
  auto m = tiny_manifest();
  m["sample"]["n"] = 10;
  const auto mp = write_manifest(m);
  ASSERT_EQ(run_with(mp, dir_ / "a", {"sample"}), kOk) << err_.str();
  ASSERT_EQ(run_with(mp, dir_ / "b", {"sample"}), kOk) << err_.str();
  const auto lines = read_store_lines(dir_ / "a" / "pool.jsonl");
  ASSERT_EQ(lines.size(), 10u);
  std::set<std::string> ids;
  for (const auto& [stamp, rec] : lines) {
    EXPECT_EQ(rec.violation(), "");
    ASSERT_TRUE(rec.arch.has_value());
    EXPECT_EQ(arch_id(*rec.arch), rec.arch_id);
    EXPECT_EQ(stamp.seed, 11u);
    ids.insert(rec.arch_id);
  }
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(slurp(dir_ / "a" / "pool.jsonl"), slurp(dir_ / "b" / "pool.jsonl"));

  // A different seed gives a different pool.
  ASSERT_EQ(run({"--manifest", mp.string(), "--out", (dir_ / "c").string(), "--seed", "12", "sample"}), kOk);
  EXPECT_NE(slurp(dir_ / "a" / "pool.jsonl"), slurp(dir_ / "c" / "pool.jsonl"));
}

TEST_F(CliTest, FilteredSampleStaysInWindow) {
  auto m = tiny_manifest();
  m["sample"]["n"] = 5;
  m["sample"]["nodes"] = 4;   // 2-node cells are far below the ResNet-56 window
  m["sample"]["filter"] = {{"lo", 0.8}, {"hi", 1.2}, {"width", 16}, {"depth", 20}, {"image_size", 32}};
  ASSERT_EQ(run_with(write_manifest(m), dir_ / "o", {"sample"}), kOk) << err_.str();
  const auto ref = nn::resnet56_cost({3, 32, 32}, 10, 1);
  nn::NetworkConfig cfg;
  cfg.width = 16;
  cfg.depth = 20;
  const CostWindow window{0.8, 1.2};
  const auto lines = read_store_lines(dir_ / "o" / "pool.jsonl");
  ASSERT_EQ(lines.size(), 5u);
  for (const auto& [_, rec] : lines) {
    const auto cost = nn::architecture_cost(*rec.arch, cfg, {3, 32, 32});
    EXPECT_TRUE(window.contains(cost, ref)) << rec.arch_id;
    EXPECT_EQ(cost.params, rec.cost.params);
  }
  EXPECT_GT(read_json(dir_ / "o" / "pool_meta.json").at("rejections").get<int>(), 0);
}

TEST_F(CliTest, StudyFillsGridAndResumes) {
  auto m = tiny_manifest();
  m["sample"]["n"] = 2;
  const auto mp = write_manifest(m);
  const auto out = dir_ / "o";
  EXPECT_EQ(run_with(mp, out, {"study"}), kFailure);   // no pool yet
  EXPECT_NE(err_.str().find("sample"), std::string::npos);
  ASSERT_EQ(run_with(mp, out, {"sample"}), kOk);
  ASSERT_EQ(run_with(mp, out, {"study"}), kOk) << err_.str();
  const auto first = read_store_lines(out / "store.jsonl");
  ASSERT_EQ(first.size(), 4u);
  ASSERT_EQ(run_with(mp, out, {"study"}), kOk) << err_.str();
  EXPECT_EQ(read_store_lines(out / "store.jsonl").size(), 4u);

  std::vector<ArchRecord> partials;
  for (const auto& [_, r] : first) partials.push_back(r);
  const auto merged = merge_records(partials);
  ASSERT_EQ(merged.size(), 2u);
  for (const auto& r : merged) {
    EXPECT_EQ(r.accuracies.size(), 2u);
    EXPECT_EQ(record_from_json(record_to_json(r)).accuracies, r.accuracies);
  }
}

TEST_F(CliTest, StoreFromAnotherManifestIsRefused) {
  auto m = tiny_manifest();
  m["sample"]["n"] = 1;
  m["tasks"] = {"rot"};
  const auto out = dir_ / "o";
  ASSERT_EQ(run_with(write_manifest(m), out, {"sample"}), kOk);
  ASSERT_EQ(run_with(write_manifest(m), out, {"study"}), kOk);
  m["recipe"]["lr"] = 0.01;
  const auto other = write_manifest(m, "other.json");
  EXPECT_EQ(run_with(other, out, {"study"}), kMixedManifests);
  EXPECT_EQ(run_with(other, out, {"analyze"}), kMixedManifests);
}

TEST_F(CliTest, LabelRequestForPretextSearchIsDenied) {
  auto m = tiny_manifest();
  m["search"]["objective"] = "jigsaw";
  m["search"]["request_labels"] = true;
  const auto out = dir_ / "o";
  EXPECT_EQ(run_with(write_manifest(m), out, {"search"}), kLabelsDenied);
  EXPECT_NE(err_.str().find("label"), std::string::npos);
  EXPECT_FALSE(fs::exists(out / "search" / "genotype.json"));
}

TEST_F(CliTest, SearchThenEvaluateIsDeterministicAndStamped) {
  auto m = tiny_manifest();
  m["tasks"] = {"rot"};
  const auto mp = write_manifest(m);
  ASSERT_EQ(run_with(mp, dir_ / "a", {"search"}), kOk) << err_.str();
  ASSERT_EQ(run_with(mp, dir_ / "b", {"search"}), kOk) << err_.str();
  const auto ga = read_json(dir_ / "a" / "search" / "genotype.json");
  EXPECT_EQ(ga, read_json(dir_ / "b" / "search" / "genotype.json"));
  EXPECT_EQ(ga.at("log").size(), 2u);
  EXPECT_TRUE(fs::exists(dir_ / "a" / "search" / "genotype.dot"));
  EXPECT_EQ(decode_architecture(ga.at("architecture")).index(), 0u);

  ASSERT_EQ(run_with(mp, dir_ / "a", {"evaluate"}), kOk) << err_.str();
  ASSERT_EQ(run_with(mp, dir_ / "b", {"evaluate"}), kOk) << err_.str();
  const auto ea = read_json(dir_ / "a" / "evaluate.json");
  const auto eb = read_json(dir_ / "b" / "evaluate.json");
  EXPECT_TRUE(ea.at("reference_only").get<bool>());   // search data == evaluation data
  EXPECT_EQ(ea.at("results")[0].at("values"), eb.at("results")[0].at("values"));
  EXPECT_EQ(ea.at("manifest_hash"), ga.at("manifest_hash"));

  // Searching on a different dataset lifts the reference-only mark.
  m["search_dataset"] = m["dataset"];
  m["search_dataset"]["seed"] = 99;
  const auto mp2 = write_manifest(m, "m2.json");
  ASSERT_EQ(run_with(mp2, dir_ / "c", {"search"}), kOk) << err_.str();
  ASSERT_EQ(run_with(mp2, dir_ / "c", {"evaluate"}), kOk) << err_.str();
  EXPECT_FALSE(read_json(dir_ / "c" / "evaluate.json").at("reference_only").get<bool>());
}

TEST_F(CliTest, AnalyzeThreeRecordsTwoTasks) {
  const auto csv = write("in.csv",
                         "arch_id,supv_cls,rot\n"
                         "a,0.5,0.4\n"
                         "b,0.7,0.6\n"
                         "c,0.6,0.3\n");
  const auto store = dir_ / "store.jsonl";
  ASSERT_EQ(run({"ingest", "--input", csv.string(), "--store", store.string()}), kOk) << err_.str();
  ASSERT_EQ(run({"--out", (dir_ / "o").string(), "analyze", "--store", store.string()}), kOk) << err_.str();
  const auto report = read_json(dir_ / "o" / "analysis" / "report.json");
  ASSERT_EQ(report.at("correlations").size(), 1u);
  const auto& c = report.at("correlations")[0];
  EXPECT_EQ(c.at("pretext"), "rot");
  EXPECT_EQ(c.at("n"), 3);
  EXPECT_DOUBLE_EQ(c.at("rho").get<double>(), 0.5);

  // Re-parsing the scatter CSV reproduces rho exactly.
  const auto table = read_csv(dir_ / "o" / "analysis" / "scatter_rot_supv_cls.csv");
  EXPECT_EQ(table.meta.at("schema_version"), kSchemaVersion);
  std::vector<double> xs, ys;
  for (const auto& row : table.rows) {
    xs.push_back(std::stod(row[1]));
    ys.push_back(std::stod(row[2]));
  }
  EXPECT_EQ(analysis::spearman_rho(xs, ys).rho, c.at("rho").get<double>());
  EXPECT_TRUE(fs::exists(dir_ / "o" / "analysis" / "efficiency_rot_supv_cls.csv"));
}

TEST_F(CliTest, AnalyzeRecoversStrongRankAgreement) {
  Rng rng(5);
  std::string csv = "arch_id,supv_cls,rot\n";
  for (int i = 0; i < 60; ++i) {
    const double rot = uniform01(rng);
    const double supv = 0.5 * rot + 0.05 * uniform01(rng);
    csv += "x" + std::to_string(i) + "," + format_double(supv) + "," + format_double(rot) + "\n";
  }
  const auto store = dir_ / "store.jsonl";
  ASSERT_EQ(run({"ingest", "--input", write("in.csv", csv).string(), "--store", store.string()}), kOk) << err_.str();
  ASSERT_EQ(run({"--out", (dir_ / "o").string(), "analyze", "--store", store.string()}), kOk) << err_.str();
  const auto report = read_json(dir_ / "o" / "analysis" / "report.json");
  EXPECT_GT(report.at("correlations")[0].at("rho").get<double>(), 0.8);
  const auto& pts = report.at("correlations")[0].at("efficiency").at("points");
  EXPECT_EQ(pts.back().at("m"), 60);
}

TEST_F(CliTest, IngestReportsBadRowsWithLineNumbers) {
  const auto good = write("good.csv", "arch_id,space,supv_cls\nn1,bench,0.9\nn2,bench,0.8\nn3,bench,0.7\n");
  EXPECT_EQ(ingest_records_csv(good).size(), 3u);

  const auto bad = write("bad.csv", "arch_id,supv_cls\nn1,0.9\nn2,1.2\nn3,zz\n");
  try {
    ingest_records_csv(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_EQ(msg.find("line 2"), std::string::npos) << msg;
  }
  const auto store = dir_ / "store.jsonl";
  EXPECT_EQ(run({"ingest", "--input", bad.string(), "--store", store.string()}), kFailure);
  EXPECT_FALSE(fs::exists(store));
  EXPECT_THROW(ingest_records_csv(write("noid.csv", "name,rot\na,0.1\n")), FormatError);
  EXPECT_EQ(run({"ingest", "--input", good.string(), "--format", "tsv", "--store", store.string()}), kFailure);
}

TEST_F(CliTest, ExportIngestRoundtrip) {
  std::vector<ArchRecord> records(2);
  records[0].arch_id = "p,q";   // needs quoting
  records[0].space = SpaceKind::darts;
  records[0].cost = {1234, 56};
  records[0].accuracies = {{"rot", 0.1 + 0.2}, {"supv_cls", 1.0 / 3}};
  records[1].arch_id = "r\"s";
  records[1].space = SpaceKind::bench;
  records[1].accuracies = {{"rot", 0.25}};
  const auto p = dir_ / "e.csv";
  export_records_csv(records, p, stamp_json({"abc", 1}));
  const auto back = ingest_records_csv(p);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].arch_id, records[i].arch_id);
    EXPECT_EQ(back[i].space, records[i].space);
    EXPECT_EQ(back[i].cost, records[i].cost);
    EXPECT_EQ(back[i].accuracies, records[i].accuracies);
  }
}

TEST_F(CliTest, ManifestErrorsNameTheField) {
  auto m = tiny_manifest();
  m["recipe"]["epochs"] = "many";
  EXPECT_EQ(run_with(write_manifest(m), dir_ / "o", {"sample"}), kFailure);
  EXPECT_NE(err_.str().find("manifest.recipe.epochs"), std::string::npos) << err_.str();

  m = tiny_manifest();
  m["sample"]["colour"] = 1;
  EXPECT_EQ(run_with(write_manifest(m), dir_ / "o", {"sample"}), kFailure);
  EXPECT_NE(err_.str().find("manifest.sample.colour"), std::string::npos) << err_.str();
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), kUsage);
  EXPECT_EQ(run({"sample"}), kUsage);   // needs --manifest
  EXPECT_EQ(run({"frobnicate"}), kUsage);
  EXPECT_EQ(run({"--help"}), kOk);
  EXPECT_NE(out_.str().find("analyze"), std::string::npos);
}

TEST_F(CliTest, DotCommandPrintsGraph) {
  Rng rng(1);
  const Architecture g = sample_genotype(rng, 3);
  const auto p = write("g.json", json{{"architecture", encode_architecture(g)}}.dump());
  ASSERT_EQ(run({"dot", "--genotype", p.string()}), kOk) << err_.str();
  EXPECT_EQ(out_.str(), genotype_to_dot(std::get<Genotype>(g)));
}

TEST(CliHelpers, CurveSizes) {
  EXPECT_EQ(curve_sizes({}, 1), (std::vector<int>{1}));
  EXPECT_EQ(curve_sizes({}, 10), (std::vector<int>{1, 2, 5, 10}));
  EXPECT_EQ(curve_sizes({}, 60), (std::vector<int>{1, 2, 5, 10, 20, 50, 60}));
  EXPECT_EQ(curve_sizes({3, 0, 7, 11}, 10), (std::vector<int>{3, 7}));
}

TEST(CliHelpers, FormatDoubleRoundtrips) {
  for (double v : {0.1, 1.0 / 3, 1e-300, 0.0, 0.25}) EXPECT_EQ(std::stod(format_double(v)), v);
}

}  // namespace
}  // namespace unnas::cli
