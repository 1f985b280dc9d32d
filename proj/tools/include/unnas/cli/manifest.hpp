#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unnas/darts/search.hpp"
#include "unnas/search_space/sampling.hpp"
#include "unnas/train/study.hpp"

namespace unnas::cli {

/// Where images come from. CIFAR-10 reads `dir` (or $UNNAS_CIFAR10_DIR when
/// empty); "synthetic" draws the procedural shapes set.
struct DatasetSpec {
  std::string kind = "synthetic";
  std::string dir;
  std::int64_t train = 512;   // training split size
  std::int64_t val = 128;     // validation split size (disjoint from train)
  int classes = 10;           // synthetic only
  int size = 32;              // synthetic only
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Splits {
  Dataset train;
  Dataset val;
};

/// Loads both splits. CIFAR train comes from the training batches, val from
/// the test batch; synthetic splits are disjoint slices of one draw.
Splits load_splits(const DatasetSpec& spec);

/// Cost filter against ResNet-56, evaluated on a network of the given scale.
struct FilterSpec {
  double lo = 0.8;
  double hi = 1.2;
  int width = 16;
  int depth = 20;
  int image_size = 32;
  int stem_stride_layers = 1;
};

struct SampleSpec {
  int n = 10;
  int nodes = 4;
  int bench_vertices = 7;
  std::optional<FilterSpec> filter;
  std::int64_t max_attempts = 10000;
};

struct AnalysisSpec {
  std::string target = "supv_cls";
  std::vector<int> sizes;   // empty: 1, 2, 5, 10, 20, 50, ... up to n, plus n
  double huber_delta = 1.345;
};

struct Manifest {
  int schema_version = kSchemaVersion;
  std::string experiment = "unnamed";
  SpaceKind space = SpaceKind::darts;
  DatasetSpec dataset;
  std::optional<DatasetSpec> search_dataset;   // defaults to `dataset`
  std::vector<Task> tasks{Task::supv_cls, Task::rot};
  SampleSpec sample;
  TrainRecipe recipe;
  darts::SearchConfig search;
  bool search_request_labels = false;
  int repeats = 1;
  int workers = 1;
  AnalysisSpec analysis;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/unnamed";

  [[nodiscard]] const DatasetSpec& search_data() const { return search_dataset ? *search_dataset : dataset; }
};

/// Every field, in a fixed key order.
nlohmann::json manifest_to_json(const Manifest& m);
/// Throws FormatError naming the offending field path, e.g. "manifest.recipe.epochs".
Manifest manifest_from_json(const nlohmann::json& j);
Manifest load_manifest(const std::filesystem::path& path);

/// 16 hex digits over every field except output_dir.
std::string manifest_hash(const Manifest& m);

/// Seeds derived from the master seed, one per stage.
std::uint64_t stage_seed(const Manifest& m, std::string_view stage);

nlohmann::json dataset_to_json(const DatasetSpec& d);
DatasetSpec dataset_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json search_to_json(const darts::SearchConfig& s);

}  // namespace unnas::cli
