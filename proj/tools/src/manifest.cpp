#include "unnas/cli/manifest.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "unnas/error.hpp"

namespace unnas::cli {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Reads the fields of one JSON object, remembering which keys were consumed
// so that typos surface as "unknown field" errors with their full path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw FormatError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      j_.at(key).get_to(out);
    } catch (const json::exception&) {
      throw FormatError(path_ + "." + key + ": expected " + type_name<T>() + ", got " + j_.at(key).dump());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null() ? &j_.at(key) : nullptr;
  }

  [[nodiscard]] std::string at(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw FormatError(path_ + "." + key + ": unknown field");
    }
  }

 private:
  template <typename T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Task parse_task(const json& j, const std::string& path) {
  try {
    return task_from_name(j.get<std::string>());
  } catch (const std::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

nlohmann::json filter_to_json(const FilterSpec& f) {
  return {{"lo", f.lo}, {"hi", f.hi}, {"width", f.width}, {"depth", f.depth}, {"image_size", f.image_size},
          {"stem_stride_layers", f.stem_stride_layers}};
}

}  // namespace

json dataset_to_json(const DatasetSpec& d) {
  return {{"kind", d.kind}, {"dir", d.dir},         {"train", d.train}, {"val", d.val},
          {"classes", d.classes}, {"size", d.size}, {"seed", d.seed}};
}

DatasetSpec dataset_from_json(const json& j, const std::string& path) {
  DatasetSpec d;
  Reader r(j, path);
  r.get("kind", d.kind);
  r.get("dir", d.dir);
  r.get("train", d.train);
  r.get("val", d.val);
  r.get("classes", d.classes);
  r.get("size", d.size);
  r.get("seed", d.seed);
  r.finish();
  if (d.kind != "synthetic" && d.kind != "cifar10") {
    throw FormatError(r.at("kind") + ": expected \"synthetic\" or \"cifar10\", got \"" + d.kind + "\"");
  }
  if (d.train < 1 || d.val < 1) throw FormatError(path + ": train and val must be >= 1");
  if (d.kind == "synthetic" && (d.classes < 1 || d.classes > 10 || d.size < 8)) {
    throw FormatError(path + ": synthetic needs classes in [1, 10] and size >= 8");
  }
  return d;
}

Splits load_splits(const DatasetSpec& spec) {
  if (spec.kind == "synthetic") {
    const auto all = make_synthetic_shapes(spec.train + spec.val, spec.classes, spec.size, spec.seed);
    return {all.subset(0, spec.train), all.subset(spec.train, spec.train + spec.val)};
  }
  std::string dir = spec.dir;
  if (dir.empty()) {
    const char* env = std::getenv("UNNAS_CIFAR10_DIR");
    if (env == nullptr || *env == '\0') {
      throw IoError("dataset.dir is empty and UNNAS_CIFAR10_DIR is not set; point it at cifar-10-batches-bin");
    }
    dir = env;
  }
  const auto train = load_cifar10_dir(dir, true);
  const auto test = load_cifar10_dir(dir, false);
  if (spec.train > train.size() || spec.val > test.size()) {
    throw ContractViolation("dataset: asked for " + std::to_string(spec.train) + "/" + std::to_string(spec.val) +
                            " images, have " + std::to_string(train.size()) + "/" + std::to_string(test.size()));
  }
  return {train.random_subset(spec.train, derive_seed(spec.seed, 1)),
          test.random_subset(spec.val, derive_seed(spec.seed, 2))};
}

json search_to_json(const darts::SearchConfig& s) {
  return {{"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"lr", s.w_schedule.init_lr},
          {"warmup_epochs", s.w_schedule.warmup_epochs},
          {"momentum", s.w_momentum},
          {"weight_decay", s.w_weight_decay},
          {"alpha_lr", s.alpha_lr},
          {"alpha_weight_decay", s.alpha_weight_decay},
          {"postpone_fraction", s.postpone_fraction},
          {"nodes", s.nodes},
          {"width", s.width},
          {"depth", s.depth},
          {"input_crop", s.input_crop},
          {"stem_stride_layers", s.stem_stride_layers},
          {"objective", std::string(task_name(s.objective))},
          {"halve_batch", s.halve_batch},
          {"augment", s.augment},
          {"color_bins", s.color_bins},
          {"color_pool", s.color_pool},
          {"jigsaw_grid", s.jigsaw_grid},
          {"jigsaw_K", s.jigsaw_K}};
}

json manifest_to_json(const Manifest& m) {
  json tasks = json::array();
  for (Task t : m.tasks) tasks.push_back(std::string(task_name(t)));
  json sample = {{"n", m.sample.n},
                 {"nodes", m.sample.nodes},
                 {"bench_vertices", m.sample.bench_vertices},
                 {"filter", m.sample.filter ? filter_to_json(*m.sample.filter) : json(nullptr)},
                 {"max_attempts", m.sample.max_attempts}};
  json search = search_to_json(m.search);
  search["request_labels"] = m.search_request_labels;
  return {{"schema_version", m.schema_version},
          {"experiment", m.experiment},
          {"space", std::string(space_name(m.space))},
          {"dataset", dataset_to_json(m.dataset)},
          {"search_dataset", m.search_dataset ? dataset_to_json(*m.search_dataset) : json(nullptr)},
          {"tasks", tasks},
          {"sample", sample},
          {"recipe", recipe_to_json(m.recipe)},
          {"search", search},
          {"repeats", m.repeats},
          {"workers", m.workers},
          {"analysis", {{"target", m.analysis.target}, {"sizes", m.analysis.sizes}, {"huber_delta", m.analysis.huber_delta}}},
          {"seed", m.seed},
          {"output_dir", m.output_dir}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  Reader r(j, "manifest");
  r.get("schema_version", m.schema_version);
  if (m.schema_version != kSchemaVersion) {
    throw FormatError("manifest.schema_version: unsupported version " + std::to_string(m.schema_version));
  }
  r.get("experiment", m.experiment);
  std::string space = std::string(space_name(m.space));
  r.get("space", space);
  try {
    m.space = space_from_name(space);
  } catch (const FormatError& e) {
    throw FormatError(r.at("space") + ": " + e.what());
  }
  if (const auto* d = r.sub("dataset")) m.dataset = dataset_from_json(*d, "manifest.dataset");
  if (const auto* d = r.sub("search_dataset")) m.search_dataset = dataset_from_json(*d, "manifest.search_dataset");
  if (const auto* t = r.sub("tasks")) {
    if (!t->is_array() || t->empty()) throw FormatError("manifest.tasks: expected a non-empty list of task names");
    m.tasks.clear();
    for (std::size_t i = 0; i < t->size(); ++i) {
      m.tasks.push_back(parse_task((*t)[i], "manifest.tasks[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* s = r.sub("sample")) {
    Reader rs(*s, "manifest.sample");
    rs.get("n", m.sample.n);
    rs.get("nodes", m.sample.nodes);
    rs.get("bench_vertices", m.sample.bench_vertices);
    rs.get("max_attempts", m.sample.max_attempts);
    if (const auto* f = rs.sub("filter")) {
      FilterSpec fs;
      Reader rf(*f, "manifest.sample.filter");
      rf.get("lo", fs.lo);
      rf.get("hi", fs.hi);
      rf.get("width", fs.width);
      rf.get("depth", fs.depth);
      rf.get("image_size", fs.image_size);
      rf.get("stem_stride_layers", fs.stem_stride_layers);
      rf.finish();
      if (!(fs.lo < fs.hi)) throw FormatError("manifest.sample.filter: lo must be < hi");
      m.sample.filter = fs;
    }
    rs.finish();
    if (m.sample.n < 1) throw FormatError("manifest.sample.n: must be >= 1");
    if (m.sample.nodes < 1) throw FormatError("manifest.sample.nodes: must be >= 1");
    if (m.sample.bench_vertices < 2 || m.sample.bench_vertices > kBenchMaxVertices) {
      throw FormatError("manifest.sample.bench_vertices: must lie in [2, " + std::to_string(kBenchMaxVertices) + "]");
    }
  }
  if (const auto* rc = r.sub("recipe")) {
    try {
      m.recipe = recipe_from_json(*rc);
      m.recipe.validate();
    } catch (const std::exception& e) {
      throw FormatError(std::string("manifest.") + e.what());
    }
  }
  if (const auto* s = r.sub("search")) {
    Reader rs(*s, "manifest.search");
    auto& c = m.search;
    rs.get("epochs", c.epochs);
    rs.get("batch_size", c.batch_size);
    rs.get("lr", c.w_schedule.init_lr);
    rs.get("warmup_epochs", c.w_schedule.warmup_epochs);
    rs.get("momentum", c.w_momentum);
    rs.get("weight_decay", c.w_weight_decay);
    rs.get("alpha_lr", c.alpha_lr);
    rs.get("alpha_weight_decay", c.alpha_weight_decay);
    rs.get("postpone_fraction", c.postpone_fraction);
    rs.get("nodes", c.nodes);
    rs.get("width", c.width);
    rs.get("depth", c.depth);
    rs.get("input_crop", c.input_crop);
    rs.get("stem_stride_layers", c.stem_stride_layers);
    if (const auto* o = rs.sub("objective")) c.objective = parse_task(*o, "manifest.search.objective");
    rs.get("halve_batch", c.halve_batch);
    rs.get("augment", c.augment);
    rs.get("color_bins", c.color_bins);
    rs.get("color_pool", c.color_pool);
    rs.get("jigsaw_grid", c.jigsaw_grid);
    rs.get("jigsaw_K", c.jigsaw_K);
    rs.get("request_labels", m.search_request_labels);
    rs.finish();
    c.w_schedule.total_epochs = c.epochs;
    try {
      c.validate();
    } catch (const std::exception& e) {
      throw FormatError(std::string("manifest.search: ") + e.what());
    }
  }
  r.get("repeats", m.repeats);
  r.get("workers", m.workers);
  if (m.repeats < 1) throw FormatError("manifest.repeats: must be >= 1");
  if (m.workers < 1) throw FormatError("manifest.workers: must be >= 1");
  if (const auto* a = r.sub("analysis")) {
    Reader ra(*a, "manifest.analysis");
    ra.get("target", m.analysis.target);
    ra.get("sizes", m.analysis.sizes);
    ra.get("huber_delta", m.analysis.huber_delta);
    ra.finish();
    if (!(m.analysis.huber_delta > 0)) throw FormatError("manifest.analysis.huber_delta: must be > 0");
  }
  r.get("seed", m.seed);
  r.get("output_dir", m.output_dir);
  r.finish();
  m.search.seed = m.seed;
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

std::string manifest_hash(const Manifest& m) {
  auto j = manifest_to_json(m);
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::uint64_t stage_seed(const Manifest& m, std::string_view stage) { return derive_seed(m.seed, fnv1a(stage)); }

}  // namespace unnas::cli
