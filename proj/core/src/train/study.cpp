#include "unnas/train/study.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include "unnas/error.hpp"

namespace unnas {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json line_json(const Stamp& stamp, const ArchRecord& r) {
  return {{"schema_version", kSchemaVersion},
          {"manifest_hash", stamp.manifest_hash},
          {"seed", stamp.seed},
          {"record", record_to_json(r)}};
}

std::vector<std::string> task_keys(const ArchRecord& r) {
  std::vector<std::string> keys;
  for (const auto& [k, _] : r.accuracies) keys.push_back(k);
  for (const auto& [k, _] : r.failures) keys.push_back(k);
  return keys;
}

}  // namespace

std::vector<std::pair<Stamp, ArchRecord>> read_store_lines(const std::filesystem::path& path) {
  std::vector<std::pair<Stamp, ArchRecord>> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("schema_version").get<int>() != kSchemaVersion) {
        throw FormatError("unsupported schema_version " + j.at("schema_version").dump());
      }
      Stamp s{j.at("manifest_hash").get<std::string>(), j.at("seed").get<std::uint64_t>()};
      out.emplace_back(std::move(s), record_from_json(j.at("record")));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ArchRecord> merge_records(const std::vector<ArchRecord>& partials) {
  std::vector<ArchRecord> out;
  std::map<std::string, std::size_t> index;
  for (const auto& p : partials) {
    auto [it, fresh] = index.emplace(p.arch_id, out.size());
    if (fresh) {
      out.push_back(p);
      continue;
    }
    auto& r = out[it->second];
    if (!r.arch && p.arch) r.arch = p.arch;
    for (const auto& [k, v] : p.accuracies) {
      r.accuracies[k] = v;
      r.failures.erase(k);
    }
    for (const auto& [k, v] : p.failures) {
      r.failures[k] = v;
      r.accuracies.erase(k);
    }
  }
  return out;
}

RecordStore::RecordStore(std::filesystem::path path, Stamp stamp) : path_(std::move(path)), stamp_(std::move(stamp)) {
  lines_ = read_store_lines(path_);
  for (const auto& [_, r] : lines_) {
    for (const auto& k : task_keys(r)) done_.emplace(r.arch_id, k);
  }
}

bool RecordStore::has(const std::string& arch_id, const std::string& task) const {
  std::lock_guard lock(mu_);
  return done_.contains({arch_id, task});
}

void RecordStore::append(const ArchRecord& partial) {
  if (auto v = partial.violation(); !v.empty()) throw ContractViolation("store: invalid record: " + v);
  std::lock_guard lock(mu_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("store: cannot append to " + path_.string());
  out << line_json(stamp_, partial).dump() << '\n';
  out.flush();
  if (!out) throw IoError("store: write failed for " + path_.string());
  lines_.emplace_back(stamp_, partial);
  for (const auto& k : task_keys(partial)) done_.emplace(partial.arch_id, k);
}

std::vector<ArchRecord> RecordStore::merged() const {
  std::lock_guard lock(mu_);
  std::vector<ArchRecord> partials;
  for (const auto& [_, r] : lines_) partials.push_back(r);
  return merge_records(partials);
}

std::vector<Stamp> RecordStore::stamps() const {
  std::lock_guard lock(mu_);
  std::vector<Stamp> out;
  for (const auto& [s, _] : lines_) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

std::uint64_t job_seed(std::uint64_t recipe_seed, const std::string& arch_id, const std::string& task) {
  return derive_seed(recipe_seed, fnv1a(arch_id + "/" + task));
}

std::vector<ArchRecord> run_sample_study(const std::vector<PoolEntry>& pool, const Dataset& train, const Dataset& val,
                                         const TrainRecipe& recipe, const StudyOptions& opts, RecordStore& store) {
  recipe.validate();
  if (pool.empty()) throw ContractViolation("study: empty pool");
  if (opts.tasks.empty()) throw ContractViolation("study: no tasks");
  if (opts.repeats < 1 || opts.workers < 1) throw ContractViolation("study: repeats and workers must be >= 1");

  struct Job {
    std::size_t entry;
    Task task;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (Task t : opts.tasks) {
      if (!store.has(pool[i].id, std::string(task_name(t)))) jobs.push_back({i, t});
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto& entry = pool[jobs[j].entry];
      const std::string task(task_name(jobs[j].task));
      ArchRecord partial;
      partial.arch_id = entry.id;
      partial.space = space_of(entry.arch);
      partial.arch = entry.arch;
      partial.cost = entry.cost;
      try {
        const auto stats = repeat_and_average(
            [&](std::uint64_t seed) {
              TrainRecipe r = recipe;
              r.seed = seed;
              return train_and_score(entry.arch, train, val, jobs[j].task, r).val_accuracy;
            },
            opts.repeats, job_seed(recipe.seed, entry.id, task));
        partial.accuracies[task] = stats.mean;
      } catch (const std::exception& e) {
        partial.failures[task] = e.what();
      }
      store.append(partial);
    }
  };
  if (opts.workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < opts.workers; ++w) threads.emplace_back(worker);
  }

  std::map<std::string, ArchRecord> by_id;
  for (auto& r : store.merged()) by_id.emplace(r.arch_id, std::move(r));
  std::vector<ArchRecord> out;
  for (const auto& e : pool) {
    if (auto it = by_id.find(e.id); it != by_id.end()) out.push_back(it->second);
  }
  return out;
}

}  // namespace unnas
