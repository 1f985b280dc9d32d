#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unnas/search_space/sampling.hpp"
#include "unnas/train/train.hpp"

namespace unnas {

/// Provenance written into every stored line.
struct Stamp {
  std::string manifest_hash;
  std::uint64_t seed = 0;

  friend bool operator==(const Stamp&, const Stamp&) = default;
};

/// Append-only JSON-lines store of per-(arch, task) results. Each line is
/// {"schema_version", "manifest_hash", "seed", "record"} where the record holds
/// one accuracy or one failure. Appends are serialized.
class RecordStore {
 public:
  /// Opens (and reads, if present) `path`. Throws FormatError with the line
  /// number on a malformed line.
  RecordStore(std::filesystem::path path, Stamp stamp);

  /// True once (arch_id, task) has a stored accuracy or failure.
  [[nodiscard]] bool has(const std::string& arch_id, const std::string& task) const;
  void append(const ArchRecord& partial);
  /// Lines merged by arch_id, in first-seen order.
  [[nodiscard]] std::vector<ArchRecord> merged() const;
  /// Distinct stamps found in the file (plus this writer's once it appended).
  [[nodiscard]] std::vector<Stamp> stamps() const;
  [[nodiscard]] std::size_t lines() const { return lines_.size(); }

 private:
  std::filesystem::path path_;
  Stamp stamp_;
  mutable std::mutex mu_;
  std::vector<std::pair<Stamp, ArchRecord>> lines_;
  std::set<std::pair<std::string, std::string>> done_;
};

/// Parses a store file without opening it for writing.
std::vector<std::pair<Stamp, ArchRecord>> read_store_lines(const std::filesystem::path& path);
/// Merges partial records by arch_id, keeping first-seen order. Later lines win.
std::vector<ArchRecord> merge_records(const std::vector<ArchRecord>& partials);

struct StudyOptions {
  std::vector<Task> tasks;
  int repeats = 1;
  int workers = 1;
};

/// Trains every pool architecture on every task (skipping jobs already in the
/// store), appending one line per finished job. A failing job is recorded as a
/// failure and the study moves on. Returns the merged records in pool order.
std::vector<ArchRecord> run_sample_study(const std::vector<PoolEntry>& pool, const Dataset& train, const Dataset& val,
                                         const TrainRecipe& recipe, const StudyOptions& opts, RecordStore& store);

/// Seed of the (arch, task) job; depends only on the recipe seed and the names.
std::uint64_t job_seed(std::uint64_t recipe_seed, const std::string& arch_id, const std::string& task);

}  // namespace unnas
