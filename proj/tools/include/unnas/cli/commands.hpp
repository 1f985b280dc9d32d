#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "unnas/cli/manifest.hpp"

namespace unnas::cli {

/// Exit codes of the `unnas` binary.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kLabelsDenied = 3,
  kMixedManifests = 4,
};

/// A store holds lines from more than one manifest and --force-mixed was not given.
class MixedManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// {schema_version, manifest_hash, seed}, embedded in every output.
nlohmann::json stamp_json(const Stamp& s);

struct CsvTable {
  nlohmann::json meta;   // parsed from a leading "# {...}" line, null when absent
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;   // 1-based file line of each row
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);
void write_csv(const std::filesystem::path& path, const nlohmann::json& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
CsvTable read_csv(const std::filesystem::path& path);

/// Columns: arch_id, space, params, flops, then one column per accuracy key
/// (sorted). Empty cells mean "not measured".
void export_records_csv(const std::vector<ArchRecord>& records, const std::filesystem::path& path,
                        const nlohmann::json& meta);
/// Reads the export format. `arch_id` is required; `space` (darts|bench,
/// default bench), `params` and `flops` are optional; every other column is an
/// accuracy in [0, 1]. All malformed rows are reported together, each with its
/// line number, in one FormatError.
std::vector<ArchRecord> ingest_records_csv(const std::filesystem::path& path);

/// Effective sizes for an efficiency curve over n records.
std::vector<int> curve_sizes(const std::vector<int>& requested, std::size_t n);

/// Parses argv-style arguments and runs one command. Never throws; returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unnas::cli
