#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "unnas/nn/cost.hpp"
#include "unnas/search_space/bench_graph.hpp"
#include "unnas/search_space/genotype.hpp"

namespace unnas {

inline constexpr int kSchemaVersion = 1;

enum class SpaceKind { darts, bench };

std::string_view space_name(SpaceKind s);
SpaceKind space_from_name(std::string_view name);

/// One point of either search space.
using Architecture = std::variant<Genotype, BenchGraph>;

inline SpaceKind space_of(const Architecture& a) {
  return std::holds_alternative<Genotype>(a) ? SpaceKind::darts : SpaceKind::bench;
}

/// Stable identity: the genotype key, or the canonical hash of the pruned graph.
std::string arch_id(const Architecture& a);

/// {schema_version, space, payload} record. Decoding validates the payload.
nlohmann::json encode_architecture(const Architecture& a);
Architecture decode_architecture(const nlohmann::json& j);

nlohmann::json genotype_payload(const Genotype& g);
Genotype genotype_from_payload(const nlohmann::json& p);
nlohmann::json bench_payload(const BenchGraph& g);
BenchGraph bench_from_payload(const nlohmann::json& p);

/// Two graphviz digraphs (normal, reduce). One labeled edge per gene; nodes
/// listed in concat are drawn with a double border.
std::string genotype_to_dot(const Genotype& g);

/// One sampled architecture with its cost and per-task accuracies in [0, 1].
struct ArchRecord {
  std::string arch_id;
  SpaceKind space = SpaceKind::darts;
  std::optional<Architecture> arch;   // absent for ingested external rows
  CostStats cost;
  std::map<std::string, double> accuracies;
  std::map<std::string, std::string> failures;   // task -> message

  /// Empty when valid, otherwise the first broken invariant.
  [[nodiscard]] std::string violation() const;
};

nlohmann::json record_to_json(const ArchRecord& r);
/// Throws FormatError on malformed input.
ArchRecord record_from_json(const nlohmann::json& j);

}  // namespace unnas
