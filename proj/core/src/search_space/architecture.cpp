#include "unnas/search_space/architecture.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "unnas/error.hpp"

namespace unnas {

using nlohmann::json;

std::string_view space_name(SpaceKind s) { return s == SpaceKind::darts ? "darts" : "bench"; }

SpaceKind space_from_name(std::string_view name) {
  if (name == "darts") return SpaceKind::darts;
  if (name == "bench") return SpaceKind::bench;
  throw FormatError("unknown search space '" + std::string(name) + "'");
}

std::string arch_id(const Architecture& a) {
  if (const auto* g = std::get_if<Genotype>(&a)) return genotype_key(*g);
  return bench_canonical_hash(bench_prune(std::get<BenchGraph>(a)));
}

json genotype_payload(const Genotype& g) {
  auto cell = [](const CellGenotype& c) {
    json nodes = json::array();
    for (const auto& n : c.nodes) {
      nodes.push_back(json::array({json::array({op_name(n.inputs[0].op), n.inputs[0].pred}),
                                   json::array({op_name(n.inputs[1].op), n.inputs[1].pred})}));
    }
    return nodes;
  };
  return {{"normal", cell(g.normal)}, {"reduce", cell(g.reduce)}, {"concat", g.concat}};
}

Genotype genotype_from_payload(const json& p) {
  Genotype g;
  try {
    auto cell = [](const json& nodes) {
      CellGenotype c;
      for (const auto& n : nodes) {
        if (n.size() != 2) throw FormatError("genotype node must have two inputs");
        NodeGene node;
        for (int k = 0; k < 2; ++k) {
          node.inputs[k] = {op_from_name(n.at(k).at(0).get<std::string>()), n.at(k).at(1).get<int>()};
        }
        c.nodes.push_back(node);
      }
      return c;
    };
    g.normal = cell(p.at("normal"));
    g.reduce = cell(p.at("reduce"));
    g.concat = p.at("concat").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("genotype payload: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("genotype payload: ") + e.what());
  }
  if (auto v = genotype_violation(g); !v.empty()) throw FormatError("invalid genotype: " + v);
  return g;
}

json bench_payload(const BenchGraph& g) {
  json rows = json::array();
  for (const auto& row : g.adjacency) {
    std::string s;
    for (bool b : row) s += b ? '1' : '0';
    rows.push_back(s);
  }
  json ops = json::array();
  for (auto op : g.ops) ops.push_back(bench_op_name(op));
  return {{"adjacency", rows}, {"ops", ops}};
}

BenchGraph bench_from_payload(const json& p) {
  try {
    std::vector<std::vector<bool>> adj;
    for (const auto& row : p.at("adjacency")) {
      const auto s = row.get<std::string>();
      std::vector<bool> r;
      for (char ch : s) {
        if (ch != '0' && ch != '1') throw FormatError("adjacency rows must be 0/1 strings");
        r.push_back(ch == '1');
      }
      adj.push_back(std::move(r));
    }
    std::vector<BenchOp> ops;
    for (const auto& o : p.at("ops")) ops.push_back(bench_op_from_name(o.get<std::string>()));
    BenchGraph g(std::move(adj), std::move(ops));
    if (!bench_validate(g)) throw FormatError("invalid bench graph");
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bench payload: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("bench payload: ") + e.what());
  }
}

json encode_architecture(const Architecture& a) {
  json payload = std::holds_alternative<Genotype>(a) ? genotype_payload(std::get<Genotype>(a))
                                                     : bench_payload(std::get<BenchGraph>(a));
  return {{"schema_version", kSchemaVersion}, {"space", space_name(space_of(a))}, {"payload", std::move(payload)}};
}

Architecture decode_architecture(const json& j) {
  if (!j.is_object() || !j.contains("schema_version") || !j.contains("space") || !j.contains("payload")) {
    throw FormatError("architecture record needs schema_version, space and payload");
  }
  if (j["schema_version"] != kSchemaVersion) {
    throw FormatError("unsupported schema_version " + j["schema_version"].dump());
  }
  const auto space = space_from_name(j["space"].get<std::string>());
  if (space == SpaceKind::darts) return genotype_from_payload(j["payload"]);
  return bench_from_payload(j["payload"]);
}

std::string genotype_to_dot(const Genotype& g) {
  std::ostringstream os;
  auto state = [](int p) { return p == 0 ? std::string("c_{k-2}") : p == 1 ? std::string("c_{k-1}") : std::to_string(p - 2); };
  auto cell = [&](const CellGenotype& c, const char* name) {
    os << "digraph " << name << " {\n  rankdir=LR;\n  node [shape=box];\n";
    os << "  \"c_{k-2}\" [style=filled];\n  \"c_{k-1}\" [style=filled];\n";
    for (int i = 0; i < static_cast<int>(c.nodes.size()); ++i) {
      const bool out = std::find(g.concat.begin(), g.concat.end(), i + 2) != g.concat.end();
      os << "  \"" << i << "\"" << (out ? " [peripheries=2]" : "") << ";\n";
    }
    for (int i = 0; i < static_cast<int>(c.nodes.size()); ++i) {
      for (const auto& e : c.nodes[i].inputs) {
        os << "  \"" << state(e.pred) << "\" -> \"" << i << "\" [label=\"" << op_name(e.op) << "\"];\n";
      }
    }
    os << "}\n";
  };
  cell(g.normal, "normal");
  cell(g.reduce, "reduce");
  return os.str();
}

std::string ArchRecord::violation() const {
  if (arch_id.empty()) return "empty arch_id";
  if (arch && space_of(*arch) != space) return "space does not match architecture";
  for (const auto& [task, acc] : accuracies) {
    if (task.empty()) return "empty task name";
    if (!std::isfinite(acc) || acc < 0 || acc > 1) return "accuracy for '" + task + "' outside [0, 1]";
  }
  if (cost.flops < 0 || cost.params < 0) return "negative cost";
  return {};
}

json record_to_json(const ArchRecord& r) {
  json j{{"schema_version", kSchemaVersion},
         {"arch_id", r.arch_id},
         {"space", space_name(r.space)},
         {"cost", {{"flops", r.cost.flops}, {"params", r.cost.params}}},
         {"accuracies", r.accuracies}};
  if (r.arch) j["payload"] = encode_architecture(*r.arch)["payload"];
  if (!r.failures.empty()) j["failures"] = r.failures;
  return j;
}

ArchRecord record_from_json(const json& j) {
  ArchRecord r;
  try {
    if (j.at("schema_version") != kSchemaVersion) throw FormatError("unsupported schema_version");
    r.arch_id = j.at("arch_id").get<std::string>();
    r.space = space_from_name(j.at("space").get<std::string>());
    r.cost = {j.at("cost").at("flops").get<std::int64_t>(), j.at("cost").at("params").get<std::int64_t>()};
    r.accuracies = j.at("accuracies").get<std::map<std::string, double>>();
    if (j.contains("payload")) {
      r.arch = decode_architecture({{"schema_version", kSchemaVersion}, {"space", j["space"]}, {"payload", j["payload"]}});
    }
    if (j.contains("failures")) r.failures = j["failures"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("arch record: ") + e.what());
  }
  if (auto v = r.violation(); !v.empty()) throw FormatError("arch record: " + v);
  return r;
}

}  // namespace unnas
