#include "unnas/cli/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "unnas/analysis/stats.hpp"
#include "unnas/error.hpp"

namespace unnas::cli {

namespace fs = std::filesystem;
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

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// RFC 4180 fields: quoted cells may hold commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line, bool& ok) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  ok = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c != '"') {
        cur.push_back(c);
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else {
        quoted = false;
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (quoted) ok = false;
  cells.push_back(cur);
  return cells;
}

std::string csv_cell(const std::string& cell) {
  if (cell.find('\n') != std::string::npos) throw ContractViolation("csv: cell contains a newline");
  if (cell.find_first_of(",\"") == std::string::npos) return cell;
  std::string q = "\"";
  for (char c : cell) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

// Everything a command needs besides its own flags.
struct Run {
  Manifest manifest;
  Stamp stamp;
  fs::path out;
  bool force_mixed = false;
  std::ostream* log = nullptr;
};

json with_stamp(json j, const Stamp& s) {
  auto st = stamp_json(s);
  for (auto& [k, v] : st.items()) j[k] = v;
  return j;
}

// ---- sample ----

CostFn filter_cost_fn(const FilterSpec& f) {
  nn::NetworkConfig cfg;
  cfg.width = f.width;
  cfg.depth = f.depth;
  cfg.stem_stride_layers = f.stem_stride_layers;
  const Shape image{3, f.image_size, f.image_size};
  return [cfg, image](const Architecture& a) { return nn::architecture_cost(a, cfg, image); };
}

CostFn recipe_cost_fn(const Manifest& m) {
  const int size = m.dataset.kind == "cifar10" ? 32 : m.dataset.size;
  const int side = m.recipe.input_crop > 0 ? std::min(m.recipe.input_crop, size) : size;
  auto cfg = m.recipe.network_config(Task::supv_cls, 10);
  cfg.auxiliary = false;
  const Shape image{3, side, side};
  return [cfg, image](const Architecture& a) { return nn::architecture_cost(a, cfg, image); };
}

int cmd_sample(const Run& run) {
  const auto& m = run.manifest;
  PoolOptions opts;
  opts.space = m.space;
  opts.nodes = m.sample.nodes;
  opts.bench_vertices = m.sample.bench_vertices;
  opts.max_attempts = m.sample.max_attempts;
  CostFn cost = recipe_cost_fn(m);
  if (m.sample.filter) {
    const auto& f = *m.sample.filter;
    opts.window = CostWindow{f.lo, f.hi};
    opts.reference = nn::resnet56_cost({3, f.image_size, f.image_size}, 10, f.stem_stride_layers);
    cost = filter_cost_fn(f);
  }
  Rng rng(stage_seed(m, "sample"));
  const auto pool = sample_pool(rng, m.sample.n, opts, cost);

  std::string text;
  for (const auto& e : pool.entries) {
    ArchRecord r;
    r.arch_id = e.id;
    r.space = m.space;
    r.arch = e.arch;
    r.cost = e.cost;
    text += with_stamp({{"record", record_to_json(r)}}, run.stamp).dump() + "\n";
  }
  write_text(run.out / "pool.jsonl", text);
  json meta = with_stamp({{"experiment", m.experiment},
                          {"n", pool.entries.size()},
                          {"rejections", pool.rejections},
                          {"duplicates", pool.duplicates},
                          {"acceptance_rate", pool.acceptance_rate()},
                          {"filter", m.sample.filter.has_value()}},
                         run.stamp);
  if (m.sample.filter) {
    meta["reference"] = {{"params", opts.reference.params}, {"flops", opts.reference.flops}};
  }
  write_json(run.out / "pool_meta.json", meta);
  *run.log << "sampled " << pool.entries.size() << " architectures (acceptance rate "
           << format_double(pool.acceptance_rate()) << ") -> " << (run.out / "pool.jsonl").string() << "\n";
  return kOk;
}

// ---- study ----

void check_store_stamps(const std::vector<Stamp>& stamps, const Stamp& mine, bool force, const fs::path& path) {
  std::set<std::string> hashes;
  for (const auto& s : stamps) hashes.insert(s.manifest_hash);
  if (!mine.manifest_hash.empty()) hashes.insert(mine.manifest_hash);
  if (hashes.size() > 1 && !force) {
    std::string list;
    for (const auto& h : hashes) list += (list.empty() ? "" : ", ") + h;
    throw MixedManifestError(path.string() + " mixes manifests {" + list + "}; pass --force-mixed to proceed");
  }
}

int cmd_study(const Run& run) {
  const auto& m = run.manifest;
  const auto pool_path = run.out / "pool.jsonl";
  if (!fs::exists(pool_path)) throw IoError(pool_path.string() + " not found; run `unnas sample` first");
  std::vector<PoolEntry> pool;
  for (const auto& [stamp, rec] : read_store_lines(pool_path)) {
    if (stamp.manifest_hash != run.stamp.manifest_hash && !run.force_mixed) {
      throw MixedManifestError(pool_path.string() + " was sampled under manifest " + stamp.manifest_hash +
                               ", current is " + run.stamp.manifest_hash + "; pass --force-mixed to proceed");
    }
    if (!rec.arch) throw FormatError(pool_path.string() + ": record " + rec.arch_id + " has no architecture");
    pool.push_back({*rec.arch, rec.arch_id, rec.cost});
  }
  const auto store_path = run.out / "store.jsonl";
  RecordStore store(store_path, run.stamp);
  check_store_stamps(store.stamps(), run.stamp, run.force_mixed, store_path);
  const auto splits = load_splits(m.dataset);
  TrainRecipe recipe = m.recipe;
  recipe.seed = stage_seed(m, "study");
  StudyOptions opts{m.tasks, m.repeats, m.workers};
  const auto before = store.lines();
  const auto records = run_sample_study(pool, splits.train, splits.val, recipe, opts, store);
  std::size_t failures = 0;
  for (const auto& r : records) failures += r.failures.size();
  *run.log << "study: " << store.lines() - before << " new jobs, " << records.size() << " records, " << failures
           << " failed cells -> " << store_path.string() << "\n";
  return kOk;
}

// ---- search / evaluate ----

int cmd_search(const Run& run) {
  const auto& m = run.manifest;
  const auto splits = load_splits(m.search_data());
  // The firewall: label-free objectives get an images-only mount, and asking
  // for labels is refused before any training starts.
  const Dataset mounted = darts::mount_for_objective(splits.train, m.search.objective, m.search_request_labels);
  darts::SearchConfig cfg = m.search;
  cfg.seed = stage_seed(m, "search");
  const auto res = darts::run_search(mounted, cfg);

  json log = json::array();
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : res.log) {
    log.push_back(darts::metrics_to_json(e));
    rows.push_back({std::to_string(e.epoch), format_double(e.w_loss), format_double(e.a_loss),
                    format_double(e.entropy_per_edge), format_double(e.lr), e.alpha_updated ? "1" : "0"});
  }
  const Architecture arch = res.genotype;
  json out = with_stamp({{"experiment", m.experiment},
                         {"objective", std::string(task_name(m.search.objective))},
                         {"search_dataset", dataset_to_json(m.search_data())},
                         {"architecture", encode_architecture(arch)},
                         {"arch_id", arch_id(arch)},
                         {"initial_entropy", res.initial_entropy},
                         {"log", log}},
                        run.stamp);
  write_json(run.out / "search" / "genotype.json", out);
  write_csv(run.out / "search" / "log.csv", stamp_json(run.stamp),
            {"epoch", "w_loss", "a_loss", "entropy_per_edge", "lr", "alpha_updated"}, rows);
  write_text(run.out / "search" / "genotype.dot", genotype_to_dot(res.genotype));
  *run.log << "search (" << task_name(m.search.objective) << "): " << arch_id(arch) << "\n";
  return kOk;
}

int cmd_evaluate(const Run& run, const fs::path& genotype_path) {
  const auto& m = run.manifest;
  const json g = read_json(genotype_path);
  if (!g.contains("architecture")) throw FormatError(genotype_path.string() + ": missing \"architecture\"");
  const Architecture arch = decode_architecture(g.at("architecture"));
  bool reference_only = false;
  if (g.contains("search_dataset")) {
    reference_only = dataset_from_json(g.at("search_dataset"), "genotype.search_dataset") == m.dataset;
  }
  const auto splits = load_splits(m.dataset);
  json results = json::array();
  for (Task t : m.tasks) {
    std::vector<TrainReport> reports;
    const auto stats = repeat_and_average(
        [&](std::uint64_t seed) {
          TrainRecipe r = m.recipe;
          r.seed = seed;
          reports.push_back(train_and_score(arch, splits.train, splits.val, t, r));
          return reports.back().val_accuracy;
        },
        m.repeats, derive_seed(stage_seed(m, "evaluate"), fnv1a(task_name(t))));
    json reps = json::array();
    for (const auto& r : reports) reps.push_back(report_to_json(r));
    results.push_back({{"task", std::string(task_name(t))},
                       {"mean", stats.mean},
                       {"std", stats.std},
                       {"values", stats.values},
                       {"reports", reps}});
    *run.log << "evaluate " << task_name(t) << ": " << format_double(stats.mean) << "\n";
  }
  json out = with_stamp({{"experiment", m.experiment},
                         {"arch_id", arch_id(arch)},
                         {"architecture", encode_architecture(arch)},
                         {"dataset", dataset_to_json(m.dataset)},
                         {"reference_only", reference_only},
                         {"results", results}},
                        run.stamp);
  if (reference_only) out["note"] = "search and evaluation datasets are the same; not a valid label-free result";
  write_json(run.out / "evaluate.json", out);
  if (reference_only) *run.log << "note: reference-only (search and evaluation used the same dataset)\n";
  return kOk;
}

// ---- analyze ----

int cmd_analyze(const Run& run, const fs::path& store_path, bool have_manifest) {
  if (!fs::exists(store_path)) throw IoError("store " + store_path.string() + " not found");
  const auto lines = read_store_lines(store_path);
  if (lines.empty()) throw ContractViolation("store " + store_path.string() + " is empty");
  std::vector<Stamp> stamps;
  std::vector<ArchRecord> partials;
  for (const auto& [s, r] : lines) {
    if (std::find(stamps.begin(), stamps.end(), s) == stamps.end()) stamps.push_back(s);
    partials.push_back(r);
  }
  check_store_stamps(stamps, have_manifest ? run.stamp : Stamp{}, run.force_mixed, store_path);
  const auto records = merge_records(partials);
  const Stamp stamp = have_manifest ? run.stamp : stamps.front();
  const auto& spec = run.manifest.analysis;
  const fs::path dir = run.out / "analysis";

  std::set<std::string> keys;
  for (const auto& r : records) {
    for (const auto& [k, _] : r.accuracies) keys.insert(k);
  }
  json correlations = json::array(), skipped = json::array();
  for (const auto& pretext : keys) {
    if (pretext == spec.target) continue;
    std::vector<ArchRecord> both;
    std::vector<std::string> missing;
    for (const auto& r : records) {
      if (r.accuracies.contains(pretext) && r.accuracies.contains(spec.target)) {
        both.push_back(r);
      } else {
        missing.push_back(r.arch_id);
      }
    }
    if (!missing.empty()) skipped.push_back({{"pretext", pretext}, {"target", spec.target}, {"arch_ids", missing}});
    if (both.size() < 2) {
      *run.log << "skip " << pretext << " vs " << spec.target << ": " << both.size() << " complete records\n";
      continue;
    }
    std::vector<double> xs, ys;
    std::vector<std::vector<std::string>> scatter;
    for (const auto& r : both) {
      xs.push_back(r.accuracies.at(pretext));
      ys.push_back(r.accuracies.at(spec.target));
      scatter.push_back({r.arch_id, format_double(xs.back()), format_double(ys.back())});
    }
    const auto rho = analysis::spearman_rho(xs, ys);
    const std::string tag = pretext + "_" + spec.target;
    write_csv(dir / ("scatter_" + tag + ".csv"), stamp_json(stamp), {"arch_id", "pretext_acc", "target_acc"}, scatter);

    json entry = {{"pretext", pretext},
                  {"target", spec.target},
                  {"n", rho.n},
                  {"rho", rho.degenerate ? json(nullptr) : json(rho.rho)},
                  {"degenerate", rho.degenerate}};
    try {
      const auto fit = analysis::huber_fit(xs, ys, spec.huber_delta);
      entry["huber"] = {{"slope", fit.slope},   {"intercept", fit.intercept}, {"iterations", fit.iterations},
                        {"scale", fit.scale},   {"delta", spec.huber_delta}};
    } catch (const ContractViolation& e) {
      entry["huber"] = {{"error", e.what()}};
    }
    Rng rng(derive_seed(stamp.seed, fnv1a("efficiency/" + tag)));
    const auto curve = analysis::efficiency_curve(both, pretext, spec.target, curve_sizes(spec.sizes, both.size()), rng);
    std::vector<std::vector<std::string>> eff;
    json pts = json::array();
    for (const auto& p : curve.points) {
      eff.push_back({std::to_string(p.m), std::to_string(p.repeats), format_double(p.mean), format_double(p.std),
                     format_double(p.band)});
      pts.push_back({{"m", p.m}, {"repeats", p.repeats}, {"mean", p.mean}, {"std", p.std}, {"band", p.band}});
    }
    auto eff_meta = stamp_json(stamp);
    eff_meta["sampling"] = analysis::EfficiencyCurve::kSampling;
    write_csv(dir / ("efficiency_" + tag + ".csv"), eff_meta, {"m", "repeats", "mean", "std", "band"}, eff);
    entry["efficiency"] = {{"n", curve.n}, {"sampling", analysis::EfficiencyCurve::kSampling}, {"points", pts}};
    correlations.push_back(entry);
    *run.log << "rho(" << pretext << ", " << spec.target << ") = "
             << (rho.degenerate ? std::string("undefined") : format_double(rho.rho)) << " over " << rho.n
             << " architectures\n";
  }

  std::vector<std::vector<std::string>> index;
  for (const auto& r : records) {
    if (!r.arch || !std::holds_alternative<Genotype>(*r.arch)) continue;
    const std::string file = hex16(fnv1a(r.arch_id)) + ".dot";
    write_text(dir / "dot" / file, genotype_to_dot(std::get<Genotype>(*r.arch)));
    index.push_back({r.arch_id, file});
  }
  if (!index.empty()) write_csv(dir / "dot" / "index.csv", stamp_json(stamp), {"arch_id", "file"}, index);
  export_records_csv(records, dir / "records.csv", stamp_json(stamp));

  json stamp_list = json::array();
  for (const auto& s : stamps) stamp_list.push_back(stamp_json(s));
  write_json(dir / "report.json", with_stamp({{"store", store_path.string()},
                                              {"records", records.size()},
                                              {"target", spec.target},
                                              {"correlations", correlations},
                                              {"skipped", skipped},
                                              {"store_stamps", stamp_list}},
                                             stamp));
  return kOk;
}

// ---- ingest / dot ----

int cmd_ingest(const Run& run, const fs::path& input, const std::string& format, const fs::path& store_path) {
  if (format != "csv") throw ContractViolation("ingest: unsupported format '" + format + "' (supported: csv)");
  const auto records = ingest_records_csv(input);
  std::ifstream in(input, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const Stamp stamp{"ingest-" + hex16(fnv1a(ss.str())), run.stamp.seed};
  RecordStore store(store_path, stamp);
  for (const auto& r : records) store.append(r);
  *run.log << "ingested " << records.size() << " records -> " << store_path.string() << "\n";
  return kOk;
}

int cmd_dot(const Run& run, const fs::path& genotype_path, bool to_file, std::ostream& out) {
  const json g = read_json(genotype_path);
  const json& a = g.contains("architecture") ? g.at("architecture") : g;
  const Architecture arch = decode_architecture(a);
  if (!std::holds_alternative<Genotype>(arch)) throw ContractViolation("dot: only cell genotypes can be drawn");
  const auto text = genotype_to_dot(std::get<Genotype>(arch));
  if (to_file) {
    write_text(run.out / (hex16(fnv1a(arch_id(arch))) + ".dot"), text);
  } else {
    out << text;
  }
  return kOk;
}

}  // namespace

json stamp_json(const Stamp& s) {
  return {{"schema_version", kSchemaVersion}, {"manifest_hash", s.manifest_hash}, {"seed", s.seed}};
}

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_csv(const fs::path& path, const json& meta, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  if (!meta.is_null()) text += "# " + meta.dump() + "\n";
  auto join = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      line += (i ? "," : "") + csv_cell(cells[i]);
    }
    return line + "\n";
  };
  text += join(header);
  for (const auto& r : rows) text += join(r);
  write_text(path, text);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    if (line[0] == '#') {
      if (t.header.empty() && t.meta.is_null()) {
        try {
          t.meta = json::parse(line.substr(1));
        } catch (const json::parse_error&) {
          // free-form comment
        }
      }
      continue;
    }
    bool ok = true;
    auto cells = split_csv_line(line, ok);
    if (!ok) throw FormatError(path.string() + ":" + std::to_string(n) + ": unterminated quoted cell");
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      t.rows.push_back(std::move(cells));
      t.row_lines.push_back(n);
    }
  }
  if (t.header.empty()) throw FormatError(path.string() + ": no header line");
  return t;
}

void export_records_csv(const std::vector<ArchRecord>& records, const fs::path& path, const json& meta) {
  std::set<std::string> keys;
  for (const auto& r : records) {
    for (const auto& [k, _] : r.accuracies) keys.insert(k);
  }
  std::vector<std::string> header{"arch_id", "space", "params", "flops"};
  header.insert(header.end(), keys.begin(), keys.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records) {
    std::vector<std::string> row{r.arch_id, std::string(space_name(r.space)), std::to_string(r.cost.params),
                                 std::to_string(r.cost.flops)};
    for (const auto& k : keys) {
      auto it = r.accuracies.find(k);
      row.push_back(it == r.accuracies.end() ? "" : format_double(it->second));
    }
    rows.push_back(std::move(row));
  }
  write_csv(path, meta, header, rows);
}

std::vector<ArchRecord> ingest_records_csv(const fs::path& path) {
  const auto t = read_csv(path);
  int id_col = -1, space_col = -1, params_col = -1, flops_col = -1;
  std::vector<std::pair<int, std::string>> acc_cols;
  std::vector<std::string> errors;
  std::set<std::string> seen_cols;
  for (int c = 0; c < static_cast<int>(t.header.size()); ++c) {
    const auto& h = t.header[static_cast<std::size_t>(c)];
    if (h.empty()) errors.push_back("header: column " + std::to_string(c + 1) + " has no name");
    if (!seen_cols.insert(h).second) errors.push_back("header: duplicate column '" + h + "'");
    if (h == "arch_id") id_col = c;
    else if (h == "space") space_col = c;
    else if (h == "params") params_col = c;
    else if (h == "flops") flops_col = c;
    else acc_cols.emplace_back(c, h);
  }
  if (id_col < 0) errors.push_back("header: required column 'arch_id' is missing");
  std::vector<ArchRecord> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < t.rows.size() && id_col >= 0; ++i) {
    const auto& row = t.rows[i];
    const std::string where = "line " + std::to_string(t.row_lines[i]) + ": ";
    if (row.size() != t.header.size()) {
      errors.push_back(where + "expected " + std::to_string(t.header.size()) + " cells, got " +
                       std::to_string(row.size()));
      continue;
    }
    ArchRecord r;
    r.space = SpaceKind::bench;
    r.arch_id = row[static_cast<std::size_t>(id_col)];
    bool ok = true;
    auto bad = [&](const std::string& msg) {
      errors.push_back(where + msg);
      ok = false;
    };
    if (space_col >= 0) {
      try {
        r.space = space_from_name(row[static_cast<std::size_t>(space_col)]);
      } catch (const FormatError& e) {
        bad(e.what());
      }
    }
    for (auto [col, name] : {std::pair{params_col, "params"}, std::pair{flops_col, "flops"}}) {
      if (col < 0 || row[static_cast<std::size_t>(col)].empty()) continue;
      std::int64_t v = 0;
      if (!parse_int(row[static_cast<std::size_t>(col)], v)) {
        bad(std::string(name) + " '" + row[static_cast<std::size_t>(col)] + "' is not an integer");
      }
      (std::string_view(name) == "params" ? r.cost.params : r.cost.flops) = v;
    }
    for (const auto& [col, name] : acc_cols) {
      const auto& cell = row[static_cast<std::size_t>(col)];
      if (cell.empty()) continue;
      double v = 0;
      if (!parse_double(cell, v)) {
        bad(name + " '" + cell + "' is not a number");
        continue;
      }
      r.accuracies[name] = v;
    }
    if (ok) {
      if (auto v = r.violation(); !v.empty()) {
        bad(v);
      } else if (!ids.insert(r.arch_id).second) {
        bad("duplicate arch_id '" + r.arch_id + "'");
      }
    }
    if (ok) out.push_back(std::move(r));
  }
  if (!errors.empty()) {
    std::string msg = path.string() + ": " + std::to_string(errors.size()) + " malformed row(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw FormatError(msg);
  }
  return out;
}

std::vector<int> curve_sizes(const std::vector<int>& requested, std::size_t n) {
  std::vector<int> sizes;
  if (!requested.empty()) {
    for (int m : requested) {
      if (m >= 1 && static_cast<std::size_t>(m) <= n) sizes.push_back(m);
    }
    return sizes;
  }
  for (int decade = 1; static_cast<std::size_t>(decade) <= n; decade *= 10) {
    for (int f : {1, 2, 5}) {
      if (static_cast<std::size_t>(decade * f) < n) sizes.push_back(decade * f);
    }
  }
  sizes.push_back(static_cast<int>(n));
  return sizes;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"unnas: label-free architecture search experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string manifest_path, out_dir, genotype_path, store_path, input_path, format = "csv";
  std::optional<std::uint64_t> seed;
  bool force_mixed = false;
  app.add_option("--manifest", manifest_path, "Experiment manifest (JSON)");
  app.add_option("--seed", seed, "Override the manifest's master seed");
  app.add_option("--out", out_dir, "Override the manifest's output directory");
  app.add_flag("--force-mixed", force_mixed, "Accept stores that mix manifests");

  auto* sample = app.add_subcommand("sample", "Sample an architecture pool (optionally cost-filtered)");
  auto* study = app.add_subcommand("study", "Train every pool architecture on every task; resumable");
  auto* search = app.add_subcommand("search", "Run a differentiable search for the manifest's objective");
  auto* evaluate = app.add_subcommand("evaluate", "Train a searched genotype from scratch and score it");
  evaluate->add_option("--genotype", genotype_path, "genotype.json (default <out>/search/genotype.json)");
  auto* analyze = app.add_subcommand("analyze", "Correlations, efficiency curves, fits and dot files from a store");
  analyze->add_option("--store", store_path, "Record store (default <out>/store.jsonl)");
  auto* ingest = app.add_subcommand("ingest", "Import external accuracy tables into a store");
  ingest->add_option("--input", input_path, "Table to import")->required();
  ingest->add_option("--format", format, "Input format (csv)");
  ingest->add_option("--store", store_path, "Destination store (default <out>/store.jsonl)");
  auto* dot = app.add_subcommand("dot", "Print a genotype as Graphviz dot");
  dot->add_option("--genotype", genotype_path, "genotype.json or an encoded architecture")->required();
  for (auto* sub : {sample, study, search, evaluate}) sub->callback([] {});

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Run run;
    run.log = &out;
    run.force_mixed = force_mixed;
    const bool needs_manifest = !analyze->parsed() && !ingest->parsed() && !dot->parsed();
    const bool have_manifest = !manifest_path.empty();
    if (needs_manifest && !have_manifest) {
      err << "error: --manifest is required for this command\n";
      return kUsage;
    }
    if (have_manifest) run.manifest = load_manifest(manifest_path);
    if (seed) {
      run.manifest.seed = *seed;
      run.manifest.search.seed = *seed;
    }
    if (!out_dir.empty()) run.manifest.output_dir = out_dir;
    run.out = run.manifest.output_dir;
    run.stamp = {have_manifest ? manifest_hash(run.manifest) : std::string(), run.manifest.seed};
    if (have_manifest) write_json(run.out / "manifest.json", with_stamp(manifest_to_json(run.manifest), run.stamp));

    if (sample->parsed()) return cmd_sample(run);
    if (study->parsed()) return cmd_study(run);
    if (search->parsed()) return cmd_search(run);
    if (evaluate->parsed()) {
      return cmd_evaluate(run, genotype_path.empty() ? run.out / "search" / "genotype.json" : fs::path(genotype_path));
    }
    if (analyze->parsed()) {
      return cmd_analyze(run, store_path.empty() ? run.out / "store.jsonl" : fs::path(store_path), have_manifest);
    }
    if (ingest->parsed()) {
      return cmd_ingest(run, input_path, format, store_path.empty() ? run.out / "store.jsonl" : fs::path(store_path));
    }
    if (dot->parsed()) return cmd_dot(run, genotype_path, !out_dir.empty(), out);
  } catch (const LabelAccessDenied& e) {
    err << "error: label access denied: " << e.what() << "\n";
    return kLabelsDenied;
  } catch (const MixedManifestError& e) {
    err << "error: " << e.what() << "\n";
    return kMixedManifests;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace unnas::cli
