#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evocell/search.hpp"
#include "evocell/serialize.hpp"

namespace evocell {

namespace fs = std::filesystem;

// Shortest round-trip decimal form; identical bytes across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_hash(std::uint64_t h) {
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf, 16);
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Run configuration document.

inline constexpr int kConfigSchemaVersion = 1;

struct TaskSpec {
  int train_strings = 500;
  int test_strings = 100;
  int n_min = 1;
  int n_max = 10;
};

struct RunConfig {
  SearchConfig search;
  TaskSpec task;
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
  }
}

template <class T>
void read_field(const nlohmann::json& obj, const char* key, T& into) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

inline void read_optional(const nlohmann::json& obj, const char* key, std::optional<double>& into) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    into = std::nullopt;
    return;
  }
  try {
    into = obj.at(key).get<double>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace detail

// Strict parse: every recognized section may be omitted (defaults apply) but
// unknown keys anywhere are errors, catching typos before a long run.
inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  detail::check_keys(doc, {"schema_version", "rng_seed", "task", "model", "search"}, "config");
  if (doc.value("schema_version", -1) != kConfigSchemaVersion)
    throw ConfigError("unsupported or missing schema_version");

  RunConfig cfg;
  std::uint64_t seed = cfg.search.rng_seed;
  detail::read_field(doc, "rng_seed", seed);
  cfg.search.rng_seed = seed;

  if (doc.contains("task")) {
    const auto& t = doc.at("task");
    detail::check_keys(t, {"train_strings", "test_strings", "n_min", "n_max"}, "task");
    detail::read_field(t, "train_strings", cfg.task.train_strings);
    detail::read_field(t, "test_strings", cfg.task.test_strings);
    detail::read_field(t, "n_min", cfg.task.n_min);
    detail::read_field(t, "n_max", cfg.task.n_max);
  }
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    detail::check_keys(m, {"hidden_dim", "learning_rate", "clip_norm", "leaky_relu_slope"}, "model");
    detail::read_field(m, "hidden_dim", cfg.search.hidden_dim);
    detail::read_field(m, "learning_rate", cfg.search.learning_rate);
    detail::read_optional(m, "clip_norm", cfg.search.clip_norm);
    detail::read_field(m, "leaky_relu_slope", cfg.search.leaky_slope);
  }
  if (doc.contains("search")) {
    const auto& s = doc.at("search");
    detail::check_keys(s,
                       {"population_size", "offspring_per_generation", "max_parents", "max_transforms",
                        "generations", "seeds", "penalty_loss", "full_epochs", "reduced_epochs",
                        "divergence_threshold", "objectives", "workers"},
                       "search");
    detail::read_field(s, "population_size", cfg.search.population_size);
    detail::read_field(s, "offspring_per_generation", cfg.search.offspring_per_generation);
    detail::read_field(s, "max_parents", cfg.search.max_parents);
    detail::read_field(s, "max_transforms", cfg.search.max_transforms);
    detail::read_field(s, "generations", cfg.search.generations);
    detail::read_field(s, "seeds", cfg.search.seeds);
    detail::read_optional(s, "penalty_loss", cfg.search.penalty_loss);
    detail::read_field(s, "full_epochs", cfg.search.budget.full_epochs);
    detail::read_field(s, "reduced_epochs", cfg.search.budget.reduced_epochs);
    detail::read_field(s, "divergence_threshold", cfg.search.budget.divergence_threshold);
    detail::read_field(s, "objectives", cfg.search.objectives);
    detail::read_field(s, "workers", cfg.search.workers);
  }

  cfg.search.check();
  if (cfg.task.train_strings < 1 || cfg.task.test_strings < 1)
    throw ConfigError("task needs at least one train and one test string");
  if (cfg.task.n_min < 1 || cfg.task.n_max < cfg.task.n_min) throw ConfigError("bad task n range");
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_text_file(path)); }

// Canonical snapshot of the effective configuration, defaults included.
inline std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json doc;
  doc["schema_version"] = kConfigSchemaVersion;
  doc["rng_seed"] = cfg.search.rng_seed;
  doc["task"] = {{"train_strings", cfg.task.train_strings},
                 {"test_strings", cfg.task.test_strings},
                 {"n_min", cfg.task.n_min},
                 {"n_max", cfg.task.n_max}};
  doc["model"] = {{"hidden_dim", cfg.search.hidden_dim},
                  {"learning_rate", cfg.search.learning_rate},
                  {"clip_norm", cfg.search.clip_norm ? nlohmann::json(*cfg.search.clip_norm) : nlohmann::json()},
                  {"leaky_relu_slope", cfg.search.leaky_slope}};
  doc["search"] = {{"population_size", cfg.search.population_size},
                   {"offspring_per_generation", cfg.search.offspring_per_generation},
                   {"max_parents", cfg.search.max_parents},
                   {"max_transforms", cfg.search.max_transforms},
                   {"generations", cfg.search.generations},
                   {"seeds", cfg.search.seeds},
                   {"penalty_loss",
                    cfg.search.penalty_loss ? nlohmann::json(*cfg.search.penalty_loss) : nlohmann::json()},
                   {"full_epochs", cfg.search.budget.full_epochs},
                   {"reduced_epochs", cfg.search.budget.reduced_epochs},
                   {"divergence_threshold", cfg.search.budget.divergence_threshold},
                   {"objectives", cfg.search.objectives},
                   {"workers", cfg.search.workers}};
  return doc.dump(2) + "\n";
}

// Dataset strings, then prediction cuts, all from one stream derived from the
// run seed; reruns see identical data.
inline TaskData make_task_data(const TaskSpec& spec, std::uint64_t rng_seed) {
  RandomSource rng = RandomSource(rng_seed).derive("dataset");
  auto train = generate_anbncn(spec.train_strings, spec.n_min, spec.n_max, rng);
  auto test = generate_anbncn(spec.test_strings, spec.n_min, spec.n_max, rng);
  return build_task_data(train, test, rng);
}

// ---------------------------------------------------------------------------
// Morphism record JSON.

inline nlohmann::json to_json(const TransformRecord& rec) {
  nlohmann::json j;
  j["kind"] = to_string(rec.kind);
  j["applied"] = rec.applied;
  if (!rec.applied) return j;
  if (rec.created != 0) j["created"] = rec.created;
  if (rec.target != 0) j["target"] = rec.target;
  if (rec.other != 0) j["other"] = rec.other;
  if (rec.slot >= 0) j["slot"] = rec.slot;
  if (rec.kind == TransformKind::AddUnit || rec.kind == TransformKind::ChangeActivation)
    j["activation"] = to_string(rec.activation);
  if (rec.kind == TransformKind::ChangeCombination) j["combination"] = to_string(rec.combination);
  return j;
}

inline TransformRecord transform_record_from_json(const nlohmann::json& j) {
  TransformRecord rec;
  auto kind = parse_transform_kind(j.at("kind").get<std::string>());
  if (!kind) throw ParseError("unknown transform kind in record");
  rec.kind = *kind;
  rec.applied = j.at("applied").get<bool>();
  rec.created = j.value("created", 0u);
  rec.target = j.value("target", 0u);
  rec.other = j.value("other", 0u);
  rec.slot = j.value("slot", -1);
  if (j.contains("activation")) {
    auto fn = parse_activation(j.at("activation").get<std::string>());
    if (!fn) throw ParseError("unknown activation in record");
    rec.activation = *fn;
  }
  if (j.contains("combination")) {
    auto fn = parse_combination(j.at("combination").get<std::string>());
    if (!fn) throw ParseError("unknown combination in record");
    rec.combination = *fn;
  }
  return rec;
}

inline nlohmann::json to_json(const ArchiveEntry& e) {
  nlohmann::json j;
  j["identifier"] = e.identifier;
  j["parent"] = e.parent ? nlohmann::json(*e.parent) : nlohmann::json();
  j["test_loss"] = e.test_loss;
  j["block_count"] = e.block_count;
  j["param_count"] = e.param_count;
  j["structural_hash"] = format_hash(e.structural_hash);
  j["generation"] = e.generation;
  j["trained_epochs"] = e.trained_epochs;
  j["diverged"] = e.diverged;
  j["cache_hit"] = e.cache_hit;
  j["compile_failed"] = e.compile_failed;
  j["initial_loss"] = e.initial_loss ? nlohmann::json(*e.initial_loss) : nlohmann::json();
  j["raw_loss"] = e.raw_loss ? nlohmann::json(*e.raw_loss) : nlohmann::json();
  if (e.lineage) {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : e.lineage->transforms) ts.push_back(to_json(t));
    j["transforms"] = std::move(ts);
  } else {
    j["transforms"] = nlohmann::json();
  }
  return j;
}

// ---------------------------------------------------------------------------
// Parameter checkpoints: little-endian binary with shape headers.

inline void write_checkpoint(const fs::path& path, const ParamStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const char magic[8] = {'E', 'V', 'C', 'P', '0', '1', '\n', '\0'};
  out.write(magic, sizeof(magic));
  std::uint32_t n = static_cast<std::uint32_t>(store.entries.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& [id, e] : store.entries) {
    std::uint32_t bid = id;
    std::uint32_t rows = static_cast<std::uint32_t>(e.W.rows());
    std::uint32_t cols = static_cast<std::uint32_t>(e.W.cols());
    std::uint8_t has_bias = e.b ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&bid), sizeof(bid));
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(&has_bias), sizeof(has_bias));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double v = e.W(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    if (e.b)
      for (std::uint32_t r = 0; r < rows; ++r) {
        double v = (*e.b)(r);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  if (!out) throw IoError("short write to " + path.string());
}

inline ParamStore read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (std::string(magic, 6) != "EVCP01") throw ParseError(path.string() + " is not a parameter checkpoint");
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  ParamStore store;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t bid = 0, rows = 0, cols = 0;
    std::uint8_t has_bias = 0;
    in.read(reinterpret_cast<char*>(&bid), sizeof(bid));
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    in.read(reinterpret_cast<char*>(&has_bias), sizeof(has_bias));
    if (!in) throw ParseError("truncated checkpoint " + path.string());
    ParamEntry e;
    e.W = Mat::Zero(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        e.W(r, c) = v;
      }
    if (has_bias) {
      Vec b = Vec::Zero(rows);
      for (std::uint32_t r = 0; r < rows; ++r) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        b(r) = v;
      }
      e.b = std::move(b);
    }
    if (!in) throw ParseError("truncated checkpoint " + path.string());
    store.entries.emplace(bid, std::move(e));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Generation chart: mean loss and mean block count per generation.

inline std::string stats_svg(const std::vector<GenerationStats>& stats) {
  const int w = 720, h = 380, ml = 60, mr = 60, mt = 30, mb = 40;
  const double px = static_cast<double>(w - ml - mr);
  const double py = static_cast<double>(h - mt - mb);
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (stats.size() >= 2) {
    double max_loss = 0, max_blocks = 0;
    for (const auto& s : stats) {
      max_loss = std::max(max_loss, s.mean_loss);
      max_blocks = std::max(max_blocks, s.mean_block_count);
    }
    if (max_loss <= 0) max_loss = 1;
    if (max_blocks <= 0) max_blocks = 1;
    auto xpos = [&](std::size_t i) {
      return ml + px * static_cast<double>(i) / static_cast<double>(stats.size() - 1);
    };
    auto line = [&](auto value_of, double maxv, const char* color) {
      std::string pts;
      for (std::size_t i = 0; i < stats.size(); ++i) {
        double y = mt + py * (1.0 - value_of(stats[i]) / maxv);
        pts += format_double(xpos(i)) + "," + format_double(y) + " ";
      }
      return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
             "\"/>\n";
    };
    svg += line([](const GenerationStats& s) { return s.mean_loss; }, max_loss, "#c0392b");
    svg += line([](const GenerationStats& s) { return s.mean_block_count; }, max_blocks, "#2980b9");
    svg += "<text x=\"" + std::to_string(ml) + "\" y=\"18\" fill=\"#c0392b\" font-size=\"12\">mean test loss (max " +
           format_double(max_loss) + ")</text>\n";
    svg += "<text x=\"" + std::to_string(ml + 260) +
           "\" y=\"18\" fill=\"#2980b9\" font-size=\"12\">mean block count (max " + format_double(max_blocks) +
           ")</text>\n";
    svg += "<text x=\"" + std::to_string(w / 2) + "\" y=\"" + std::to_string(h - 10) +
           "\" font-size=\"12\">generation</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Run directory writer.

inline std::string stats_csv_header() {
  return "generation,mean_block_count,mean_loss,best_loss,min_block_count,front_sizes\n";
}

inline std::string stats_csv_row(const GenerationStats& s) {
  std::string fronts;
  for (std::size_t i = 0; i < s.front_sizes.size(); ++i) {
    if (i) fronts += "|";
    fronts += std::to_string(s.front_sizes[i]);
  }
  return std::to_string(s.generation) + "," + format_double(s.mean_block_count) + "," + format_double(s.mean_loss) +
         "," + format_double(s.best_loss) + "," + std::to_string(s.min_block_count) + "," + fronts + "\n";
}

// Runs a configured search and writes every artifact of the run layout:
// config snapshot (before any evaluation), stats.csv, archive.jsonl,
// pareto.csv, per-individual checkpoints and timings, and architecture
// documents plus DOT renders for the final front.
inline RunState run_search_to_directory(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "architectures");
  fs::create_directories(out_dir / "dot");
  fs::create_directories(out_dir / "checkpoints");

  write_text_file(out_dir / "config.json", run_config_to_json(cfg));

  TaskData task = make_task_data(cfg.task, cfg.search.rng_seed);

  std::ofstream archive_out(out_dir / "archive.jsonl", std::ios::binary);
  std::ofstream stats_out(out_dir / "stats.csv", std::ios::binary);
  std::ofstream timings_out(out_dir / "timings.csv", std::ios::binary);
  if (!archive_out || !stats_out || !timings_out) throw IoError("cannot open run outputs in " + out_dir.string());
  stats_out << stats_csv_header();
  timings_out << "identifier,generation,wall_ms,trained_epochs,cache_hit\n";

  RunHooks hooks;
  hooks.on_evaluated = [&](const ArchiveEntry& e, const Member& m, double wall_ms) {
    archive_out << to_json(e).dump() << "\n";
    timings_out << e.identifier << "," << e.generation << "," << format_double(wall_ms) << "," << e.trained_epochs
                << "," << (e.cache_hit ? 1 : 0) << "\n";
    if (!e.compile_failed) write_checkpoint(out_dir / "checkpoints" / (e.identifier + ".bin"), m.params);
  };
  hooks.on_generation = [&](const RunState&, const GenerationStats& s) {
    stats_out << stats_csv_row(s);
    stats_out.flush();
  };

  RunState st = run_search(cfg.search, task, hooks);
  archive_out.close();
  stats_out.close();
  timings_out.close();

  auto front = pareto_front(st.population);
  std::string pareto = "identifier,test_loss,block_count,param_count\n";
  for (const Member* m : front) {
    const ArchiveEntry* e = st.archive.find(m->ind.identifier);
    pareto += m->ind.identifier + "," + format_double(m->ind.objectives[0]) + "," +
              std::to_string(static_cast<int>(m->ind.objectives[1])) + "," +
              std::to_string(e ? e->param_count : 0) + "\n";
    write_text_file(out_dir / "architectures" / (m->ind.identifier + ".json"), serialize(m->arch));
    write_text_file(out_dir / "dot" / (m->ind.identifier + ".dot"), to_dot(m->arch));
  }
  // Front members must be mutually nondominated; a violation here is a bug.
  for (const Member* a : front)
    for (const Member* b : front)
      if (a != b && dominates(a->ind.objectives, b->ind.objectives))
        throw ValidationError("pareto front member " + a->ind.identifier + " dominates " + b->ind.identifier);
  write_text_file(out_dir / "pareto.csv", pareto);
  write_text_file(out_dir / "chart.svg", stats_svg(st.stats));
  return st;
}

// ---------------------------------------------------------------------------
// CLI command bodies. These throw on failure; the CLI maps that to exit codes.

inline void cmd_search(const fs::path& config_path, const fs::path& out_dir,
                       std::optional<std::uint64_t> seed_override, std::ostream& log) {
  RunConfig cfg = load_run_config(config_path);  // before any directory is created
  if (seed_override) cfg.search.rng_seed = *seed_override;
  RunState st = run_search_to_directory(cfg, out_dir);
  log << "run complete: " << st.archive.size() << " evaluations, "
      << pareto_front(st.population).size() << " front members, outputs in " << out_dir.string() << "\n";
}

inline void cmd_render(const fs::path& arch_path, const fs::path& dot_out) {
  Architecture a = deserialize(read_text_file(arch_path));
  write_text_file(dot_out, to_dot(a));
}

inline void cmd_dataset(int count, int n_min, int n_max, std::uint64_t seed, const fs::path& out_dir) {
  RandomSource rng = RandomSource(seed).derive("dataset");
  auto strings = generate_anbncn(count, n_min, n_max, rng);
  fs::create_directories(out_dir);
  std::string text;
  for (const auto& s : strings) text += s + "\n";
  write_text_file(out_dir / "strings.txt", text);
  nlohmann::json manifest = {{"seed", seed}, {"count", count}, {"n_min", n_min}, {"n_max", n_max}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// Trains and scores the three seed cells on the configured task; a reference
// point for any search run with the same config.
inline void cmd_baselines(const fs::path& config_path, bool csv, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  TaskData task = make_task_data(cfg.task, cfg.search.rng_seed);
  if (csv) out << "identifier,test_loss,block_count,param_count,epochs\n";
  for (const auto& name : known_seed_names()) {
    Architecture arch = encode_seed(name);
    FitnessOutcome fo = evaluate_fitness(arch, task, cfg.search);
    std::string loss = fo.raw_loss ? format_double(*fo.raw_loss) : "diverged";
    if (csv) {
      out << arch.identifier << "," << loss << "," << arch.size() << "," << fo.param_count << "," << fo.epochs
          << "\n";
    } else {
      out << arch.identifier << ": test_loss=" << loss << " blocks=" << arch.size()
          << " params=" << fo.param_count << " epochs=" << fo.epochs << "\n";
    }
  }
}

}  // namespace evocell
