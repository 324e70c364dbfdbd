#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "recat/classifier.hpp"
#include "recat/corpus.hpp"
#include "recat/detail/csv.hpp"
#include "recat/detail/format.hpp"
#include "recat/detail/hash.hpp"
#include "recat/error.hpp"
#include "recat/evaluate.hpp"
#include "recat/remap.hpp"
#include "recat/svg.hpp"
#include "recat/taxonomy.hpp"
#include "recat/weaklabel.hpp"

namespace recat::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

/// Input-file keys. The first group is mandatory.
inline const std::vector<std::string>& required_inputs() {
  static const std::vector<std::string> v = {"catalog", "correspondence", "publications", "grants",
                                             "journals", "clusters", "baseline"};
  return v;
}

inline const std::vector<std::string>& optional_inputs() {
  static const std::vector<std::string> v = {"stem_hass", "new_codes", "contributed", "queries", "overrides"};
  return v;
}

inline const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> v = {
      "seed",        "filter_threshold", "drop_unfiltered", "min_support",   "shaping", "shaping_cap_percentile",
      "shaping_floor", "max_n",          "min_df",          "lambda",        "epochs",  "eta0",
      "threshold",   "threads",          "cv_folds",        "journal_top_k", "journal_since_year"};
  return v;
}

struct PipelineConfig {
  fs::path source;                          // the config file
  std::map<std::string, std::string> raw;   // effective key=value pairs
  std::map<std::string, fs::path> inputs;   // resolved input paths

  std::uint64_t seed = 0;
  double filter_threshold = 0.01;
  bool drop_unfiltered = false;
  std::size_t min_support = 5;
  ShapingPolicy shaping;
  FeatureConfig features;
  TrainerConfig trainer;
  std::size_t cv_folds = 3;
  std::size_t journal_top_k = 3;
  int journal_since_year = 0;

  bool has_input(const std::string& key) const { return inputs.count(key) != 0; }

  const fs::path& input(const std::string& key) const {
    auto it = inputs.find(key);
    if (it == inputs.end()) throw Error(Errc::ConfigInvalid, "config has no '" + key + "' path");
    return it->second;
  }

  /// Sorted key=value lines; thread count is excluded since it never
  /// changes results.
  std::string canonical_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : raw) {
      if (k != "threads") os << k << '=' << v << '\n';
    }
    return os.str();
  }

  std::string hash() const { return detail::sha256_hex(canonical_text()); }
  std::string short_hash() const { return hash().substr(0, 12); }
};

namespace detail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  std::from_chars_result r;
  if constexpr (std::is_floating_point_v<T>) {
    r = std::from_chars(value.data(), end, out);
  } else {
    r = std::from_chars(value.data(), end, out, 10);
  }
  if (r.ec != std::errc() || r.ptr != end) {
    throw Error(Errc::ConfigInvalid, "'" + key + "' must be a number, got '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  auto v = recat::detail::lower_ascii(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(Errc::ConfigInvalid, "'" + key + "' must be true or false, got '" + value + "'");
}

}  // namespace detail

/// Parses a flat key=value config. `#` starts a comment line. Relative
/// paths resolve against `base_dir`.
inline PipelineConfig parse_config(std::string_view text, const fs::path& base_dir,
                                   std::optional<std::uint64_t> seed_override = std::nullopt) {
  PipelineConfig cfg;
  std::set<std::string> known;
  for (const auto* list : {&required_inputs(), &optional_inputs(), &setting_keys()}) known.insert(list->begin(), list->end());

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto t = recat::detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(Errc::ConfigInvalid, "line " + std::to_string(n) + ": expected key = value");
    auto key = recat::detail::trim(t.substr(0, eq));
    auto value = recat::detail::trim(t.substr(eq + 1));
    if (!known.count(key)) throw Error(Errc::ConfigInvalid, "line " + std::to_string(n) + ": unknown key '" + key + "'");
    if (!cfg.raw.emplace(key, value).second) {
      throw Error(Errc::ConfigInvalid, "line " + std::to_string(n) + ": '" + key + "' set twice");
    }
  }
  if (seed_override) cfg.raw["seed"] = std::to_string(*seed_override);
  if (!cfg.raw.count("seed")) {
    throw Error(Errc::ConfigInvalid, "'seed' is mandatory; add e.g. 'seed = 1' to the config or pass --seed");
  }

  for (const auto& key : required_inputs()) {
    if (!cfg.raw.count(key) || cfg.raw[key].empty()) throw Error(Errc::ConfigInvalid, "missing input path '" + key + "'");
  }
  for (const auto* list : {&required_inputs(), &optional_inputs()}) {
    for (const auto& key : *list) {
      auto it = cfg.raw.find(key);
      if (it == cfg.raw.end() || it->second.empty()) continue;
      fs::path p(it->second);
      if (p.is_relative()) p = base_dir / p;
      if (!fs::is_regular_file(p)) throw Error(Errc::ConfigInvalid, "'" + key + "' points to missing file " + p.string());
      cfg.inputs[key] = p.lexically_normal();
    }
  }

  auto get = [&](const char* key) -> const std::string* {
    auto it = cfg.raw.find(key);
    return it == cfg.raw.end() ? nullptr : &it->second;
  };
  using detail::parse_number;
  cfg.seed = parse_number<std::uint64_t>("seed", *get("seed"));
  if (auto v = get("filter_threshold")) cfg.filter_threshold = parse_number<double>("filter_threshold", *v);
  if (auto v = get("drop_unfiltered")) cfg.drop_unfiltered = detail::parse_bool("drop_unfiltered", *v);
  if (auto v = get("min_support")) cfg.min_support = parse_number<std::size_t>("min_support", *v);
  if (auto v = get("shaping")) {
    try {
      cfg.shaping.mode = parse_shaping_mode(*v);
    } catch (const Error& e) {
      throw Error(Errc::ConfigInvalid, e.what());
    }
  }
  if (auto v = get("shaping_cap_percentile")) cfg.shaping.cap_percentile = parse_number<double>("shaping_cap_percentile", *v);
  if (auto v = get("shaping_floor")) cfg.shaping.floor = parse_number<std::size_t>("shaping_floor", *v);
  if (auto v = get("max_n")) cfg.features.max_n = parse_number<int>("max_n", *v);
  if (auto v = get("min_df")) cfg.features.min_df = parse_number<int>("min_df", *v);
  if (auto v = get("lambda")) cfg.trainer.lambda = parse_number<double>("lambda", *v);
  if (auto v = get("epochs")) cfg.trainer.epochs = parse_number<int>("epochs", *v);
  if (auto v = get("eta0")) cfg.trainer.eta0 = parse_number<double>("eta0", *v);
  if (auto v = get("threshold")) cfg.trainer.threshold = parse_number<double>("threshold", *v);
  if (auto v = get("threads")) cfg.trainer.threads = parse_number<unsigned>("threads", *v);
  if (auto v = get("cv_folds")) cfg.cv_folds = parse_number<std::size_t>("cv_folds", *v);
  if (auto v = get("journal_top_k")) cfg.journal_top_k = parse_number<std::size_t>("journal_top_k", *v);
  if (auto v = get("journal_since_year")) cfg.journal_since_year = parse_number<int>("journal_since_year", *v);

  if (!(cfg.filter_threshold >= 0 && cfg.filter_threshold < 1)) {
    throw Error(Errc::ConfigInvalid, "filter_threshold must lie in [0, 1)");
  }
  if (cfg.min_support == 0) throw Error(Errc::ConfigInvalid, "min_support must be at least 1");
  if (!(cfg.shaping.cap_percentile > 0 && cfg.shaping.cap_percentile <= 1)) {
    throw Error(Errc::ConfigInvalid, "shaping_cap_percentile must lie in (0, 1]");
  }
  if (cfg.features.max_n < 1 || cfg.features.min_df < 1) throw Error(Errc::ConfigInvalid, "max_n and min_df must be >= 1");
  if (cfg.cv_folds < 2) throw Error(Errc::ConfigInvalid, "cv_folds must be at least 2");
  if (cfg.journal_top_k == 0) throw Error(Errc::ConfigInvalid, "journal_top_k must be at least 1");
  try {
    cfg.trainer.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigInvalid, e.what());
  }

  // Every random stream hangs off the one configured seed.
  cfg.shaping.seed = recat::detail::derive_seed(cfg.seed, "shaping");
  cfg.trainer.seed = recat::detail::derive_seed(cfg.seed, "train");
  return cfg;
}

inline PipelineConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override = std::nullopt) {
  if (!fs::is_regular_file(path)) throw Error(Errc::ConfigInvalid, "config file " + path.string() + " not found");
  auto cfg = parse_config(recat::detail::read_file(path), fs::absolute(path).parent_path(), seed_override);
  cfg.source = path;
  return cfg;
}

// ---------------------------------------------------------------------------
// Manifest

/// Append-only record of a run directory. Holds no timestamps so that two
/// runs of the same config over the same inputs produce the same text.
class Manifest {
 public:
  struct Stage {
    std::string name;
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, sha256
  };

  static Manifest parse(std::string_view text) {
    Manifest m;
    std::istringstream in{std::string(text)};
    std::string line;
    Stage* open = nullptr;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tag, a, b;
      ls >> tag >> a >> b;
      auto bad = [&] { return Error(Errc::MalformedRecord, "manifest line " + std::to_string(n) + ": '" + line + "'"); };
      if (tag == "recat-manifest") {
        if (a != "1") throw bad();
      } else if (tag == "config_hash") {
        m.config_hash = a;
      } else if (tag == "seed") {
        m.seed = a;
      } else if (tag == "input") {
        m.inputs.emplace_back(a, b);
      } else if (tag == "stage") {
        m.pending_.push_back({a, {}, {}});
        open = &m.pending_.back();
      } else if (tag == "param" && open) {
        open->params.emplace_back(a, b);
      } else if (tag == "artifact" && open) {
        open->artifacts.emplace_back(a, b);
      } else if (tag == "end" && open && open->name == a) {
        m.stages.push_back(*open);
        open = nullptr;
      } else {
        throw bad();
      }
    }
    m.pending_.clear();
    return m;
  }

  std::string header_text() const {
    std::ostringstream os;
    os << "recat-manifest 1\n" << "config_hash " << config_hash << '\n' << "seed " << seed << '\n';
    for (const auto& [k, h] : inputs) os << "input " << k << ' ' << h << '\n';
    return os.str();
  }

  static std::string stage_text(const Stage& s) {
    std::ostringstream os;
    os << "stage " << s.name << '\n';
    for (const auto& [k, v] : s.params) os << "param " << k << ' ' << v << '\n';
    for (const auto& [p, h] : s.artifacts) os << "artifact " << p << ' ' << h << '\n';
    os << "end " << s.name << '\n';
    return os.str();
  }

  const Stage* find(std::string_view name) const {
    for (const auto& s : stages) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  std::string config_hash;
  std::string seed;
  std::vector<std::pair<std::string, std::string>> inputs;  // key, sha256
  std::vector<Stage> stages;

 private:
  std::vector<Stage> pending_;
};

// ---------------------------------------------------------------------------
// Run directory

/// Exclusive `.lock` file held for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw Error(Errc::RunLocked, "run directory is locked by " + path_.string() +
                                       "; remove it if no other recat process is running");
    }
    std::fclose(f);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

inline fs::path runs_root() {
  if (const char* env = std::getenv("RECAT_RUNS_ROOT"); env && *env) return env;
  return fs::current_path() / "runs";
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

class RunDir {
 public:
  /// Opens (or, for the first stage, creates) the run directory. Without an
  /// explicit path a new directory is made under the runs root, or the
  /// latest one belonging to this config is reused.
  static RunDir open(const PipelineConfig& cfg, const std::optional<fs::path>& explicit_dir, bool create) {
    fs::path dir;
    if (explicit_dir) {
      dir = *explicit_dir;
    } else if (create) {
      auto root = runs_root();
      auto base = utc_timestamp();
      dir = root / (base + "-" + cfg.short_hash());
      for (int i = 2; fs::exists(dir); ++i) dir = root / (base + "_" + std::to_string(i) + "-" + cfg.short_hash());
    } else {
      dir = latest_for(cfg);
    }
    RunDir run;
    run.dir_ = dir;
    run.hash_ = cfg.hash();
    const auto manifest_path = dir / "manifest.txt";
    if (fs::exists(manifest_path)) {
      run.manifest_ = Manifest::parse(recat::detail::read_file(manifest_path));
      if (run.manifest_.config_hash != run.hash_) {
        throw Error(Errc::ConfigInvalid, "run directory " + dir.string() + " was created with a different config (hash " +
                                             run.manifest_.config_hash.substr(0, 12) + ")");
      }
      run.check_inputs(cfg);
    } else if (!create) {
      throw Error(Errc::MissingPriorStage, "run directory " + dir.string() + " has no manifest; run 'recat ingest' first");
    } else {
      fs::create_directories(dir);
      run.manifest_.config_hash = run.hash_;
      run.manifest_.seed = std::to_string(cfg.seed);
      for (const auto& [key, path] : cfg.inputs) run.manifest_.inputs.emplace_back(key, recat::detail::sha256_file(path));
      recat::detail::write_file(manifest_path, run.manifest_.header_text());
    }
    return run;
  }

  static fs::path latest_for(const PipelineConfig& cfg) {
    auto root = runs_root();
    const std::string suffix = "-" + cfg.short_hash();
    std::optional<fs::path> best;
    if (fs::is_directory(root)) {
      for (const auto& e : fs::directory_iterator(root)) {
        auto name = e.path().filename().string();
        if (!e.is_directory() || name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
        if (!fs::exists(e.path() / "manifest.txt")) continue;
        if (!best || name > best->filename().string()) best = e.path();
      }
    }
    if (!best) {
      throw Error(Errc::MissingPriorStage, "no run directory for this config under " + root.string() +
                                               "; run 'recat ingest' first or pass --run-dir");
    }
    return *best;
  }

  const fs::path& path() const noexcept { return dir_; }
  const Manifest& manifest() const noexcept { return manifest_; }
  bool done(std::string_view stage) const { return manifest_.find(stage) != nullptr; }

  void require(std::string_view stage, std::string_view for_stage) const {
    if (!done(stage)) {
      throw Error(Errc::MissingPriorStage, std::string(for_stage) + " needs the " + std::string(stage) +
                                               " stage; run 'recat " + std::string(stage) + "' first");
    }
  }

  void require_not_done(std::string_view stage) const {
    if (done(stage)) {
      throw Error(Errc::StageComplete, "stage " + std::string(stage) + " already completed in " + dir_.string() +
                                           "; start a new run directory to redo it");
    }
  }

  /// Records a completed stage with the checksums of its artifacts.
  void complete(const std::string& stage, const std::vector<std::string>& artifacts,
                std::vector<std::pair<std::string, std::string>> params = {}) {
    Manifest::Stage s{stage, std::move(params), {}};
    auto sorted = artifacts;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& a : sorted) s.artifacts.emplace_back(a, recat::detail::sha256_file(dir_ / a));
    std::ofstream out(dir_ / "manifest.txt", std::ios::app | std::ios::binary);
    out << Manifest::stage_text(s);
    if (!out) throw Error(Errc::Io, "cannot append to " + (dir_ / "manifest.txt").string());
    manifest_.stages.push_back(std::move(s));
  }

  /// Writes `content` to a run-relative path and returns that path.
  std::string write(const std::string& rel, std::string_view content) const {
    recat::detail::write_file(dir_ / rel, content);
    return rel;
  }

 private:
  void check_inputs(const PipelineConfig& cfg) const {
    std::map<std::string, std::string> recorded(manifest_.inputs.begin(), manifest_.inputs.end());
    for (const auto& [key, path] : cfg.inputs) {
      auto it = recorded.find(key);
      if (it == recorded.end() || it->second != recat::detail::sha256_file(path)) {
        throw Error(Errc::ConfigInvalid, "input '" + key + "' (" + path.string() + ") changed since this run was started");
      }
    }
  }

  fs::path dir_;
  std::string hash_;
  Manifest manifest_;
};

// ---------------------------------------------------------------------------
// Stages

using Logger = std::function<void(const std::string&)>;

inline Logger stderr_logger() {
  return [](const std::string& msg) { std::cerr << "recat: " << msg << '\n'; };
}

struct Context {
  PipelineConfig config;
  RunDir run;
  Logger log = stderr_logger();

  void flush(const std::string& stage, const Diagnostics& diag) const {
    for (const auto& w : diag.warnings) log(stage + ": warning: " + w);
  }
};

namespace detail {

inline std::string labels_text(const std::vector<LabeledExample>& labels) {
  std::ostringstream os;
  write_labels(labels, os);
  return os.str();
}

inline CorpusStore load_store(const RunDir& run) { return CorpusStore::open(run.path() / "ingest/store.jsonl"); }

inline SchemeCatalog load_full_catalog(const PipelineConfig& cfg) {
  auto catalog = load_catalog(cfg.input("catalog"));
  if (cfg.has_input("stem_hass")) load_stem_hass(catalog, cfg.input("stem_hass"));
  return catalog;
}

inline CorrespondenceTable load_table(const PipelineConfig& cfg) {
  auto table = load_correspondence(cfg.input("correspondence"));
  if (cfg.has_input("new_codes")) load_new_codes(table, cfg.input("new_codes"));
  return table;
}

inline std::string count_summary(const std::vector<LabeledExample>& labels) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& ex : labels) {
    ++counts[{std::string(provenance_name(ex.provenance)), std::string(filter_status_name(ex.filtered))}];
  }
  std::ostringstream os;
  os << "provenance,filtered,count\n";
  for (const auto& [k, n] : counts) os << k.first << ',' << k.second << ',' << n << '\n';
  return os.str();
}

/// Labels usable for 2020 training: 4-digit 2020 codes, not rejected.
inline std::vector<LabeledExample> trainable(const std::vector<LabeledExample>& labels) {
  std::vector<LabeledExample> out;
  for (const auto& ex : labels) {
    if (ex.code.scheme() == Scheme::FoR2020 && ex.code.level() == Level::Group && ex.filtered != FilterStatus::Rejected) {
      out.push_back(ex);
    }
  }
  return out;
}

inline TrainingSet rebuild_training_set(const Context& ctx, Diagnostics* diag) {
  auto store = load_store(ctx.run);
  auto labels = trainable(read_labels(ctx.run.path() / "remap/labels_2020.jsonl"));
  return shape_dataset(labels, store, ctx.config.shaping, ctx.config.features, diag);
}

inline features::SparseVector vectorize_text(const Model& model, const std::string& title, const std::string& abstract) {
  return features::vectorize(features::document_tokens(title, abstract), model.vocabulary);
}

}  // namespace detail

/// Loads the corpus into the run's store log and reports what it found.
inline void stage_ingest(Context& ctx) {
  auto& run = ctx.run;
  run.require_not_done("ingest");
  const auto& cfg = ctx.config;
  Diagnostics diag;
  // Parse the taxonomy early so a broken catalog fails before anything else.
  detail::load_full_catalog(cfg);
  detail::load_table(cfg);

  const auto log_path = run.path() / "ingest/store.jsonl";
  if (fs::exists(log_path)) fs::remove(log_path);
  CorpusStore store;
  store.attach_log(log_path);
  auto np = store.ingest_publications(cfg.input("publications"), &diag);
  auto ng = store.ingest_grants(cfg.input("grants"), &diag);
  auto nj = store.ingest_journals(cfg.input("journals"), &diag);
  auto nc = store.ingest_clusters(cfg.input("clusters"), &diag);
  auto nb = store.ingest_baseline(cfg.input("baseline"), &diag);
  ctx.log("ingest: " + std::to_string(np) + " publications, " + std::to_string(ng) + " grants, " + std::to_string(nj) +
          " journals, " + std::to_string(nc) + " cluster rows, " + std::to_string(nb) + " baseline rows");

  std::ostringstream dangling;
  dangling << "from_id,kind,ref\n";
  auto refs = store.dangling_references();
  for (const auto& r : refs) {
    recat::detail::write_csv_row(dangling, {r.from_id, r.kind, r.ref});
  }
  if (!refs.empty()) ctx.log("ingest: " + std::to_string(refs.size()) + " dangling references (see ingest/dangling.csv)");

  std::ostringstream stats;
  auto s = store.stats();
  stats << "dimension,group,count\n";
  for (const auto& [t, n] : s.by_record_type) stats << "record_type," << record_type_name(t) << ',' << n << '\n';
  for (const auto& [start, n] : s.by_period) stats << "period," << period_label(start) << ',' << n << '\n';

  ctx.flush("ingest", diag);
  run.complete("ingest", {"ingest/store.jsonl", run.write("ingest/dangling.csv", dangling.str()),
                          run.write("ingest/stats.csv", stats.str())});
}

enum class Strategy { Grants, Journals, Contributed };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Grants: return "grants";
    case Strategy::Journals: return "journals";
    case Strategy::Contributed: return "contributed";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "grants") return Strategy::Grants;
  if (s == "journals") return Strategy::Journals;
  if (s == "contributed") return Strategy::Contributed;
  throw Error(Errc::ConfigInvalid, "unknown strategy '" + std::string(s) + "' (expected grants, journals or contributed)");
}

/// Builds 2008 weak labels. With no strategies given, all applicable ones
/// run (contributed only when a contributed file is configured).
inline void stage_label(Context& ctx, std::set<Strategy> strategies = {}) {
  auto& run = ctx.run;
  run.require("ingest", "label");
  run.require_not_done("label");
  const auto& cfg = ctx.config;
  if (strategies.empty()) {
    strategies = {Strategy::Grants, Strategy::Journals};
    if (cfg.has_input("contributed")) strategies.insert(Strategy::Contributed);
  }
  if (strategies.count(Strategy::Contributed) && !cfg.has_input("contributed")) {
    throw Error(Errc::ConfigInvalid, "strategy 'contributed' needs a 'contributed' path in the config");
  }
  Diagnostics diag;
  auto store = detail::load_store(run);
  auto catalog = detail::load_full_catalog(cfg);
  auto clusters = store.publication_clusters();

  std::vector<LabeledExample> candidates;
  if (strategies.count(Strategy::Grants)) {
    auto c = propagate_grant_codes(store, &diag);
    ctx.log("label: grants produced " + std::to_string(c.size()) + " candidates");
    candidates.insert(candidates.end(), c.begin(), c.end());
  }
  if (strategies.count(Strategy::Journals)) {
    auto c = journal_title_candidates(store, catalog, Scheme::FoR2008);
    ctx.log("label: journal titles produced " + std::to_string(c.size()) + " candidates");
    candidates.insert(candidates.end(), c.begin(), c.end());
  }
  auto labels = decided_labels(filter_by_cluster(std::move(candidates), store.baseline(), clusters, cfg.filter_threshold),
                               cfg.drop_unfiltered);
  if (strategies.count(Strategy::Contributed)) {
    // Contributed rows come from curated sources and bypass the filter.
    auto c = import_contributed(cfg.input("contributed"), store, &diag);
    for (auto& ex : c) ex.filtered = FilterStatus::Accepted;
    ctx.log("label: contributed data produced " + std::to_string(c.size()) + " labels");
    labels.insert(labels.end(), c.begin(), c.end());
  }
  canonicalize(labels);

  std::string names;
  for (auto s : strategies) names += (names.empty() ? "" : ",") + std::string(strategy_name(s));
  ctx.flush("label", diag);
  run.complete("label",
               {run.write("label/labels_2008.jsonl", detail::labels_text(labels)),
                run.write("label/summary.csv", detail::count_summary(labels))},
               {{"strategies", names}});
}

/// Moves the 2008 labels onto the 2020 scheme and adds the 2020-only
/// sources: journal titles, keyword queries and curation overrides.
inline void stage_remap(Context& ctx) {
  auto& run = ctx.run;
  run.require("label", "remap");
  run.require_not_done("remap");
  const auto& cfg = ctx.config;
  Diagnostics diag;
  auto store = detail::load_store(run);
  auto catalog = detail::load_full_catalog(cfg);
  auto table = detail::load_table(cfg);
  auto clusters = store.publication_clusters();

  std::vector<LabeledExample> usable;
  for (const auto& ex : read_labels(run.path() / "label/labels_2008.jsonl")) {
    if (ex.filtered != FilterStatus::Rejected) usable.push_back(ex);
  }
  auto direct = direct_remap(usable, table);

  // Field-level evidence: grant codes of acknowledging publications plus
  // contributed 6-digit rows.
  std::vector<std::pair<std::string, ForCode>> evidence;
  for (const auto& [pid, p] : store.publications()) {
    for (const auto& gid : p.grant_ids) {
      if (const auto* g = store.find_grant(gid)) {
        for (const auto& c : g->codes_2008) evidence.emplace_back(pid, c);
      }
    }
  }
  if (cfg.has_input("contributed")) {
    for (const auto& [pid, code] : read_contributed(cfg.input("contributed"))) {
      if (code.level() == Level::Field && store.find_publication(pid)) evidence.emplace_back(pid, code);
    }
  }
  auto rules = mine_split_rules(evidence, table, clusters, cfg.min_support);
  auto split = apply_split_rules(direct.residual, rules, clusters);

  std::vector<LabeledExample> labels = direct.remapped;
  labels.insert(labels.end(), split.remapped.begin(), split.remapped.end());

  // 2020 journal titles, filtered against the remapped labels as baseline.
  BaselineLabels baseline_2020;
  for (const auto& ex : labels) {
    if (ex.filtered != FilterStatus::Rejected) baseline_2020.emplace(ex.publication_id, ex.code);
  }
  auto journal = decided_labels(
      filter_by_cluster(journal_title_candidates(store, catalog, Scheme::FoR2020), baseline_2020, clusters, cfg.filter_threshold),
      cfg.drop_unfiltered);
  labels.insert(labels.end(), journal.begin(), journal.end());

  std::size_t keyword = 0;
  if (cfg.has_input("queries")) {
    for (const auto& q : read_queries(cfg.input("queries"))) {
      auto hits = keyword_corpus(q, store);
      keyword += hits.size();
      labels.insert(labels.end(), hits.begin(), hits.end());
    }
  }
  canonicalize(labels);
  std::size_t before_overrides = labels.size();
  if (cfg.has_input("overrides")) labels = apply_overrides(std::move(labels), cfg.input("overrides"));

  auto residual_summary = summarize_residual(split.residual, table);
  ctx.log("remap: " + std::to_string(direct.remapped.size()) + " direct, " + std::to_string(split.remapped.size()) +
          " via " + std::to_string(rules.size()) + " split rules, " + std::to_string(split.residual.size()) +
          " residual (" + std::to_string(residual_summary.deleted) + " on deleted codes)");

  std::ostringstream rules_csv;
  write_rules(rules, rules_csv);
  std::ostringstream summary;
  summary << "item,count\n"
          << "input_labels," << usable.size() << '\n'
          << "direct," << direct.remapped.size() << '\n'
          << "split_rules," << rules.size() << '\n'
          << "split_remapped," << split.remapped.size() << '\n'
          << "residual," << split.residual.size() << '\n'
          << "residual_deleted," << residual_summary.deleted << '\n'
          << "journal_2020," << journal.size() << '\n'
          << "keyword_query," << keyword << '\n'
          << "override_delta," << static_cast<long long>(labels.size()) - static_cast<long long>(before_overrides) << '\n'
          << "labels_2020," << labels.size() << '\n';
  ctx.flush("remap", diag);
  run.complete("remap", {run.write("remap/rules.csv", rules_csv.str()),
                         run.write("remap/labels_2020.jsonl", detail::labels_text(labels)),
                         run.write("remap/residual.jsonl", detail::labels_text(split.residual)),
                         run.write("remap/summary.csv", summary.str())});
}

inline void stage_train(Context& ctx) {
  auto& run = ctx.run;
  run.require("remap", "train");
  run.require_not_done("train");
  Diagnostics diag;
  auto set = detail::rebuild_training_set(ctx, &diag);
  ctx.log("train: " + std::to_string(set.examples.size()) + " publications, " + std::to_string(set.class_counts.size()) +
          " classes, " + std::to_string(set.vocabulary.size()) + " features");
  auto model = train(set, ctx.config.trainer);

  std::ostringstream ts;
  ts << "publication_id,codes,weight\n";
  for (const auto& ex : set.examples) {
    std::string codes;
    for (const auto& c : ex.labels) codes += (codes.empty() ? "" : " ") + c.digits();
    recat::detail::write_csv_row(ts, {ex.publication_id, codes, recat::detail::format_double(ex.weight)});
  }
  std::ostringstream cc;
  cc << "code,count\n";
  for (const auto& [code, n] : set.class_counts) cc << code.digits() << ',' << n << '\n';

  ctx.flush("train", diag);
  run.complete("train", {run.write("train/model.tar", serialize_model(model)),
                         run.write("train/training_set.csv", ts.str()),
                         run.write("train/class_counts.csv", cc.str())});
}

inline void stage_evaluate(Context& ctx) {
  auto& run = ctx.run;
  run.require("train", "evaluate");
  run.require_not_done("evaluate");
  Diagnostics diag;
  auto set = detail::rebuild_training_set(ctx, &diag);
  auto folds = cross_validate(set, ctx.config.cv_folds, recat::detail::derive_seed(ctx.config.seed, "cv"), ctx.config.trainer);
  double acc = 0, f1 = 0;
  for (const auto& f : folds) {
    acc += f.top1_accuracy;
    f1 += f.micro_f1;
  }
  acc /= static_cast<double>(folds.size());
  f1 /= static_cast<double>(folds.size());
  ctx.log("evaluate: " + std::to_string(folds.size()) + "-fold mean top-1 accuracy " + recat::detail::format_double(acc) +
          ", micro F1 " + recat::detail::format_double(f1));
  std::ostringstream fo, cl, su;
  write_folds_csv(folds, fo);
  write_fold_classes_csv(folds, cl);
  su << "metric,value\nfolds," << folds.size() << "\nmean_top1_accuracy," << recat::detail::format_double(acc)
     << "\nmean_micro_f1," << recat::detail::format_double(f1) << '\n';
  run.complete("evaluate", {run.write("evaluate/cv_folds.csv", fo.str()), run.write("evaluate/cv_classes.csv", cl.str()),
                            run.write("evaluate/summary.csv", su.str())});
}

/// Scores every publication in a JSONL file with the trained model.
inline void stage_predict(Context& ctx, const fs::path& input) {
  auto& run = ctx.run;
  run.require("train", "predict");
  auto name = input.stem().string();
  const std::string stage = "predict:" + name;
  run.require_not_done(stage);
  if (!fs::is_regular_file(input)) throw Error(Errc::ConfigInvalid, "prediction input " + input.string() + " not found");
  auto model = load_model(run.path() / "train/model.tar");

  std::ifstream in(input);
  std::ostringstream out;
  std::string line;
  std::size_t n = 0, count = 0;
  while (std::getline(in, line)) {
    ++n;
    if (recat::detail::trim(line).empty()) continue;
    auto where = input.string() + ":" + std::to_string(n);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, where + ": " + e.what());
    }
    auto p = publication_from_json(j, where);
    auto x = vectorize_publication(model, p);
    auto ranking = predict(model, x);
    auto a = assign(model, x);
    nlohmann::json r;
    r["id"] = p.id;
    r["ranking"] = nlohmann::json::array();
    for (const auto& s : ranking) r["ranking"].push_back({{"code", s.code.digits()}, {"score", s.score}});
    r["codes_4digit"] = nlohmann::json::array();
    for (const auto& c : a.groups) r["codes_4digit"].push_back(c.digits());
    r["codes_2digit"] = nlohmann::json::array();
    for (const auto& c : a.divisions) r["codes_2digit"].push_back(c.digits());
    out << r.dump() << '\n';
    ++count;
  }
  ctx.log("predict: scored " + std::to_string(count) + " records from " + input.string());
  run.complete(stage, {run.write("predict/" + name + ".jsonl", out.str())}, {{"input_sha256", recat::detail::sha256_file(input)}});
}

enum class Report { Coverage, Distribution, Transition, JournalList };

inline std::string_view report_name(Report r) {
  switch (r) {
    case Report::Coverage: return "coverage";
    case Report::Distribution: return "distribution";
    case Report::Transition: return "transition";
    case Report::JournalList: return "journal-list";
  }
  return "?";
}

inline Report parse_report(std::string_view s) {
  for (auto r : {Report::Coverage, Report::Distribution, Report::Transition, Report::JournalList}) {
    if (report_name(r) == s) return r;
  }
  throw Error(Errc::ConfigInvalid,
              "unknown report '" + std::string(s) + "' (expected coverage, distribution, transition or journal-list)");
}

/// Old-scheme codes per object: baseline groups for publications, grant
/// codes (as groups) for grants.
inline AssignmentMap assignments_2008(const CorpusStore& store) {
  AssignmentMap out;
  for (const auto& [pid, code] : store.baseline()) {
    if (store.find_publication(pid)) out[pid].push_back(code);
  }
  for (const auto& [gid, g] : store.grants()) {
    std::set<ForCode> groups;
    for (const auto& c : g.codes_2008) groups.insert(group_of(c));
    out[gid].assign(groups.begin(), groups.end());
  }
  return out;
}

/// New-scheme codes per object from the trained model.
inline AssignmentMap assignments_2020(const Model& model, const CorpusStore& store) {
  AssignmentMap out;
  for (const auto& [pid, p] : store.publications()) out[pid] = assign(model, vectorize_publication(model, p)).groups;
  for (const auto& [gid, g] : store.grants()) {
    out[gid] = assign(model, detail::vectorize_text(model, g.title, g.abstract)).groups;
  }
  return out;
}

inline AssignmentMap publications_only(const AssignmentMap& m, const CorpusStore& store) {
  AssignmentMap out;
  for (const auto& [id, codes] : m) {
    if (store.find_publication(id)) out.emplace(id, codes);
  }
  return out;
}

inline void stage_report(Context& ctx, Report which) {
  auto& run = ctx.run;
  run.require("train", "report");
  const std::string stage = "report:" + std::string(report_name(which));
  run.require_not_done(stage);
  const auto& cfg = ctx.config;
  auto store = detail::load_store(run);
  auto catalog = detail::load_full_catalog(cfg);
  auto model = load_model(run.path() / "train/model.tar");
  auto old_map = assignments_2008(store);
  auto new_map = assignments_2020(model, store);
  std::vector<std::string> artifacts;

  switch (which) {
    case Report::Coverage: {
      for (auto g : {CoverageGrouping::ByRecordType, CoverageGrouping::ByPeriod5y}) {
        auto old_rows = coverage_report(old_map, store, g);
        auto new_rows = coverage_report(new_map, store, g);
        std::ostringstream csv;
        write_coverage_csv(old_rows, new_rows, csv);
        const std::string stem = g == CoverageGrouping::ByRecordType ? "report/coverage_by_record_type" : "report/coverage_by_period_5y";
        artifacts.push_back(run.write(stem + ".csv", csv.str()));
        if (g == CoverageGrouping::ByPeriod5y) {
          std::vector<std::string> labels;
          svg::Series s08{"FoR 2008", "#c05621", {}}, s20{"FoR 2020", "#2b6cb0", {}};
          std::map<std::string, const CoverageRow*> olds;
          for (const auto& r : old_rows) olds[r.group] = &r;
          for (const auto& r : new_rows) {
            labels.push_back(r.group.substr(0, 4));
            auto o = olds.find(r.group);
            auto pct = [](std::uint64_t c, std::uint64_t t) { return t ? 100.0 * static_cast<double>(c) / static_cast<double>(t) : 0.0; };
            s08.values.push_back(o == olds.end() ? 0.0 : pct(o->second->covered, r.total));
            s20.values.push_back(pct(r.covered, r.total));
          }
          artifacts.push_back(run.write(stem + ".svg", svg::line_chart(labels, {s08, s20}, "Coverage by 5-year period")));
        }
      }
      break;
    }
    case Report::Distribution: {
      for (auto [scheme, map] : {std::pair{std::string("2008"), publications_only(old_map, store)},
                                 std::pair{std::string("2020"), publications_only(new_map, store)}}) {
        auto rows = distribution_report(map, catalog);
        std::ostringstream csv;
        write_distribution_csv(rows, csv);
        std::vector<svg::Bar> bars;
        for (const auto& r : rows) bars.push_back({r.division.digits(), r.share()});
        artifacts.push_back(run.write("report/distribution_" + scheme + ".csv", csv.str()));
        artifacts.push_back(run.write("report/distribution_" + scheme + ".svg",
                                      svg::bar_chart(bars, "Publications by FoR " + scheme + " division")));
      }
      break;
    }
    case Report::Transition: {
      auto m = transition_matrix(publications_only(old_map, store), publications_only(new_map, store), &catalog);
      std::ostringstream csv;
      write_transition_csv(m, csv);
      artifacts.push_back(run.write("report/transition.csv", csv.str()));
      artifacts.push_back(run.write("report/transition.svg", svg::heatmap(m, "FoR 2008 to FoR 2020 divisions (%)")));
      break;
    }
    case Report::JournalList: {
      auto list = journal_list(new_map, store, cfg.journal_top_k, cfg.journal_since_year);
      std::ostringstream csv;
      write_journal_list_csv(list, store, csv);
      artifacts.push_back(run.write("report/journal_list.csv", csv.str()));
      break;
    }
  }
  ctx.log("report: wrote " + std::to_string(artifacts.size()) + " files for " + std::string(report_name(which)));
  run.complete(stage, artifacts);
}

}  // namespace recat::pipeline
