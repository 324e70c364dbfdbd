#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "recat/corpus.hpp"
#include "recat/detail/csv.hpp"
#include "recat/detail/format.hpp"
#include "recat/detail/hash.hpp"
#include "recat/detail/random.hpp"
#include "recat/detail/tar.hpp"
#include "recat/error.hpp"
#include "recat/features.hpp"
#include "recat/taxonomy.hpp"
#include "recat/weaklabel.hpp"

namespace recat {

struct FeatureConfig {
  int max_n = 2;
  int min_df = 2;
};

enum class ShapingMode { Proportional, Equal, None };

constexpr std::string_view shaping_mode_name(ShapingMode m) noexcept {
  switch (m) {
    case ShapingMode::Proportional: return "proportional";
    case ShapingMode::Equal: return "equal";
    case ShapingMode::None: return "none";
  }
  return "?";
}

inline ShapingMode parse_shaping_mode(std::string_view s) {
  if (s == "proportional") return ShapingMode::Proportional;
  if (s == "equal") return ShapingMode::Equal;
  if (s == "none") return ShapingMode::None;
  throw Error(Errc::InvalidConfig, "unknown shaping mode '" + std::string(s) + "'");
}

/// Per-class size bounds. The cap is target_share(code) x (number of
/// publications); Proportional additionally caps at the `cap_percentile`
/// class size. Classes under `floor` are up-weighted rather than grown.
struct ShapingPolicy {
  ShapingMode mode = ShapingMode::Proportional;
  double cap_percentile = 0.95;
  std::size_t floor = 0;
  std::uint64_t seed = 0;
};

/// Labels aggregated per publication, after shaping, before vectorizing.
struct ShapedLabels {
  std::map<std::string, std::set<ForCode>> labels;  // publication -> codes
  std::map<std::string, double> weights;
  std::map<ForCode, std::size_t> class_counts;
  std::map<ForCode, std::size_t> caps;
};

namespace detail {

inline std::size_t nearest_rank(std::vector<std::size_t> sizes, double p) {
  std::sort(sizes.begin(), sizes.end());
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sizes.size())));
  rank = std::clamp<std::size_t>(rank, 1, sizes.size());
  return sizes[rank - 1];
}

}  // namespace detail

/// Unions each publication's usable 2020 group labels (rejected and 2008
/// labels are skipped), then clamps class sizes per the policy. Down-sampling
/// removes whole publications, largest class first, in a seeded order.
inline ShapedLabels shape_labels(const std::vector<LabeledExample>& labels, const ShapingPolicy& policy,
                                 Diagnostics* diag = nullptr) {
  ShapedLabels s;
  for (const auto& ex : labels) {
    if (ex.code.scheme() != Scheme::FoR2020 || ex.filtered == FilterStatus::Rejected) continue;
    if (ex.code.level() != Level::Group) continue;
    s.labels[ex.publication_id].insert(ex.code);
    auto& w = s.weights[ex.publication_id];
    w = std::max(w, ex.weight);
  }
  if (s.labels.empty()) throw Error(Errc::EmptyLabelSet, "no usable 2020 group labels to train on");

  std::map<ForCode, std::vector<std::string>> members;
  for (const auto& [pid, codes] : s.labels) {
    for (const auto& c : codes) members[c].push_back(pid);
  }
  const auto total = static_cast<double>(s.labels.size());
  std::vector<std::size_t> sizes;
  for (const auto& [_, m] : members) sizes.push_back(m.size());
  const std::size_t pct_cap = detail::nearest_rank(sizes, policy.cap_percentile);

  for (const auto& [code, m] : members) {
    std::size_t cap = SIZE_MAX;
    switch (policy.mode) {
      case ShapingMode::Proportional:
        cap = std::min(m.size(), pct_cap);
        break;
      case ShapingMode::Equal:
        cap = static_cast<std::size_t>(std::floor(total / static_cast<double>(members.size())));
        break;
      case ShapingMode::None:
        break;
    }
    s.caps[code] = cap;
  }

  std::vector<ForCode> order;
  for (const auto& [code, _] : members) order.push_back(code);
  std::stable_sort(order.begin(), order.end(),
                   [&](const ForCode& a, const ForCode& b) { return members[a].size() > members[b].size(); });

  std::set<std::string> dropped;
  for (const auto& code : order) {
    std::vector<std::string> alive;
    for (const auto& pid : members[code]) {
      if (!dropped.count(pid)) alive.push_back(pid);
    }
    const auto cap = s.caps[code];
    if (alive.size() <= cap) continue;
    std::mt19937_64 rng(detail::derive_seed(policy.seed, "shape:" + code.digits()));
    detail::shuffle(alive, rng);
    for (std::size_t i = cap; i < alive.size(); ++i) dropped.insert(alive[i]);
  }
  for (const auto& pid : dropped) {
    s.labels.erase(pid);
    s.weights.erase(pid);
  }

  for (const auto& [code, _] : members) s.class_counts[code] = 0;
  for (const auto& [_, codes] : s.labels) {
    for (const auto& c : codes) ++s.class_counts[c];
  }
  for (auto it = s.class_counts.begin(); it != s.class_counts.end();) {
    if (it->second == 0) {
      warn(diag, "class " + it->first.digits() + " has no examples after shaping; excluded");
      it = s.class_counts.erase(it);
    } else {
      ++it;
    }
  }
  if (policy.floor > 0) {
    std::map<ForCode, double> factor;
    for (const auto& [code, n] : s.class_counts) {
      if (n < policy.floor) factor[code] = static_cast<double>(policy.floor) / static_cast<double>(n);
    }
    for (auto& [pid, codes] : s.labels) {
      double f = 1.0;
      for (const auto& c : codes) {
        if (auto it = factor.find(c); it != factor.end()) f = std::max(f, it->second);
      }
      s.weights[pid] *= f;
    }
  }
  if (s.labels.empty()) throw Error(Errc::EmptyLabelSet, "shaping removed every publication");
  return s;
}

struct TrainingExample {
  std::string publication_id;
  features::SparseVector x;
  std::vector<ForCode> labels;  // sorted 2020 groups, nonempty
  double weight = 1.0;
};

struct TrainingSet {
  features::Vocabulary vocabulary;
  std::vector<TrainingExample> examples;  // ordered by publication id
  std::map<ForCode, std::size_t> class_counts;
  FeatureConfig features;
  ShapingPolicy shaping;
};

inline std::vector<std::string> publication_tokens(const Publication& p) {
  return features::document_tokens(p.title, p.abstract);
}

/// Builds the vocabulary over the shaped publications and vectorizes them.
inline TrainingSet vectorize_training_set(const ShapedLabels& shaped, const CorpusStore& store, const FeatureConfig& fc) {
  TrainingSet set;
  set.features = fc;
  set.class_counts = shaped.class_counts;
  std::vector<std::vector<std::string>> docs;
  std::vector<const Publication*> pubs;
  for (const auto& [pid, _] : shaped.labels) {
    const auto* p = store.find_publication(pid);
    if (!p) throw Error(Errc::UnknownPublication, "label references unknown publication " + pid);
    pubs.push_back(p);
    docs.push_back(publication_tokens(*p));
  }
  set.vocabulary = features::build_vocabulary(docs, fc.max_n, fc.min_df);
  std::size_t i = 0;
  for (const auto& [pid, codes] : shaped.labels) {
    TrainingExample ex;
    ex.publication_id = pid;
    ex.x = features::vectorize(docs[i++], set.vocabulary);
    ex.labels.assign(codes.begin(), codes.end());
    ex.weight = shaped.weights.at(pid);
    set.examples.push_back(std::move(ex));
  }
  return set;
}

inline TrainingSet shape_dataset(const std::vector<LabeledExample>& labels, const CorpusStore& store,
                                 const ShapingPolicy& policy, const FeatureConfig& fc = {}, Diagnostics* diag = nullptr) {
  auto set = vectorize_training_set(shape_labels(labels, policy, diag), store, fc);
  set.shaping = policy;
  return set;
}

struct TrainerConfig {
  double lambda = 1e-4;
  int epochs = 10;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  double eta0 = 1.0;
  unsigned threads = 0;  // 0: hardware concurrency; never affects results

  void validate() const {
    if (epochs <= 0) throw Error(Errc::InvalidConfig, "epochs must be positive");
    if (!(lambda > 0) || !std::isfinite(lambda)) throw Error(Errc::InvalidConfig, "lambda must be positive");
    if (!(eta0 > 0) || !std::isfinite(eta0)) throw Error(Errc::InvalidConfig, "eta0 must be positive");
  }
};

struct ClassModel {
  ForCode code;
  std::vector<double> weights;  // dense, vocabulary dimension
  double bias = 0.0;
  double threshold = 0.0;
};

struct Model {
  static constexpr int kVersion = 1;
  features::Vocabulary vocabulary;
  std::vector<ClassModel> classes;  // ascending code
  TrainerConfig trainer;
  FeatureConfig features;
  ShapingPolicy shaping;
};

namespace detail {

inline double dot(const std::vector<double>& w, const features::SparseVector& x) {
  double s = 0;
  for (const auto& [i, v] : x.entries) s += w[i] * v;
  return s;
}

}  // namespace detail

/// Regularized hinge objective for one class:
/// lambda/2 |w|^2 + sum_i weight_i * max(0, 1 - y_i (w.x_i + b)) / sum_i weight_i.
inline double hinge_objective(const std::vector<double>& w, double b, const TrainingSet& set, const ForCode& code,
                              double lambda) {
  double reg = 0;
  for (double v : w) reg += v * v;
  double loss = 0, total = 0;
  for (const auto& ex : set.examples) {
    double y = std::binary_search(ex.labels.begin(), ex.labels.end(), code) ? 1.0 : -1.0;
    loss += ex.weight * std::max(0.0, 1.0 - y * (detail::dot(w, ex.x) + b));
    total += ex.weight;
  }
  return 0.5 * lambda * reg + (total > 0 ? loss / total : 0.0);
}

using EpochObserver = std::function<void(const ForCode& code, int epoch, const std::vector<double>& w, double b)>;

namespace detail {

// Examples with identical features and labels merged into one, weights
// rescaled to average 1. Sorted by content, so training sees the same
// problem whatever the example order or duplication.
struct CompactExample {
  const TrainingExample* ex = nullptr;
  double weight = 0.0;
};

inline std::vector<CompactExample> compact_examples(const TrainingSet& set) {
  auto less = [](const TrainingExample* a, const TrainingExample* b) {
    return std::tie(a->labels, a->x.entries) < std::tie(b->labels, b->x.entries);
  };
  std::map<const TrainingExample*, double, decltype(less)> merged(less);
  double total = 0;
  for (const auto& ex : set.examples) {
    merged[&ex] += ex.weight;
    total += ex.weight;
  }
  std::vector<CompactExample> out;
  out.reserve(merged.size());
  const double mean = total / static_cast<double>(merged.size());
  for (const auto& [ex, w] : merged) out.push_back({ex, w / mean});
  return out;
}

inline double compact_objective(const std::vector<CompactExample>& data, const std::vector<double>& y,
                                const std::vector<double>& w, double b, double lambda) {
  double reg = 0;
  for (double v : w) reg += v * v;
  double loss = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss += data[i].weight * std::max(0.0, 1.0 - y[i] * (dot(w, data[i].ex->x) + b));
  }
  return 0.5 * lambda * reg + loss / static_cast<double>(data.size());
}

// Primal SGD on the hinge loss with step eta0 / (1 + lambda * eta0 * t).
// w is held as scale * v so the shrink step is O(1). An epoch that raises
// the full objective is undone and the step size halved.
inline ClassModel train_one(const std::vector<CompactExample>& data, std::size_t dim, const ForCode& code,
                            const TrainerConfig& cfg, const EpochObserver* observer) {
  const std::size_t n = data.size();
  std::vector<double> v(dim, 0.0);
  double scale = 1.0, bias = 0.0, damping = 1.0;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& labels = data[i].ex->labels;
    y[i] = std::binary_search(labels.begin(), labels.end(), code) ? 1.0 : -1.0;
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, "train:" + code.digits()));
  std::vector<std::size_t> order(n);
  std::uint64_t t = 0;
  auto materialize = [&] {
    std::vector<double> w(v);
    for (auto& x : w) x *= scale;
    return w;
  };
  std::vector<double> best_w(dim, 0.0);
  double best_b = 0.0;
  double best_obj = compact_objective(data, y, best_w, best_b, cfg.lambda);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t i : order) {
      const auto& ex = *data[i].ex;
      const double eta = damping * cfg.eta0 / (1.0 + cfg.lambda * cfg.eta0 * static_cast<double>(t));
      const double margin = y[i] * (scale * dot(v, ex.x) + bias);
      scale *= 1.0 - eta * cfg.lambda;
      if (margin < 1.0) {
        const double step = eta * data[i].weight * y[i];
        for (const auto& [j, xv] : ex.x.entries) v[j] += step / scale * xv;
        bias += step;
      }
      if (scale < 1e-9) {
        for (auto& x : v) x *= scale;
        scale = 1.0;
      }
      ++t;
    }
    auto w = materialize();
    const double obj = compact_objective(data, y, w, bias, cfg.lambda);
    if (obj <= best_obj) {
      best_obj = obj;
      best_w = std::move(w);
      best_b = bias;
    } else {
      v = best_w;
      scale = 1.0;
      bias = best_b;
      damping *= 0.5;
    }
    if (observer && *observer) (*observer)(code, epoch, best_w, best_b);
  }
  return {code, std::move(best_w), best_b, cfg.threshold};
}

}  // namespace detail

/// One-vs-rest linear SVMs, one per class in the training set. Each class
/// runs its own seeded SGD, so results do not depend on thread count.
inline Model train(const TrainingSet& set, const TrainerConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  std::vector<ForCode> codes;
  for (const auto& [code, n] : set.class_counts) {
    if (n > 0) codes.push_back(code);
  }
  if (codes.size() < 2) throw Error(Errc::SingleClass, "need at least two classes, have " + std::to_string(codes.size()));
  for (const auto& ex : set.examples) {
    if (ex.x.dimension != set.vocabulary.size()) {
      throw Error(Errc::DimensionMismatch, "example " + ex.publication_id + " has dimension " +
                                               std::to_string(ex.x.dimension) + ", vocabulary has " +
                                               std::to_string(set.vocabulary.size()));
    }
  }
  Model model;
  model.vocabulary = set.vocabulary;
  model.trainer = cfg;
  model.features = set.features;
  model.shaping = set.shaping;
  model.classes.resize(codes.size());

  const EpochObserver* obs = observer ? &observer : nullptr;
  unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(codes.size()));
  if (obs) workers = 1;  // observers need not be thread-safe
  const auto data = detail::compact_examples(set);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < codes.size();) {
      model.classes[k] = detail::train_one(data, set.vocabulary.size(), codes[k], cfg, obs);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  return model;
}

struct ScoredCode {
  ForCode code;
  double score = 0.0;
};

/// Scores in descending order; ties go to the smaller code.
using Ranking = std::vector<ScoredCode>;

inline Ranking predict(const Model& model, const features::SparseVector& x) {
  if (x.dimension != model.vocabulary.size()) {
    throw Error(Errc::DimensionMismatch, "vector dimension " + std::to_string(x.dimension) + " != model dimension " +
                                             std::to_string(model.vocabulary.size()));
  }
  Ranking r;
  r.reserve(model.classes.size());
  for (const auto& c : model.classes) r.push_back({c.code, detail::dot(c.weights, x) + c.bias});
  std::sort(r.begin(), r.end(), [](const ScoredCode& a, const ScoredCode& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.code < b.code;
  });
  return r;
}

struct AssignPolicy {
  std::optional<double> threshold;  // overrides the per-class thresholds
};

struct Assignment {
  std::vector<ForCode> groups;     // sorted
  std::vector<ForCode> divisions;  // sorted, = parents of groups

  bool empty() const noexcept { return groups.empty(); }
};

/// Every class scoring strictly above its threshold; possibly none.
inline Assignment assign(const Model& model, const features::SparseVector& x, const AssignPolicy& policy = {}) {
  auto ranking = predict(model, x);
  std::map<ForCode, double> thresholds;
  for (const auto& c : model.classes) thresholds[c.code] = policy.threshold.value_or(c.threshold);
  std::set<ForCode> groups, divisions;
  for (const auto& s : ranking) {
    if (s.score > thresholds[s.code]) {
      groups.insert(s.code);
      divisions.insert(parent(s.code));
    }
  }
  return {{groups.begin(), groups.end()}, {divisions.begin(), divisions.end()}};
}

inline features::SparseVector vectorize_publication(const Model& model, const Publication& p) {
  return features::vectorize(publication_tokens(p), model.vocabulary);
}

/// key=value snapshot of every setting that influences training.
inline std::string model_config_text(const Model& m) {
  std::ostringstream os;
  os << "version=" << Model::kVersion << '\n'
     << "classes=" << m.classes.size() << '\n'
     << "dimension=" << m.vocabulary.size() << '\n'
     << "seed=" << m.trainer.seed << '\n'
     << "epochs=" << m.trainer.epochs << '\n'
     << "lambda=" << detail::format_double(m.trainer.lambda) << '\n'
     << "eta0=" << detail::format_double(m.trainer.eta0) << '\n'
     << "threshold=" << detail::format_double(m.trainer.threshold) << '\n'
     << "max_n=" << m.features.max_n << '\n'
     << "min_df=" << m.features.min_df << '\n'
     << "shaping_mode=" << shaping_mode_name(m.shaping.mode) << '\n'
     << "shaping_cap_percentile=" << detail::format_double(m.shaping.cap_percentile) << '\n'
     << "shaping_floor=" << m.shaping.floor << '\n'
     << "shaping_seed=" << m.shaping.seed << '\n';
  return os.str();
}

/// Model archive: a ustar file holding VERSION, config.txt,
/// vocabulary.csv, weights.csv (`code,index,weight`, nonzero only) and
/// classes.csv (`code,bias,threshold`).
inline std::string serialize_model(const Model& m) {
  std::ostringstream vocab, weights, classes;
  features::write_vocabulary(m.vocabulary, vocab);
  weights << "code,index,weight\n";
  classes << "code,bias,threshold\n";
  for (const auto& c : m.classes) {
    for (std::size_t i = 0; i < c.weights.size(); ++i) {
      if (c.weights[i] != 0.0) weights << c.code.digits() << ',' << i << ',' << detail::format_double(c.weights[i]) << '\n';
    }
    classes << c.code.digits() << ',' << detail::format_double(c.bias) << ',' << detail::format_double(c.threshold) << '\n';
  }
  return detail::tar_pack({{"VERSION", std::to_string(Model::kVersion) + "\n"},
                           {"config.txt", model_config_text(m)},
                           {"vocabulary.csv", vocab.str()},
                           {"weights.csv", weights.str()},
                           {"classes.csv", classes.str()}});
}

inline void save_model(const Model& m, const std::filesystem::path& path) { detail::write_file(path, serialize_model(m)); }

inline Model deserialize_model(std::string_view bytes) {
  auto members = detail::tar_unpack(bytes);
  for (const char* name : {"VERSION", "config.txt", "vocabulary.csv", "weights.csv", "classes.csv"}) {
    if (!members.count(name)) throw Error(Errc::MalformedRecord, std::string("model archive lacks ") + name);
  }
  if (detail::trim(members["VERSION"]) != std::to_string(Model::kVersion)) {
    throw Error(Errc::MalformedRecord, "unsupported model version " + detail::trim(members["VERSION"]));
  }
  Model m;
  std::map<std::string, std::string> cfg;
  {
    std::istringstream in(members["config.txt"]);
    for (std::string line; std::getline(in, line);) {
      auto eq = line.find('=');
      if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  try {
    m.trainer.seed = std::stoull(cfg.at("seed"));
    m.trainer.epochs = std::stoi(cfg.at("epochs"));
    m.trainer.lambda = detail::parse_double(cfg.at("lambda"));
    m.trainer.eta0 = detail::parse_double(cfg.at("eta0"));
    m.trainer.threshold = detail::parse_double(cfg.at("threshold"));
    m.features.max_n = std::stoi(cfg.at("max_n"));
    m.features.min_df = std::stoi(cfg.at("min_df"));
    m.shaping.mode = parse_shaping_mode(cfg.at("shaping_mode"));
    m.shaping.cap_percentile = detail::parse_double(cfg.at("shaping_cap_percentile"));
    m.shaping.floor = std::stoull(cfg.at("shaping_floor"));
    m.shaping.seed = std::stoull(cfg.at("shaping_seed"));
  } catch (const std::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("model config: ") + e.what());
  }
  m.vocabulary = features::read_vocabulary(members["vocabulary.csv"]);
  const auto dim = m.vocabulary.size();
  std::map<ForCode, std::size_t> pos;
  auto class_rows = detail::parse_csv(members["classes.csv"], "classes.csv");
  for (std::size_t r = 1; r < class_rows.size(); ++r) {
    const auto& f = class_rows[r].fields;
    if (f.size() != 3) throw Error(Errc::MalformedRecord, "classes.csv: bad row");
    ClassModel c{ForCode::parse(f[0], Scheme::FoR2020), std::vector<double>(dim, 0.0), detail::parse_double(f[1]),
                 detail::parse_double(f[2])};
    pos[c.code] = m.classes.size();
    m.classes.push_back(std::move(c));
  }
  auto weight_rows = detail::parse_csv(members["weights.csv"], "weights.csv");
  for (std::size_t r = 1; r < weight_rows.size(); ++r) {
    const auto& f = weight_rows[r].fields;
    auto it = pos.find(ForCode::parse(f.at(0), Scheme::FoR2020));
    auto idx = std::stoull(f.at(1));
    if (it == pos.end() || idx >= dim) throw Error(Errc::MalformedRecord, "weights.csv: row " + std::to_string(r) + " out of range");
    m.classes[it->second].weights[idx] = detail::parse_double(f.at(2));
  }
  return m;
}

inline Model load_model(const std::filesystem::path& path) { return deserialize_model(detail::read_file(path)); }

}  // namespace recat
