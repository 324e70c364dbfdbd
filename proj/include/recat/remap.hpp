#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recat/corpus.hpp"
#include "recat/detail/csv.hpp"
#include "recat/error.hpp"
#include "recat/features.hpp"
#include "recat/taxonomy.hpp"
#include "recat/weaklabel.hpp"

namespace recat {

/// Within `cluster`, labels on 2008 group `source_group` move to 2020
/// group `target_group`.
struct SplitRule {
  ForCode source_group;
  ClusterId cluster_id = 0;
  ForCode target_group;
  std::size_t support = 0;

  friend bool operator==(const SplitRule&, const SplitRule&) = default;
};

struct RemapResult {
  std::vector<LabeledExample> remapped;
  std::vector<LabeledExample> residual;
};

namespace detail {

inline LabeledExample remapped_label(const LabeledExample& src, const ForCode& target) {
  LabeledExample out = src;
  out.code = target;
  out.provenance = Provenance::Remapped;
  out.origin_code = src.code;
  out.origin_provenance = src.provenance;
  return out;
}

inline void require_group_2008(const LabeledExample& ex) {
  if (ex.code.scheme() != Scheme::FoR2008 || ex.code.level() != Level::Group) {
    throw Error(Errc::CodeLevelMismatch, "remap input for " + ex.publication_id + " must be a 4-digit 2008 code, got " +
                                             ex.code.digits());
  }
}

}  // namespace detail

/// Moves labels whose whole group is unanimously Direct-mapped; every other
/// label is returned untouched in `residual`. Each input lands on exactly
/// one side.
inline RemapResult direct_remap(const std::vector<LabeledExample>& labels, const CorrespondenceTable& table) {
  RemapResult r;
  std::map<ForCode, std::optional<ForCode>> memo;
  for (const auto& ex : labels) {
    detail::require_group_2008(ex);
    auto it = memo.find(ex.code);
    if (it == memo.end()) it = memo.emplace(ex.code, direct_group_target(table, ex.code)).first;
    if (it->second) {
      r.remapped.push_back(detail::remapped_label(ex, *it->second));
    } else {
      r.residual.push_back(ex);
    }
  }
  canonicalize(r.remapped);
  canonicalize(r.residual);
  return r;
}

/// Learns (2008 group, cluster) -> 2020 group rules from 6-digit evidence.
/// Only Direct table entries count as evidence; a pair yields a rule when
/// all of its evidence agrees on one 2020 group and at least `min_support`
/// distinct publications back it.
inline std::vector<SplitRule> mine_split_rules(const std::vector<std::pair<std::string, ForCode>>& evidence,
                                               const CorrespondenceTable& table, const ClusterMap& clusters,
                                               std::size_t min_support = 5) {
  struct Tally {
    std::set<ForCode> targets;
    std::set<std::string> pubs;
  };
  std::map<std::pair<ForCode, ClusterId>, Tally> tallies;
  for (const auto& [pid, code] : evidence) {
    if (code.scheme() != Scheme::FoR2008 || code.level() != Level::Field) continue;
    const auto* entry = table.find(code);
    if (!entry || entry->kind() != MappingKind::Direct) continue;
    auto c = clusters.find(pid);
    if (c == clusters.end()) continue;
    auto& t = tallies[{group_of(code), c->second}];
    t.targets.insert(group_of(entry->targets.front()));
    t.pubs.insert(pid);
  }
  std::vector<SplitRule> rules;
  for (const auto& [key, t] : tallies) {
    if (t.targets.size() != 1 || t.pubs.size() < min_support) continue;
    rules.push_back({key.first, key.second, *t.targets.begin(), t.pubs.size()});
  }
  return rules;
}

/// Applies mined rules to residual 2008 labels using each publication's
/// cluster. Labels with no matching rule (or no cluster) stay residual.
inline RemapResult apply_split_rules(const std::vector<LabeledExample>& residual, const std::vector<SplitRule>& rules,
                                     const ClusterMap& clusters) {
  std::map<std::pair<ForCode, ClusterId>, ForCode> index;
  for (const auto& r : rules) index.emplace(std::pair{r.source_group, r.cluster_id}, r.target_group);
  RemapResult out;
  for (const auto& ex : residual) {
    std::optional<ForCode> target;
    if (ex.code.scheme() == Scheme::FoR2008) {
      if (auto c = clusters.find(ex.publication_id); c != clusters.end()) {
        if (auto it = index.find({ex.code, c->second}); it != index.end()) target = it->second;
      }
    }
    if (target) {
      out.remapped.push_back(detail::remapped_label(ex, *target));
    } else {
      out.residual.push_back(ex);
    }
  }
  canonicalize(out.remapped);
  canonicalize(out.residual);
  return out;
}

inline void write_rules(const std::vector<SplitRule>& rules, std::ostream& out) {
  out << "source_group_2008,cluster_id,target_group_2020,support\n";
  for (const auto& r : rules) {
    out << r.source_group.digits() << ',' << r.cluster_id << ',' << r.target_group.digits() << ',' << r.support << '\n';
  }
}

inline std::vector<SplitRule> read_rules(const std::filesystem::path& path) {
  std::vector<SplitRule> rules;
  for (const auto& row : detail::read_csv(path, {"source_group_2008", "cluster_id", "target_group_2020", "support"})) {
    try {
      rules.push_back({ForCode::parse(row.fields[0], Scheme::FoR2008), std::stoll(row.fields[1]),
                       ForCode::parse(row.fields[2], Scheme::FoR2020), std::stoull(row.fields[3])});
    } catch (const std::exception& e) {
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(row.line) + ": " + e.what());
    }
  }
  return rules;
}

enum class SearchField { Title, Abstract };

/// Title/abstract phrase query that labels a reference corpus for a 2020
/// code. Phrases match as whole token runs after tokenization.
struct QuerySpec {
  ForCode target_code;  // 2020, 4- or 6-digit
  std::vector<std::string> must_terms{};
  std::vector<std::string> any_terms{};
  std::vector<std::string> not_terms{};
  std::set<SearchField> fields_searched{SearchField::Title, SearchField::Abstract};
};

inline QuerySpec query_from_json(const nlohmann::json& j, const std::string& where) {
  QuerySpec q;
  try {
    q.target_code = ForCode::parse(j.at("target_code").get<std::string>(), Scheme::FoR2020);
    auto list = [&](const char* key) {
      std::vector<std::string> v;
      if (j.contains(key) && !j[key].is_null()) v = j[key].get<std::vector<std::string>>();
      return v;
    };
    q.must_terms = list("must");
    q.any_terms = list("any");
    q.not_terms = list("not");
    if (j.contains("fields") && !j["fields"].is_null()) {
      q.fields_searched.clear();
      for (const auto& f : j["fields"].get<std::vector<std::string>>()) {
        if (f == "title") q.fields_searched.insert(SearchField::Title);
        else if (f == "abstract") q.fields_searched.insert(SearchField::Abstract);
        else throw Error(Errc::MalformedRecord, "unknown search field '" + f + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRecord, where + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::MalformedRecord) throw;
    throw Error(Errc::MalformedRecord, where + ": " + e.what());
  }
  if (q.target_code.level() == Level::Division) throw Error(Errc::CodeLevelMismatch, where + ": query target must be 4- or 6-digit");
  return q;
}

inline std::vector<QuerySpec> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<QuerySpec> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    auto where = path.string() + ":" + std::to_string(n);
    try {
      out.push_back(query_from_json(nlohmann::json::parse(line), where));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, where + ": " + e.what());
    }
  }
  return out;
}

/// Labels every publication that contains all `must` phrases, at least one
/// `any` phrase (when given) and no `not` phrase. A phrase must lie wholly
/// within one searched field.
inline std::vector<LabeledExample> keyword_corpus(const QuerySpec& spec, const CorpusStore& store) {
  if (spec.must_terms.empty() && spec.any_terms.empty()) {
    throw Error(Errc::EmptySpec, "query for " + spec.target_code.digits() + " has neither must nor any terms");
  }
  auto phrases = [](const std::vector<std::string>& terms) {
    std::vector<std::vector<std::string>> out;
    for (const auto& t : terms) {
      auto toks = features::tokenize(t);
      if (!toks.empty()) out.push_back(std::move(toks));
    }
    return out;
  };
  const auto must = phrases(spec.must_terms);
  const auto any = phrases(spec.any_terms);
  const auto nots = phrases(spec.not_terms);
  if (must.empty() && any.empty()) {
    throw Error(Errc::EmptySpec, "query for " + spec.target_code.digits() + " has no usable terms");
  }
  const ForCode target = group_of(spec.target_code);

  std::vector<LabeledExample> out;
  for (const auto& [pid, pub] : store.publications()) {
    std::vector<std::vector<std::string>> fields;
    if (spec.fields_searched.count(SearchField::Title)) fields.push_back(features::tokenize(pub.title));
    if (spec.fields_searched.count(SearchField::Abstract)) fields.push_back(features::tokenize(pub.abstract));
    auto found = [&](const std::vector<std::string>& phrase) {
      return std::any_of(fields.begin(), fields.end(), [&](const auto& f) { return features::contains_phrase(f, phrase); });
    };
    bool ok = std::all_of(must.begin(), must.end(), found);
    if (ok && !any.empty()) ok = std::any_of(any.begin(), any.end(), found);
    if (ok) ok = std::none_of(nots.begin(), nots.end(), found);
    if (ok) out.push_back({pid, target, Provenance::KeywordQuery});
  }
  return out;
}

enum class OverrideAction { Add, Remove };

struct Override {
  std::string publication_id;
  ForCode code;  // 2020 group
  OverrideAction action = OverrideAction::Add;
};

inline std::vector<Override> read_overrides(const std::filesystem::path& path) {
  std::vector<Override> out;
  std::map<std::pair<std::string, ForCode>, OverrideAction> seen;
  for (const auto& row : detail::read_csv(path, {"publication_id", "code_2020", "action"})) {
    auto where = path.string() + ":" + std::to_string(row.line) + ": ";
    Override o;
    o.publication_id = detail::trim(row.fields[0]);
    try {
      o.code = ForCode::parse(row.fields[1], Scheme::FoR2020);
    } catch (const Error& e) {
      throw Error(Errc::MalformedRow, where + e.what());
    }
    if (o.code.level() != Level::Group) throw Error(Errc::CodeLevelMismatch, where + "override codes must be 4-digit");
    auto action = detail::lower_ascii(detail::trim(row.fields[2]));
    if (action == "add") o.action = OverrideAction::Add;
    else if (action == "remove") o.action = OverrideAction::Remove;
    else throw Error(Errc::MalformedRow, where + "action must be add or remove");
    auto [it, inserted] = seen.emplace(std::pair{o.publication_id, o.code}, o.action);
    if (!inserted && it->second != o.action) {
      throw Error(Errc::ConflictingOverride, where + o.publication_id + "/" + o.code.digits() + " is both added and removed");
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Remove drops every label on (publication, code) whatever its provenance;
/// Add inserts an Override label. The result does not depend on row order.
inline std::vector<LabeledExample> apply_overrides(std::vector<LabeledExample> labels, const std::vector<Override>& overrides) {
  std::set<std::pair<std::string, ForCode>> removes, adds;
  for (const auto& o : overrides) {
    auto key = std::pair{o.publication_id, o.code};
    (o.action == OverrideAction::Add ? adds : removes).insert(key);
  }
  for (const auto& k : adds) {
    if (removes.count(k)) {
      throw Error(Errc::ConflictingOverride, k.first + "/" + k.second.digits() + " is both added and removed");
    }
  }
  std::erase_if(labels, [&](const LabeledExample& ex) { return removes.count({ex.publication_id, ex.code}) != 0; });
  for (const auto& [pid, code] : adds) {
    LabeledExample ex{pid, code, Provenance::Override};
    ex.filtered = FilterStatus::Accepted;
    labels.push_back(std::move(ex));
  }
  canonicalize(labels);
  return labels;
}

inline std::vector<LabeledExample> apply_overrides(std::vector<LabeledExample> labels, const std::filesystem::path& path) {
  return apply_overrides(std::move(labels), read_overrides(path));
}

/// Residual 2008 labels are not carried into the 2020 training data. This
/// counts how many of them sit on groups whose fields were all deleted.
struct ResidualSummary {
  std::size_t total = 0;
  std::size_t deleted = 0;
};

inline ResidualSummary summarize_residual(const std::vector<LabeledExample>& residual, const CorrespondenceTable& table) {
  ResidualSummary s;
  for (const auto& ex : residual) {
    ++s.total;
    auto kids = table.children(ex.code);
    if (!kids.empty() && std::all_of(kids.begin(), kids.end(), [](const auto* e) { return e->kind() == MappingKind::Deleted; })) {
      ++s.deleted;
    }
  }
  return s;
}

}  // namespace recat
