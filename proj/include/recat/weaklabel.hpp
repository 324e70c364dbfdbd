#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "recat/corpus.hpp"
#include "recat/detail/csv.hpp"
#include "recat/error.hpp"
#include "recat/features.hpp"
#include "recat/taxonomy.hpp"

namespace recat {

enum class Provenance { GrantPropagation, JournalTitle, Contributed, KeywordQuery, Remapped, Override };
enum class FilterStatus { Accepted, Rejected, Unfiltered };

constexpr std::string_view provenance_name(Provenance p) noexcept {
  switch (p) {
    case Provenance::GrantPropagation: return "grant_propagation";
    case Provenance::JournalTitle: return "journal_title";
    case Provenance::Contributed: return "contributed";
    case Provenance::KeywordQuery: return "keyword_query";
    case Provenance::Remapped: return "remapped";
    case Provenance::Override: return "override";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view s) {
  for (auto p : {Provenance::GrantPropagation, Provenance::JournalTitle, Provenance::Contributed, Provenance::KeywordQuery,
                 Provenance::Remapped, Provenance::Override}) {
    if (provenance_name(p) == s) return p;
  }
  throw Error(Errc::MalformedRecord, "unknown provenance '" + std::string(s) + "'");
}

constexpr std::string_view filter_status_name(FilterStatus f) noexcept {
  switch (f) {
    case FilterStatus::Accepted: return "accepted";
    case FilterStatus::Rejected: return "rejected";
    case FilterStatus::Unfiltered: return "unfiltered";
  }
  return "?";
}

inline FilterStatus parse_filter_status(std::string_view s) {
  if (s == "accepted") return FilterStatus::Accepted;
  if (s == "rejected") return FilterStatus::Rejected;
  if (s == "unfiltered") return FilterStatus::Unfiltered;
  throw Error(Errc::MalformedRecord, "unknown filter status '" + std::string(s) + "'");
}

/// One (publication, group code) assertion and where it came from.
/// Remapped labels remember the 2008 label they were derived from, so a
/// remap pass maps inputs to outputs one to one.
struct LabeledExample {
  std::string publication_id;
  ForCode code;
  Provenance provenance = Provenance::GrantPropagation;
  double weight = 1.0;
  FilterStatus filtered = FilterStatus::Unfiltered;
  std::optional<double> share{};
  std::optional<ClusterId> cluster_id{};
  std::optional<ForCode> origin_code{};
  std::optional<Provenance> origin_provenance{};

  auto key() const { return std::tie(publication_id, code, provenance, origin_code, origin_provenance); }

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Sorts by (publication, code, provenance, origin) and drops exact key
/// duplicates, keeping the first occurrence in sorted order.
inline void canonicalize(std::vector<LabeledExample>& labels) {
  std::stable_sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
  labels.erase(std::unique(labels.begin(), labels.end(), [](const auto& a, const auto& b) { return a.key() == b.key(); }),
               labels.end());
}

struct FilterDecision {
  LabeledExample example;
  std::optional<ClusterId> cluster_id;
  std::optional<double> share;  // absent when undefined
  double threshold = 0.01;
};

/// Grant propagation: every publication inherits the group (4-digit) part of each
/// 6-digit code on every grant it acknowledges.
inline std::vector<LabeledExample> propagate_grant_codes(const CorpusStore& store, Diagnostics* diag = nullptr) {
  std::vector<LabeledExample> out;
  for (const auto& [pid, pub] : store.publications()) {
    std::set<ForCode> codes;
    for (const auto& gid : pub.grant_ids) {
      const Grant* g = store.find_grant(gid);
      if (!g) {
        warn(diag, "DanglingGrantRef: publication " + pid + " acknowledges unknown grant " + gid);
        continue;
      }
      for (const auto& c : g->codes_2008) codes.insert(group_of(c));
    }
    for (const auto& c : codes) out.push_back({pid, c, Provenance::GrantPropagation});
  }
  return out;
}

/// Per-code cluster histogram over baseline publications with a known
/// cluster. Baseline publications with no cluster are not counted.
class ShareIndex {
 public:
  ShareIndex(const BaselineLabels& baseline, const ClusterMap& clusters) {
    for (const auto& [pid, code] : baseline) {
      auto it = clusters.find(pid);
      if (it == clusters.end()) continue;
      auto& h = hist_[code];
      ++h.total;
      ++h.per_cluster[it->second];
    }
  }

  /// Fraction of `code`'s cluster-known baseline publications that sit in
  /// `cluster`; nullopt when there are none.
  std::optional<double> share(const ForCode& code, ClusterId cluster) const {
    auto it = hist_.find(code);
    if (it == hist_.end() || it->second.total == 0) return std::nullopt;
    auto c = it->second.per_cluster.find(cluster);
    std::size_t num = c == it->second.per_cluster.end() ? 0 : c->second;
    return static_cast<double>(num) / static_cast<double>(it->second.total);
  }

 private:
  struct Histogram {
    std::size_t total = 0;
    std::map<ClusterId, std::size_t> per_cluster;
  };
  std::map<ForCode, Histogram> hist_;
};

inline double cluster_code_share(const ForCode& code, ClusterId cluster, const BaselineLabels& baseline,
                                 const ClusterMap& clusters) {
  std::size_t total = 0, in_cluster = 0;
  for (const auto& [pid, c] : baseline) {
    if (c != code) continue;
    auto it = clusters.find(pid);
    if (it == clusters.end()) continue;
    ++total;
    if (it->second == cluster) ++in_cluster;
  }
  if (total == 0) throw Error(Errc::NoBaselineForCode, "no cluster-mapped baseline publications for " + code.digits());
  return static_cast<double>(in_cluster) / static_cast<double>(total);
}

/// Accepts a candidate iff its publication's cluster holds strictly more
/// than `threshold` of the code's baseline publications. Candidates with no
/// known cluster, or whose code has no baseline, are Unfiltered. Output is
/// in canonical order regardless of input order.
inline std::vector<FilterDecision> filter_by_cluster(std::vector<LabeledExample> candidates, const BaselineLabels& baseline,
                                                     const ClusterMap& clusters, double threshold = 0.01) {
  canonicalize(candidates);
  ShareIndex index(baseline, clusters);
  std::vector<FilterDecision> out;
  out.reserve(candidates.size());
  for (auto& ex : candidates) {
    FilterDecision d;
    d.threshold = threshold;
    auto it = clusters.find(ex.publication_id);
    if (it != clusters.end()) d.cluster_id = it->second;
    if (d.cluster_id) d.share = index.share(ex.code, *d.cluster_id);
    if (d.share) {
      ex.filtered = *d.share > threshold ? FilterStatus::Accepted : FilterStatus::Rejected;
    } else {
      ex.filtered = FilterStatus::Unfiltered;
    }
    ex.share = d.share;
    ex.cluster_id = d.cluster_id;
    d.example = std::move(ex);
    out.push_back(std::move(d));
  }
  return out;
}

/// Flattens filter decisions back into labels. Rejected labels are kept
/// (flagged) for auditing; Unfiltered ones are dropped only on request.
inline std::vector<LabeledExample> decided_labels(const std::vector<FilterDecision>& decisions, bool drop_unfiltered = false) {
  std::vector<LabeledExample> out;
  for (const auto& d : decisions) {
    if (drop_unfiltered && d.example.filtered == FilterStatus::Unfiltered) continue;
    out.push_back(d.example);
  }
  return out;
}

/// Case-folded, punctuation-free token form used for title matching.
inline std::vector<std::string> normalized_title(std::string_view title) { return features::tokenize(title); }

/// Journal titles: journals whose title contains a group's display name as a
/// contiguous token run lend that group to all of their publications.
inline std::vector<LabeledExample> journal_title_candidates(const CorpusStore& store, const SchemeCatalog& catalog,
                                                            Scheme scheme = Scheme::FoR2008) {
  std::vector<std::pair<ForCode, std::vector<std::string>>> names;
  for (const auto& code : catalog.codes(scheme, Level::Group)) {
    auto toks = normalized_title(catalog.name(code));
    if (!toks.empty()) names.emplace_back(code, std::move(toks));
  }
  std::map<std::string, std::vector<ForCode>> journal_codes;
  for (const auto& [jid, journal] : store.journals()) {
    auto toks = normalized_title(journal.title);
    for (const auto& [code, name] : names) {
      if (features::contains_phrase(toks, name)) journal_codes[jid].push_back(code);
    }
  }
  std::vector<LabeledExample> out;
  for (const auto& [pid, pub] : store.publications()) {
    if (!pub.journal_id) continue;
    auto it = journal_codes.find(*pub.journal_id);
    if (it == journal_codes.end()) continue;
    for (const auto& code : it->second) out.push_back({pid, code, Provenance::JournalTitle});
  }
  return out;
}

/// Raw `publication_id,code_2008` rows at whatever level they were given.
inline std::vector<std::pair<std::string, ForCode>> read_contributed(const std::filesystem::path& path) {
  std::vector<std::pair<std::string, ForCode>> rows;
  for (const auto& row : detail::read_csv(path, {"publication_id", "code_2008"})) {
    auto where = path.string() + ":" + std::to_string(row.line) + ": ";
    auto pid = detail::trim(row.fields[0]);
    if (pid.empty()) throw Error(Errc::MalformedRow, where + "empty publication_id");
    try {
      rows.emplace_back(pid, ForCode::parse(row.fields[1], Scheme::FoR2008));
    } catch (const Error& e) {
      throw Error(Errc::MalformedRow, where + e.what());
    }
  }
  return rows;
}

/// Contributed labels: 6-digit codes coarsened to their group.
inline std::vector<LabeledExample> import_contributed(const std::filesystem::path& path, const CorpusStore& store,
                                                      Diagnostics* diag = nullptr) {
  std::vector<LabeledExample> out;
  for (const auto& [pid, code] : read_contributed(path)) {
    if (code.level() == Level::Division) {
      throw Error(Errc::MalformedRow, path.string() + ": division code " + code.digits() + " for " + pid + " is too coarse");
    }
    if (code.level() == Level::Group) warn(diag, "contributed code " + code.digits() + " for " + pid + " is already 4-digit");
    if (!store.find_publication(pid)) {
      warn(diag, "contributed row for unknown publication " + pid + " skipped");
      continue;
    }
    out.push_back({pid, group_of(code), Provenance::Contributed});
  }
  canonicalize(out);
  return out;
}

inline nlohmann::json to_json(const LabeledExample& ex) {
  nlohmann::json j;
  j["publication_id"] = ex.publication_id;
  j["code"] = ex.code.digits();
  j["scheme"] = std::string(scheme_name(ex.code.scheme()));
  j["provenance"] = std::string(provenance_name(ex.provenance));
  j["weight"] = ex.weight;
  j["filtered"] = std::string(filter_status_name(ex.filtered));
  j["share"] = ex.share ? nlohmann::json(*ex.share) : nlohmann::json();
  j["cluster_id"] = ex.cluster_id ? nlohmann::json(*ex.cluster_id) : nlohmann::json();
  j["origin_code"] = ex.origin_code ? nlohmann::json(ex.origin_code->digits()) : nlohmann::json();
  j["origin_provenance"] = ex.origin_provenance ? nlohmann::json(std::string(provenance_name(*ex.origin_provenance))) : nlohmann::json();
  return j;
}

inline LabeledExample label_from_json(const nlohmann::json& j, const std::string& where) {
  try {
    LabeledExample ex;
    ex.publication_id = j.at("publication_id").get<std::string>();
    auto scheme = parse_scheme(j.at("scheme").get<std::string>());
    ex.code = ForCode::parse(j.at("code").get<std::string>(), scheme);
    ex.provenance = parse_provenance(j.at("provenance").get<std::string>());
    ex.weight = j.at("weight").get<double>();
    if (ex.weight < 0) throw Error(Errc::MalformedRecord, "negative weight");
    ex.filtered = parse_filter_status(j.at("filtered").get<std::string>());
    if (j.contains("share") && !j["share"].is_null()) ex.share = j["share"].get<double>();
    if (j.contains("cluster_id") && !j["cluster_id"].is_null()) ex.cluster_id = j["cluster_id"].get<ClusterId>();
    if (j.contains("origin_code") && !j["origin_code"].is_null()) {
      ex.origin_code = ForCode::parse(j["origin_code"].get<std::string>(), Scheme::FoR2008);
    }
    if (j.contains("origin_provenance") && !j["origin_provenance"].is_null()) {
      ex.origin_provenance = parse_provenance(j["origin_provenance"].get<std::string>());
    }
    return ex;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRecord, where + ": " + e.what());
  } catch (const Error& e) {
    throw Error(Errc::MalformedRecord, where + ": " + e.what());
  }
}

inline void write_labels(const std::vector<LabeledExample>& labels, std::ostream& out) {
  for (const auto& ex : labels) out << to_json(ex).dump() << '\n';
}

inline std::vector<LabeledExample> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    auto where = path.string() + ":" + std::to_string(n);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, where + ": " + e.what());
    }
    out.push_back(label_from_json(j, where));
  }
  return out;
}

}  // namespace recat
