#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recat/detail/csv.hpp"
#include "recat/error.hpp"
#include "recat/taxonomy.hpp"

namespace recat {

using ClusterId = std::int64_t;

enum class RecordType {
  Article,
  Proceeding,
  Preprint,
  Chapter,
  Monograph,
  Grant,
  Patent,
  PolicyDocument,
  ClinicalTrial,
};

inline constexpr std::array<RecordType, 9> kAllRecordTypes = {
    RecordType::Article, RecordType::Proceeding, RecordType::Preprint,       RecordType::Chapter,      RecordType::Monograph,
    RecordType::Grant,   RecordType::Patent,     RecordType::PolicyDocument, RecordType::ClinicalTrial};

constexpr std::string_view record_type_name(RecordType t) noexcept {
  switch (t) {
    case RecordType::Article: return "article";
    case RecordType::Proceeding: return "proceeding";
    case RecordType::Preprint: return "preprint";
    case RecordType::Chapter: return "chapter";
    case RecordType::Monograph: return "monograph";
    case RecordType::Grant: return "grant";
    case RecordType::Patent: return "patent";
    case RecordType::PolicyDocument: return "policy_document";
    case RecordType::ClinicalTrial: return "clinical_trial";
  }
  return "?";
}

inline std::optional<RecordType> parse_record_type(std::string_view s) {
  for (auto t : kAllRecordTypes) {
    if (record_type_name(t) == s) return t;
  }
  return std::nullopt;
}

struct Publication {
  std::string id;
  std::optional<std::string> doi;
  std::string title;
  std::string abstract;
  int year = 0;
  RecordType record_type = RecordType::Article;
  std::optional<std::string> journal_id;
  std::vector<std::string> grant_ids;
  std::optional<ClusterId> cluster_id;

  friend bool operator==(const Publication&, const Publication&) = default;
};

struct Grant {
  std::string id;
  std::string funder;
  std::string title;
  std::string abstract;
  std::vector<ForCode> codes_2008;  // 6-digit

  friend bool operator==(const Grant&, const Grant&) = default;
};

struct Journal {
  std::string id;
  std::string title;

  friend bool operator==(const Journal&, const Journal&) = default;
};

/// (publication id, 4-digit 2008 code) pairs from the existing
/// classification; used only as a statistical prior.
using BaselineLabels = std::set<std::pair<std::string, ForCode>>;

/// publication id -> cluster, for publications whose cluster is known.
using ClusterMap = std::unordered_map<std::string, ClusterId>;

struct DanglingRef {
  std::string from_id;
  std::string kind;  // "journal", "grant", "baseline"
  std::string ref;
};

/// First year of the 5-year period containing `year`; periods are anchored
/// so that 1991-1995 is one bucket.
constexpr int period_start(int year) noexcept {
  int off = year - 1991;
  int q = off >= 0 ? off / 5 : -((-off + 4) / 5);
  return 1991 + 5 * q;
}

struct CorpusStats {
  std::map<RecordType, std::size_t> by_record_type;
  std::map<int, std::size_t> by_period;  // key: period_start
};

namespace detail {

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline const nlohmann::json* field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

struct RecordContext {
  std::string where;

  [[noreturn]] void missing(const char* key) const { throw Error(Errc::MissingField, where + ": missing field '" + key + "'"); }
  [[noreturn]] void malformed(const std::string& what) const { throw Error(Errc::MalformedRecord, where + ": " + what); }

  std::string req_string(const nlohmann::json& o, const char* key) const {
    const auto* f = field(o, key);
    if (!f) missing(key);
    if (!f->is_string()) malformed(std::string("'") + key + "' must be a string");
    return f->get<std::string>();
  }
  std::optional<std::string> opt_string(const nlohmann::json& o, const char* key) const {
    const auto* f = field(o, key);
    if (!f) return std::nullopt;
    if (!f->is_string()) malformed(std::string("'") + key + "' must be a string");
    return f->get<std::string>();
  }
  std::vector<std::string> string_list(const nlohmann::json& o, const char* key) const {
    const auto* f = field(o, key);
    if (!f) return {};
    if (!f->is_array()) malformed(std::string("'") + key + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : *f) {
      if (!v.is_string()) malformed(std::string("'") + key + "' must hold strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  }
};

}  // namespace detail

inline nlohmann::json to_json(const Publication& p) {
  nlohmann::json j;
  j["id"] = p.id;
  j["doi"] = p.doi ? nlohmann::json(*p.doi) : nlohmann::json();
  j["title"] = p.title;
  j["abstract"] = p.abstract;
  j["year"] = p.year;
  j["record_type"] = std::string(record_type_name(p.record_type));
  j["journal_id"] = p.journal_id ? nlohmann::json(*p.journal_id) : nlohmann::json();
  j["grant_ids"] = p.grant_ids;
  j["cluster_id"] = p.cluster_id ? nlohmann::json(*p.cluster_id) : nlohmann::json();
  return j;
}

inline Publication publication_from_json(const nlohmann::json& j, const std::string& where) {
  detail::RecordContext ctx{where};
  if (!j.is_object()) ctx.malformed("expected a JSON object");
  Publication p;
  p.id = ctx.req_string(j, "id");
  if (p.id.empty()) ctx.malformed("empty id");
  p.doi = ctx.opt_string(j, "doi");
  if (p.doi && p.doi->empty()) p.doi.reset();
  p.title = ctx.req_string(j, "title");
  p.abstract = ctx.opt_string(j, "abstract").value_or("");
  const auto* year = detail::field(j, "year");
  if (!year) ctx.missing("year");
  if (!year->is_number_integer()) ctx.malformed("'year' must be an integer");
  p.year = year->get<int>();
  if (p.year < 1500) ctx.malformed("year " + std::to_string(p.year) + " is before 1500");
  auto rt = ctx.req_string(j, "record_type");
  auto type = parse_record_type(rt);
  if (!type) ctx.malformed("unknown record_type '" + rt + "'");
  p.record_type = *type;
  p.journal_id = ctx.opt_string(j, "journal_id");
  p.grant_ids = ctx.string_list(j, "grant_ids");
  std::set<std::string> uniq(p.grant_ids.begin(), p.grant_ids.end());
  if (uniq.size() != p.grant_ids.size()) ctx.malformed("grant_ids contains duplicates");
  if (const auto* c = detail::field(j, "cluster_id")) {
    if (!c->is_number_integer()) ctx.malformed("'cluster_id' must be an integer");
    p.cluster_id = c->get<ClusterId>();
  }
  return p;
}

inline nlohmann::json to_json(const Grant& g) {
  nlohmann::json j;
  j["id"] = g.id;
  j["funder"] = g.funder;
  j["title"] = g.title;
  j["abstract"] = g.abstract;
  auto codes = nlohmann::json::array();
  for (const auto& c : g.codes_2008) codes.push_back(c.digits());
  j["codes_2008"] = codes;
  return j;
}

inline Grant grant_from_json(const nlohmann::json& j, const std::string& where) {
  detail::RecordContext ctx{where};
  if (!j.is_object()) ctx.malformed("expected a JSON object");
  Grant g;
  g.id = ctx.req_string(j, "id");
  if (g.id.empty()) ctx.malformed("empty id");
  g.funder = ctx.opt_string(j, "funder").value_or("");
  g.title = ctx.opt_string(j, "title").value_or("");
  g.abstract = ctx.opt_string(j, "abstract").value_or("");
  if (!detail::field(j, "codes_2008")) ctx.missing("codes_2008");
  for (const auto& s : ctx.string_list(j, "codes_2008")) {
    ForCode c;
    try {
      c = ForCode::parse(s, Scheme::FoR2008);
    } catch (const Error& e) {
      ctx.malformed(e.what());
    }
    if (c.level() != Level::Field) ctx.malformed("grant code " + c.digits() + " is not 6-digit");
    if (std::find(g.codes_2008.begin(), g.codes_2008.end(), c) == g.codes_2008.end()) g.codes_2008.push_back(c);
  }
  return g;
}

namespace detail {

// Parses and validates the whole file before anything reaches the store,
// so a bad line leaves the store untouched.
template <typename T, typename Parse>
std::vector<T> parse_jsonl(const std::filesystem::path& path, Parse&& parse) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::vector<T> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRecord, where + ": " + e.what());
    }
    auto record = parse(j, where);
    if (!seen.insert(record.id).second) throw Error(Errc::DuplicateId, where + ": id " + record.id + " repeated in file");
    out.push_back(std::move(record));
  }
  return out;
}

}  // namespace detail

/// In-memory document store. Records are keyed by id in ordered maps so
/// every traversal is deterministic. When a log is attached, each accepted
/// record is also appended to it; `open` replays such a log.
class CorpusStore {
 public:
  CorpusStore() = default;

  static CorpusStore open(const std::filesystem::path& log_path) {
    CorpusStore store;
    std::ifstream in(log_path);
    if (!in) throw Error(Errc::Io, "cannot open store log " + log_path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      auto where = log_path.string() + ":" + std::to_string(n);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedRecord, where + ": " + e.what());
      }
      store.replay(j, where);
    }
    return store;
  }

  void attach_log(const std::filesystem::path& log_path) {
    if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
    log_.open(log_path, std::ios::app | std::ios::binary);
    if (!log_) throw Error(Errc::Io, "cannot open store log " + log_path.string());
  }

  std::size_t ingest_publications(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    auto records = detail::parse_jsonl<Publication>(path, publication_from_json);
    for (auto& p : records) put_publication(std::move(p), diag);
    return records.size();
  }

  std::size_t ingest_grants(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    auto records = detail::parse_jsonl<Grant>(path, grant_from_json);
    for (auto& g : records) put_grant(std::move(g), diag);
    return records.size();
  }

  std::size_t ingest_journals(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    std::set<std::string> seen;
    std::size_t n = 0;
    for (const auto& row : detail::read_csv(path, {"id", "title"})) {
      auto id = detail::trim(row.fields[0]);
      if (id.empty()) throw Error(Errc::MissingField, path.string() + ":" + std::to_string(row.line) + ": empty id");
      if (!seen.insert(id).second) {
        throw Error(Errc::DuplicateId, path.string() + ":" + std::to_string(row.line) + ": journal " + id);
      }
      put_journal({id, row.fields[1]}, diag);
      ++n;
    }
    return n;
  }

  std::size_t ingest_clusters(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    std::size_t n = 0;
    for (const auto& row : detail::read_csv(path, {"doi", "cluster_id"})) {
      auto where = path.string() + ":" + std::to_string(row.line) + ": ";
      auto doi = detail::trim(row.fields[0]);
      if (doi.empty()) throw Error(Errc::MissingField, where + "empty doi");
      ClusterId cid;
      try {
        std::size_t used = 0;
        auto t = detail::trim(row.fields[1]);
        cid = std::stoll(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw Error(Errc::MalformedRecord, where + "cluster_id must be an integer");
      }
      put_cluster(doi, cid, diag);
      ++n;
    }
    return n;
  }

  std::size_t ingest_baseline(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    std::size_t n = 0;
    for (const auto& row : detail::read_csv(path, {"publication_id", "code_2008_4digit"})) {
      auto where = path.string() + ":" + std::to_string(row.line) + ": ";
      ForCode code;
      try {
        code = ForCode::parse(row.fields[1], Scheme::FoR2008);
      } catch (const Error& e) {
        throw Error(Errc::MalformedRecord, where + e.what());
      }
      if (code.level() != Level::Group) throw Error(Errc::MalformedRecord, where + "baseline codes must be 4-digit");
      auto pid = detail::trim(row.fields[0]);
      if (pid.empty()) throw Error(Errc::MissingField, where + "empty publication_id");
      put_baseline(pid, code, diag);
      ++n;
    }
    return n;
  }

  // Single-record insertion; used by ingest, log replay and tests.
  void put_publication(Publication p, Diagnostics* diag = nullptr) {
    log_record("publication", to_json(p));
    auto [it, inserted] = publications_.insert_or_assign(p.id, std::move(p));
    if (!inserted) warn(diag, "publication " + it->first + " re-ingested; overwritten");
  }
  void put_grant(Grant g, Diagnostics* diag = nullptr) {
    log_record("grant", to_json(g));
    auto [it, inserted] = grants_.insert_or_assign(g.id, std::move(g));
    if (!inserted) warn(diag, "grant " + it->first + " re-ingested; overwritten");
  }
  void put_journal(Journal jn, Diagnostics* diag = nullptr) {
    log_record("journal", {{"id", jn.id}, {"title", jn.title}});
    auto [it, inserted] = journals_.insert_or_assign(jn.id, std::move(jn));
    if (!inserted) warn(diag, "journal " + it->first + " re-ingested; overwritten");
  }
  void put_cluster(const std::string& doi, ClusterId cluster, Diagnostics* diag = nullptr) {
    log_record("cluster", {{"doi", doi}, {"cluster_id", cluster}});
    auto key = detail::lower_ascii(doi);
    auto it = clusters_.find(key);
    if (it != clusters_.end() && it->second != cluster) {
      warn(diag, "doi " + doi + " reassigned from cluster " + std::to_string(it->second) + " to " + std::to_string(cluster));
    }
    clusters_[key] = cluster;
  }
  void put_baseline(const std::string& publication_id, const ForCode& code, Diagnostics* diag = nullptr) {
    (void)diag;
    log_record("baseline", {{"publication_id", publication_id}, {"code", code.digits()}});
    baseline_.emplace(publication_id, code);
  }

  const std::map<std::string, Publication>& publications() const noexcept { return publications_; }
  const std::map<std::string, Grant>& grants() const noexcept { return grants_; }
  const std::map<std::string, Journal>& journals() const noexcept { return journals_; }
  const BaselineLabels& baseline() const noexcept { return baseline_; }

  const Publication* find_publication(std::string_view id) const {
    auto it = publications_.find(std::string(id));
    return it == publications_.end() ? nullptr : &it->second;
  }
  const Grant* find_grant(std::string_view id) const {
    auto it = grants_.find(std::string(id));
    return it == grants_.end() ? nullptr : &it->second;
  }

  /// Cluster via DOI lookup in the cluster assignments, falling back to the
  /// record's own cluster_id. Publications without a DOI are always unknown.
  std::optional<ClusterId> cluster_of(const Publication& p) const {
    if (!p.doi) return std::nullopt;
    auto it = clusters_.find(detail::lower_ascii(*p.doi));
    if (it != clusters_.end()) return it->second;
    return p.cluster_id;
  }

  ClusterMap publication_clusters() const {
    ClusterMap out;
    for (const auto& [id, p] : publications_) {
      if (auto c = cluster_of(p)) out.emplace(id, *c);
    }
    return out;
  }

  CorpusStats stats() const {
    CorpusStats s;
    for (auto t : kAllRecordTypes) s.by_record_type[t] = 0;
    for (const auto& [_, p] : publications_) {
      ++s.by_record_type[p.record_type];
      ++s.by_period[period_start(p.year)];
    }
    s.by_record_type[RecordType::Grant] += grants_.size();
    return s;
  }

  std::vector<DanglingRef> dangling_references() const {
    std::vector<DanglingRef> out;
    for (const auto& [id, p] : publications_) {
      if (p.journal_id && !journals_.count(*p.journal_id)) out.push_back({id, "journal", *p.journal_id});
      for (const auto& g : p.grant_ids) {
        if (!grants_.count(g)) out.push_back({id, "grant", g});
      }
    }
    for (const auto& [pid, code] : baseline_) {
      if (!publications_.count(pid)) out.push_back({pid, "baseline", code.digits()});
    }
    return out;
  }

  /// Canonical JSONL dump of the publications, ordered by id.
  void export_publications(std::ostream& out) const {
    for (const auto& [_, p] : publications_) out << to_json(p).dump() << '\n';
  }

 private:
  void log_record(const char* kind, nlohmann::json record) {
    if (!log_.is_open()) return;
    nlohmann::json line{{"kind", kind}, {"record", std::move(record)}};
    log_ << line.dump() << '\n';
    log_.flush();
  }

  void replay(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("kind") || !j.contains("record")) {
      throw Error(Errc::MalformedRecord, where + ": bad log line");
    }
    const auto kind = j["kind"].get<std::string>();
    const auto& r = j["record"];
    if (kind == "publication") {
      put_publication(publication_from_json(r, where));
    } else if (kind == "grant") {
      put_grant(grant_from_json(r, where));
    } else if (kind == "journal") {
      put_journal({r.at("id").get<std::string>(), r.at("title").get<std::string>()});
    } else if (kind == "cluster") {
      put_cluster(r.at("doi").get<std::string>(), r.at("cluster_id").get<ClusterId>());
    } else if (kind == "baseline") {
      put_baseline(r.at("publication_id").get<std::string>(), ForCode::parse(r.at("code").get<std::string>(), Scheme::FoR2008));
    } else {
      throw Error(Errc::MalformedRecord, where + ": unknown record kind '" + kind + "'");
    }
  }

  std::map<std::string, Publication> publications_;
  std::map<std::string, Grant> grants_;
  std::map<std::string, Journal> journals_;
  std::unordered_map<std::string, ClusterId> clusters_;  // key: lower-cased doi
  BaselineLabels baseline_;
  std::ofstream log_;
};

}  // namespace recat
