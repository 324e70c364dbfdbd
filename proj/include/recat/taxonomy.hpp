#pragma once

#include <algorithm>
#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "recat/detail/csv.hpp"
#include "recat/error.hpp"

namespace recat {

enum class Scheme { FoR2008, FoR2020 };
enum class Level { Division, Group, Field };

constexpr std::string_view scheme_name(Scheme s) noexcept { return s == Scheme::FoR2008 ? "2008" : "2020"; }

inline Scheme parse_scheme(std::string_view s) {
  if (s == "2008" || s == "FoR2008" || s == "for2008") return Scheme::FoR2008;
  if (s == "2020" || s == "FoR2020" || s == "for2020") return Scheme::FoR2020;
  throw Error(Errc::MalformedRow, "unknown scheme '" + std::string(s) + "'");
}

constexpr std::string_view level_name(Level l) noexcept {
  switch (l) {
    case Level::Division: return "division";
    case Level::Group: return "group";
    case Level::Field: return "field";
  }
  return "?";
}

/// A Field-of-Research code: 2 digits (division), 4 (group) or 6 (field),
/// tagged with the scheme it belongs to. Digits are kept as a string so
/// leading zeros ("01") survive.
class ForCode {
 public:
  ForCode() = default;

  /// Validates and constructs; only surrounding whitespace is trimmed.
  static ForCode parse(std::string_view text, Scheme scheme) {
    std::string digits = detail::trim(text);
    if (digits.size() != 2 && digits.size() != 4 && digits.size() != 6) {
      throw Error(Errc::InvalidLength, "code '" + digits + "' must have 2, 4 or 6 digits");
    }
    for (char c : digits) {
      if (c < '0' || c > '9') throw Error(Errc::NonDigit, "code '" + digits + "' contains a non-digit");
    }
    ForCode code;
    code.scheme_ = scheme;
    code.digits_ = std::move(digits);
    return code;
  }

  Scheme scheme() const noexcept { return scheme_; }
  const std::string& digits() const noexcept { return digits_; }
  bool valid() const noexcept { return !digits_.empty(); }

  Level level() const noexcept {
    switch (digits_.size()) {
      case 2: return Level::Division;
      case 4: return Level::Group;
      default: return Level::Field;
    }
  }

  /// True when `other` is this code or one of its descendants.
  bool is_prefix_of(const ForCode& other) const noexcept {
    return scheme_ == other.scheme_ && other.digits_.compare(0, digits_.size(), digits_) == 0;
  }

  friend bool operator==(const ForCode&, const ForCode&) = default;
  friend auto operator<=>(const ForCode& a, const ForCode& b) {
    if (auto c = a.scheme_ <=> b.scheme_; c != 0) return c;
    return a.digits_.compare(b.digits_) <=> 0;
  }

  friend std::ostream& operator<<(std::ostream& os, const ForCode& c) { return os << c.digits_; }

 private:
  Scheme scheme_ = Scheme::FoR2008;
  std::string digits_;
};

inline ForCode parent(const ForCode& code) {
  if (code.level() == Level::Division) throw Error(Errc::NoParent, "division " + code.digits() + " has no parent");
  return ForCode::parse(std::string_view(code.digits()).substr(0, code.digits().size() - 2), code.scheme());
}

/// Coarsens a code to `level`; codes already at or above it are returned as-is.
inline ForCode truncate_to(const ForCode& code, Level level) {
  ForCode c = code;
  while (c.level() > level) c = parent(c);
  return c;
}

inline ForCode division_of(const ForCode& code) { return truncate_to(code, Level::Division); }
inline ForCode group_of(const ForCode& code) { return truncate_to(code, Level::Group); }

enum class Bloc { STEM, HASS };

constexpr std::string_view bloc_name(Bloc b) noexcept { return b == Bloc::STEM ? "STEM" : "HASS"; }

/// Code display names for both schemes plus the STEM/HASS partition of
/// divisions used to order transition-matrix rows and columns.
class SchemeCatalog {
 public:
  void add(const ForCode& code, std::string name) { names_[code] = std::move(name); }
  void set_bloc(const ForCode& division, Bloc bloc) { blocs_[division] = bloc; }

  bool contains(const ForCode& code) const { return names_.count(code) != 0; }

  const std::string& name(const ForCode& code) const {
    auto it = names_.find(code);
    if (it == names_.end()) throw Error(Errc::UnknownCode, "code " + code.digits() + " not in catalog");
    return it->second;
  }

  std::optional<Bloc> bloc(const ForCode& division) const {
    auto it = blocs_.find(division);
    if (it == blocs_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<ForCode> codes(Scheme scheme, Level level) const {
    std::vector<ForCode> out;
    for (const auto& [code, _] : names_) {
      if (code.scheme() == scheme && code.level() == level) out.push_back(code);
    }
    return out;
  }

  const std::map<ForCode, std::string>& entries() const noexcept { return names_; }

  /// Throws UnknownCode when a group's division or a field's group is absent.
  void validate() const {
    for (const auto& [code, _] : names_) {
      if (code.level() == Level::Division) continue;
      if (!contains(parent(code))) {
        throw Error(Errc::UnknownCode, "catalog code " + code.digits() + " (" + std::string(scheme_name(code.scheme())) +
                                           ") has no parent " + parent(code).digits());
      }
    }
  }

 private:
  std::map<ForCode, std::string> names_;
  std::map<ForCode, Bloc> blocs_;
};

/// Parses a code and, when a catalog is supplied, checks membership.
inline ForCode parse_code(std::string_view text, Scheme scheme, const SchemeCatalog* catalog = nullptr) {
  ForCode code = ForCode::parse(text, scheme);
  if (catalog != nullptr && !catalog->contains(code)) {
    throw Error(Errc::UnknownCode, "code " + code.digits() + " is not in the " + std::string(scheme_name(scheme)) +
                                       " catalog");
  }
  return code;
}

inline SchemeCatalog load_catalog(const std::filesystem::path& path) {
  SchemeCatalog catalog;
  for (const auto& row : detail::read_csv(path, {"scheme", "code", "name"})) {
    try {
      catalog.add(ForCode::parse(row.fields[1], parse_scheme(detail::trim(row.fields[0]))), detail::trim(row.fields[2]));
    } catch (const Error& e) {
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(row.line) + ": " + e.what());
    }
  }
  catalog.validate();
  return catalog;
}

inline void load_stem_hass(SchemeCatalog& catalog, const std::filesystem::path& path) {
  for (const auto& row : detail::read_csv(path, {"scheme", "division", "bloc"})) {
    auto where = path.string() + ":" + std::to_string(row.line) + ": ";
    ForCode div;
    try {
      div = ForCode::parse(row.fields[1], parse_scheme(detail::trim(row.fields[0])));
    } catch (const Error& e) {
      throw Error(Errc::MalformedRow, where + e.what());
    }
    if (div.level() != Level::Division) throw Error(Errc::CodeLevelMismatch, where + "bloc rows name divisions");
    auto bloc = detail::trim(row.fields[2]);
    if (bloc == "STEM") {
      catalog.set_bloc(div, Bloc::STEM);
    } else if (bloc == "HASS") {
      catalog.set_bloc(div, Bloc::HASS);
    } else {
      throw Error(Errc::MalformedRow, where + "bloc must be STEM or HASS");
    }
  }
}

enum class MappingKind { Direct, Split, Deleted };

constexpr std::string_view mapping_kind_name(MappingKind k) noexcept {
  switch (k) {
    case MappingKind::Direct: return "direct";
    case MappingKind::Split: return "split";
    case MappingKind::Deleted: return "deleted";
  }
  return "?";
}

/// One 2008 field and the 2020 field(s) it became. Codes that are new in
/// 2020 have no source and live in CorrespondenceTable::new_codes().
struct CorrespondenceEntry {
  ForCode source;
  std::vector<ForCode> targets;  // sorted, unique

  MappingKind kind() const noexcept {
    if (targets.empty()) return MappingKind::Deleted;
    return targets.size() == 1 ? MappingKind::Direct : MappingKind::Split;
  }
};

/// The 2008 -> 2020 crosswalk, held at field (6-digit) level only. Group
/// and division relationships are derived on demand.
class CorrespondenceTable {
 public:
  void add(CorrespondenceEntry entry) {
    auto src = entry.source;
    if (!entries_.emplace(src, std::move(entry)).second) {
      throw Error(Errc::DuplicateSource, "source " + src.digits() + " appears in more than one entry");
    }
  }

  void add_new_code(const ForCode& code) {
    if (code.scheme() != Scheme::FoR2020 || code.level() != Level::Field) {
      throw Error(Errc::CodeLevelMismatch, "new code " + code.digits() + " must be a 6-digit 2020 code");
    }
    new_codes_.insert(code);
  }

  const CorrespondenceEntry* find(const ForCode& source) const {
    auto it = entries_.find(source);
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Entries whose source lies under `prefix` (any level of the 2008 scheme).
  std::vector<const CorrespondenceEntry*> children(const ForCode& prefix) const {
    std::vector<const CorrespondenceEntry*> out;
    for (auto it = entries_.lower_bound(prefix); it != entries_.end() && prefix.is_prefix_of(it->first); ++it) {
      out.push_back(&it->second);
    }
    return out;
  }

  const std::map<ForCode, CorrespondenceEntry>& entries() const noexcept { return entries_; }
  const std::set<ForCode>& new_codes() const noexcept { return new_codes_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<ForCode, CorrespondenceEntry> entries_;
  std::set<ForCode> new_codes_;
};

/// Rows `source_2008,target_2020`; repeated sources express a split and an
/// empty target expresses deletion.
inline CorrespondenceTable parse_correspondence(const std::vector<detail::CsvRow>& rows, const std::string& source_name) {
  std::map<ForCode, std::vector<ForCode>> targets;
  std::map<ForCode, bool> deleted;
  std::set<std::pair<ForCode, std::string>> seen;
  for (const auto& row : rows) {
    auto where = source_name + ":" + std::to_string(row.line) + ": ";
    ForCode src;
    std::optional<ForCode> dst;
    try {
      src = ForCode::parse(row.fields[0], Scheme::FoR2008);
      auto t = detail::trim(row.fields[1]);
      if (!t.empty()) dst = ForCode::parse(t, Scheme::FoR2020);
    } catch (const Error& e) {
      throw Error(Errc::MalformedRow, where + e.what());
    }
    if (src.level() != Level::Field || (dst && dst->level() != Level::Field)) {
      throw Error(Errc::CodeLevelMismatch, where + "correspondence rows must use 6-digit codes");
    }
    if (!seen.emplace(src, dst ? dst->digits() : std::string()).second) {
      throw Error(Errc::DuplicateSource, where + "row " + src.digits() + "," + (dst ? dst->digits() : "") + " repeated");
    }
    if (dst) {
      targets[src].push_back(*dst);
    } else {
      deleted[src] = true;
    }
    if (deleted.count(src) && targets.count(src)) {
      throw Error(Errc::DuplicateSource, where + src.digits() + " is both deleted and mapped");
    }
  }
  CorrespondenceTable table;
  for (auto& [src, dsts] : targets) {
    std::sort(dsts.begin(), dsts.end());
    table.add({src, std::move(dsts)});
  }
  for (const auto& [src, _] : deleted) table.add({src, {}});
  return table;
}

inline CorrespondenceTable load_correspondence(const std::filesystem::path& path) {
  return parse_correspondence(detail::read_csv(path, {"source_2008", "target_2020"}), path.string());
}

/// Reads `new_codes_2020.csv` (header `code_2020`) into the table.
inline void load_new_codes(CorrespondenceTable& table, const std::filesystem::path& path) {
  for (const auto& row : detail::read_csv(path, {"code_2020"})) {
    try {
      table.add_new_code(ForCode::parse(row.fields[0], Scheme::FoR2020));
    } catch (const Error& e) {
      if (e.code() == Errc::CodeLevelMismatch) throw;
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(row.line) + ": " + e.what());
    }
  }
}

/// Canonical serialization: header, then one row per (source, target) in
/// code order; deleted sources get an empty target.
inline void write_correspondence(const CorrespondenceTable& table, std::ostream& out) {
  out << "source_2008,target_2020\n";
  for (const auto& [src, entry] : table.entries()) {
    if (entry.targets.empty()) out << src.digits() << ",\n";
    for (const auto& t : entry.targets) out << src.digits() << ',' << t.digits() << '\n';
  }
}

/// The single 2020 group every child of `group2008` is Direct-mapped into,
/// or nullopt when the children disagree or any is split/deleted.
inline std::optional<ForCode> direct_group_target(const CorrespondenceTable& table, const ForCode& group2008) {
  if (group2008.scheme() != Scheme::FoR2008 || group2008.level() != Level::Group) {
    throw Error(Errc::CodeLevelMismatch, "expected a 4-digit 2008 group, got " + group2008.digits());
  }
  auto kids = table.children(group2008);
  if (kids.empty()) throw Error(Errc::UnknownCode, "group " + group2008.digits() + " has no correspondence entries");
  std::optional<ForCode> target;
  for (const auto* e : kids) {
    if (e->kind() != MappingKind::Direct) return std::nullopt;
    auto g = parent(e->targets.front());
    if (target && *target != g) return std::nullopt;
    target = g;
  }
  return target;
}

}  // namespace recat
