#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "recat/classifier.hpp"
#include "recat/corpus.hpp"
#include "recat/detail/format.hpp"
#include "recat/detail/hash.hpp"
#include "recat/detail/random.hpp"
#include "recat/error.hpp"
#include "recat/taxonomy.hpp"

namespace recat {

/// Seeded shuffle of [0, n) cut into k contiguous folds whose sizes differ
/// by at most one.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidConfig, "cross-validation needs k >= 2");
  if (n < k) throw Error(Errc::TooFewExamples, std::to_string(n) + " examples cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(detail::derive_seed(seed, "folds"));
  detail::shuffle(idx, rng);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

/// Same vocabulary; class counts recomputed over the chosen examples.
inline TrainingSet subset(const TrainingSet& set, const std::vector<std::size_t>& indices) {
  TrainingSet out;
  out.vocabulary = set.vocabulary;
  out.features = set.features;
  out.shaping = set.shaping;
  for (auto i : indices) {
    out.examples.push_back(set.examples.at(i));
    for (const auto& c : set.examples[i].labels) ++out.class_counts[c];
  }
  return out;
}

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

struct FoldReport {
  std::size_t fold = 0;
  std::size_t test_size = 0;
  std::map<ForCode, ClassMetrics> per_class;
  double micro_precision = 0, micro_recall = 0, micro_f1 = 0;
  double macro_precision = 0, macro_recall = 0, macro_f1 = 0;
  double coverage = 0;        // test docs with >= 1 assigned code
  double top1_accuracy = 0;   // top-ranked code is one of the true codes
  double subset_accuracy = 0; // assigned set equals the true set
};

namespace detail {

inline void finish(ClassMetrics& m) {
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
}

}  // namespace detail

inline FoldReport evaluate_fold(const Model& model, const TrainingSet& test, std::size_t fold = 0) {
  FoldReport r;
  r.fold = fold;
  r.test_size = test.examples.size();
  ClassMetrics micro;
  std::size_t covered = 0, top1 = 0, exact = 0;
  for (const auto& ex : test.examples) {
    auto ranking = predict(model, ex.x);
    auto a = assign(model, ex.x);
    std::set<ForCode> truth(ex.labels.begin(), ex.labels.end());
    std::set<ForCode> got(a.groups.begin(), a.groups.end());
    if (!got.empty()) ++covered;
    if (!ranking.empty() && truth.count(ranking.front().code)) ++top1;
    if (got == truth) ++exact;
    for (const auto& c : got) {
      auto& m = r.per_class[c];
      (truth.count(c) ? m.tp : m.fp)++;
    }
    for (const auto& c : truth) {
      if (!got.count(c)) ++r.per_class[c].fn;
    }
  }
  for (auto& [_, m] : r.per_class) {
    detail::finish(m);
    micro.tp += m.tp;
    micro.fp += m.fp;
    micro.fn += m.fn;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  if (!r.per_class.empty()) {
    const auto k = static_cast<double>(r.per_class.size());
    r.macro_precision /= k;
    r.macro_recall /= k;
    r.macro_f1 /= k;
  }
  detail::finish(micro);
  r.micro_precision = micro.precision;
  r.micro_recall = micro.recall;
  r.micro_f1 = micro.f1;
  if (r.test_size) {
    const auto n = static_cast<double>(r.test_size);
    r.coverage = static_cast<double>(covered) / n;
    r.top1_accuracy = static_cast<double>(top1) / n;
    r.subset_accuracy = static_cast<double>(exact) / n;
  }
  return r;
}

/// k-fold cross-validation: train on k-1 folds, test on the held-out one.
inline std::vector<FoldReport> cross_validate(const TrainingSet& set, std::size_t k, std::uint64_t seed,
                                              TrainerConfig trainer = {}) {
  auto folds = make_folds(set.examples.size(), k, seed);
  std::vector<FoldReport> reports;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    trainer.seed = detail::derive_seed(seed, "fold:" + std::to_string(f));
    auto model = train(subset(set, train_idx), trainer);
    reports.push_back(evaluate_fold(model, subset(set, folds[f]), f));
  }
  return reports;
}

/// object id -> assigned codes (any level, one scheme).
using AssignmentMap = std::map<std::string, std::vector<ForCode>>;

enum class CoverageGrouping { ByRecordType, ByPeriod5y };

struct CoverageRow {
  std::string group;
  std::uint64_t total = 0;
  std::uint64_t covered = 0;

  std::string percent() const { return detail::percent_1dp(covered, total); }
};

inline std::string period_label(int start) { return std::to_string(start) + "-" + std::to_string(start + 4); }

/// Objects with at least one assigned code, per record type (publications
/// plus grants) or per 5-year publication period. Groups with no objects
/// are omitted.
inline std::vector<CoverageRow> coverage_report(const AssignmentMap& assignments, const CorpusStore& store,
                                                CoverageGrouping grouping) {
  auto is_covered = [&](const std::string& id) {
    auto it = assignments.find(id);
    return it != assignments.end() && !it->second.empty();
  };
  std::vector<CoverageRow> rows;
  if (grouping == CoverageGrouping::ByRecordType) {
    std::map<RecordType, CoverageRow> by;
    for (const auto& [id, p] : store.publications()) {
      auto& r = by[p.record_type];
      ++r.total;
      r.covered += is_covered(id);
    }
    for (const auto& [id, g] : store.grants()) {
      auto& r = by[RecordType::Grant];
      ++r.total;
      r.covered += is_covered(id);
    }
    for (auto t : kAllRecordTypes) {
      auto it = by.find(t);
      if (it == by.end()) continue;
      it->second.group = std::string(record_type_name(t));
      rows.push_back(it->second);
    }
  } else {
    std::map<int, CoverageRow> by;
    for (const auto& [id, p] : store.publications()) {
      auto& r = by[period_start(p.year)];
      ++r.total;
      r.covered += is_covered(id);
    }
    for (auto& [start, r] : by) {
      r.group = period_label(start);
      rows.push_back(r);
    }
  }
  return rows;
}

struct DistributionRow {
  ForCode division;
  std::string name;
  std::uint64_t count = 0;
  std::uint64_t total = 0;  // all (object, division) affiliations

  double share() const { return total ? 100.0 * static_cast<double>(count) / static_cast<double>(total) : 0.0; }
  std::string percent() const { return detail::percent_1dp(count, total); }
};

/// Share of (object, division) affiliations held by each division.
inline std::vector<DistributionRow> distribution_report(const AssignmentMap& assignments, const SchemeCatalog& catalog) {
  std::map<ForCode, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& [_, codes] : assignments) {
    std::set<ForCode> divs;
    for (const auto& c : codes) divs.insert(division_of(c));
    for (const auto& d : divs) ++counts[d];
    total += divs.size();
  }
  std::vector<DistributionRow> rows;
  for (const auto& [d, n] : counts) {
    rows.push_back({d, catalog.contains(d) ? catalog.name(d) : std::string(), n, total});
  }
  return rows;
}

/// Row-stochastic overlap (in percent) between old-scheme divisions (rows)
/// and new-scheme divisions (columns).
struct TransitionMatrix {
  std::vector<ForCode> rows;
  std::vector<ForCode> cols;
  std::vector<std::vector<double>> cells;

  double cell(const ForCode& r, const ForCode& c) const {
    auto ri = std::find(rows.begin(), rows.end(), r);
    auto ci = std::find(cols.begin(), cols.end(), c);
    if (ri == rows.end() || ci == cols.end()) return 0.0;
    return cells[static_cast<std::size_t>(ri - rows.begin())][static_cast<std::size_t>(ci - cols.begin())];
  }
};

namespace detail {

inline void order_by_bloc(std::vector<ForCode>& codes, const SchemeCatalog* catalog) {
  auto rank = [&](const ForCode& c) {
    if (!catalog) return 0;
    auto b = catalog->bloc(c);
    return b ? (*b == Bloc::STEM ? 0 : 1) : 2;
  };
  std::stable_sort(codes.begin(), codes.end(), [&](const ForCode& a, const ForCode& b) {
    auto ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a < b;
  });
}

}  // namespace detail

/// An object with old divisions R and m new divisions adds 1/m to every
/// (r, c) cell for r in R, so each non-empty row sums to 100. Objects with
/// no new codes contribute nothing; empty rows are omitted. Rows and
/// columns are ordered STEM, then HASS, then unclassified, by code.
inline TransitionMatrix transition_matrix(const AssignmentMap& old_labels, const AssignmentMap& new_labels,
                                          const SchemeCatalog* catalog = nullptr) {
  std::map<ForCode, std::map<ForCode, double>> raw;
  std::set<ForCode> cols;
  for (const auto& [id, old_codes] : old_labels) {
    auto it = new_labels.find(id);
    if (it == new_labels.end()) continue;
    std::set<ForCode> olds, news;
    for (const auto& c : old_codes) olds.insert(division_of(c));
    for (const auto& c : it->second) news.insert(division_of(c));
    if (olds.empty() || news.empty()) continue;
    const double w = 1.0 / static_cast<double>(news.size());
    for (const auto& r : olds) {
      for (const auto& c : news) {
        raw[r][c] += w;
        cols.insert(c);
      }
    }
  }
  TransitionMatrix m;
  for (const auto& [r, _] : raw) m.rows.push_back(r);
  m.cols.assign(cols.begin(), cols.end());
  detail::order_by_bloc(m.rows, catalog);
  detail::order_by_bloc(m.cols, catalog);
  for (const auto& r : m.rows) {
    const auto& row = raw[r];
    double sum = 0;
    for (const auto& [_, v] : row) sum += v;
    std::vector<double> cells;
    for (const auto& c : m.cols) {
      auto it = row.find(c);
      cells.push_back(it == row.end() ? 0.0 : 100.0 * it->second / sum);
    }
    m.cells.push_back(std::move(cells));
  }
  return m;
}

/// Top-k groups per journal among publications from `since_year` on;
/// ties go to the smaller code.
inline std::map<std::string, std::vector<ForCode>> journal_list(const AssignmentMap& assignments, const CorpusStore& store,
                                                                std::size_t top_k = 3, int since_year = 0) {
  std::map<std::string, std::map<ForCode, std::size_t>> counts;
  for (const auto& [id, p] : store.publications()) {
    if (!p.journal_id || p.year < since_year) continue;
    auto it = assignments.find(id);
    if (it == assignments.end()) continue;
    std::set<ForCode> groups;
    for (const auto& c : it->second) {
      if (c.level() != Level::Division) groups.insert(group_of(c));
    }
    for (const auto& g : groups) ++counts[*p.journal_id][g];
  }
  std::map<std::string, std::vector<ForCode>> out;
  for (const auto& [jid, hist] : counts) {
    std::vector<std::pair<ForCode, std::size_t>> v(hist.begin(), hist.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    auto& codes = out[jid];
    for (std::size_t i = 0; i < v.size() && i < top_k; ++i) codes.push_back(v[i].first);
  }
  return out;
}

// CSV renderings. Percentages use one decimal, half up.

inline void write_coverage_csv(const std::vector<CoverageRow>& old_rows, const std::vector<CoverageRow>& new_rows,
                               std::ostream& out) {
  out << "group,total,covered_2008,percent_2008,covered_2020,percent_2020\n";
  std::map<std::string, std::pair<const CoverageRow*, const CoverageRow*>> merged;
  std::vector<std::string> order;
  for (const auto& r : new_rows) {
    merged[r.group].second = &r;
    order.push_back(r.group);
  }
  for (const auto& r : old_rows) {
    if (!merged.count(r.group)) order.push_back(r.group);
    merged[r.group].first = &r;
  }
  for (const auto& g : order) {
    auto [o, n] = merged[g];
    auto total = n ? n->total : o->total;
    out << detail::csv_escape(g) << ',' << total << ',' << (o ? o->covered : 0) << ','
        << detail::percent_1dp(o ? o->covered : 0, total) << ',' << (n ? n->covered : 0) << ','
        << detail::percent_1dp(n ? n->covered : 0, total) << '\n';
  }
}

inline void write_distribution_csv(const std::vector<DistributionRow>& rows, std::ostream& out) {
  out << "division,name,count,percent\n";
  for (const auto& r : rows) {
    out << r.division.digits() << ',' << detail::csv_escape(r.name) << ',' << r.count << ',' << r.percent() << '\n';
  }
}

inline void write_transition_csv(const TransitionMatrix& m, std::ostream& out) {
  out << "from_2008";
  for (const auto& c : m.cols) out << ',' << c.digits();
  out << '\n';
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out << m.rows[i].digits();
    for (double v : m.cells[i]) out << ',' << detail::fixed_1dp(v);
    out << '\n';
  }
}

inline void write_journal_list_csv(const std::map<std::string, std::vector<ForCode>>& list, const CorpusStore& store,
                                   std::ostream& out) {
  out << "journal_id,title,rank,code\n";
  for (const auto& [jid, codes] : list) {
    auto it = store.journals().find(jid);
    std::string title = it == store.journals().end() ? "" : it->second.title;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      out << detail::csv_escape(jid) << ',' << detail::csv_escape(title) << ',' << (i + 1) << ',' << codes[i].digits() << '\n';
    }
  }
}

inline void write_folds_csv(const std::vector<FoldReport>& folds, std::ostream& out) {
  out << "fold,test_size,top1_accuracy,subset_accuracy,coverage,micro_precision,micro_recall,micro_f1,macro_precision,"
         "macro_recall,macro_f1\n";
  for (const auto& f : folds) {
    out << f.fold << ',' << f.test_size;
    for (double v : {f.top1_accuracy, f.subset_accuracy, f.coverage, f.micro_precision, f.micro_recall, f.micro_f1,
                     f.macro_precision, f.macro_recall, f.macro_f1}) {
      out << ',' << detail::format_double(v);
    }
    out << '\n';
  }
}

inline void write_fold_classes_csv(const std::vector<FoldReport>& folds, std::ostream& out) {
  out << "fold,code,tp,fp,fn,precision,recall,f1\n";
  for (const auto& f : folds) {
    for (const auto& [code, m] : f.per_class) {
      out << f.fold << ',' << code.digits() << ',' << m.tp << ',' << m.fp << ',' << m.fn << ','
          << detail::format_double(m.precision) << ',' << detail::format_double(m.recall) << ','
          << detail::format_double(m.f1) << '\n';
    }
  }
}

}  // namespace recat
