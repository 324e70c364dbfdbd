#pragma once

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recat/detail/csv.hpp"
#include "recat/detail/format.hpp"
#include "recat/error.hpp"

namespace recat::features {

/// Sits between title and abstract tokens; no n-gram spans it and the
/// tokenizer can never produce it.
inline constexpr std::string_view kFieldSeparator = "\x1f";

namespace detail_tok {

inline bool is_word_char(UChar32 c) {
  if (u_isalnum(c)) return true;
  auto cat = u_charType(c);
  return cat == U_NON_SPACING_MARK || cat == U_COMBINING_SPACING_MARK || cat == U_ENCLOSING_MARK;
}

inline void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace detail_tok

/// Case-folded word tokens: maximal runs of letters, digits and combining
/// marks. Everything else, hyphens included, separates tokens. Invalid
/// UTF-8 bytes act as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c >= 0 && detail_tok::is_word_char(c)) {
      detail_tok::append_utf8(current, u_foldCase(c, U_FOLD_CASE_DEFAULT));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Title tokens, the field separator, then abstract tokens.
inline std::vector<std::string> document_tokens(std::string_view title, std::string_view abstract) {
  auto tokens = tokenize(title);
  auto rest = tokenize(abstract);
  tokens.emplace_back(kFieldSeparator);
  tokens.insert(tokens.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));
  return tokens;
}

/// All n-grams for n in [1, max_n], space-joined, skipping any that touch
/// the field separator. Order follows position then n.
inline std::vector<std::string> ngrams(const std::vector<std::string>& tokens, int max_n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string gram;
    for (int k = 0; k < max_n && i + static_cast<std::size_t>(k) < tokens.size(); ++k) {
      const auto& t = tokens[i + static_cast<std::size_t>(k)];
      if (t == kFieldSeparator) break;
      if (k) gram.push_back(' ');
      gram += t;
      out.push_back(gram);
    }
  }
  return out;
}

/// Returns true when `phrase` occurs as a contiguous token run in `tokens`.
inline bool contains_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) != tokens.end();
}

struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index
  std::size_t dimension = 0;

  bool empty() const noexcept { return entries.empty(); }

  double norm() const {
    double s = 0;
    for (const auto& [_, v] : entries) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// n-gram terms in lexicographic order with their document frequencies.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::string> terms, std::vector<std::uint32_t> df, std::uint64_t n_docs, int max_n, int min_df)
      : terms_(std::move(terms)), df_(std::move(df)), n_docs_(n_docs), max_n_(max_n), min_df_(min_df) {
    if (terms_.size() != df_.size()) throw Error(Errc::DimensionMismatch, "vocabulary terms/df length mismatch");
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
  }

  std::size_t size() const noexcept { return terms_.size(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::uint32_t document_frequency(std::size_t i) const { return df_.at(i); }
  std::uint64_t n_docs() const noexcept { return n_docs_; }
  int max_n() const noexcept { return max_n_; }
  int min_df() const noexcept { return min_df_; }

  std::optional<std::uint32_t> index_of(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Smoothed idf: ln((1 + n_docs) / (1 + df)) + 1.
  double idf(std::size_t i) const {
    return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_.at(i)))) + 1.0;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint32_t> df_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::uint64_t n_docs_ = 0;
  int max_n_ = 2;
  int min_df_ = 2;
};

/// `docs` are token lists (see document_tokens). Each n-gram counts at most
/// once per document toward its df.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, int max_n = 2, int min_df = 2) {
  if (docs.empty()) throw Error(Errc::EmptyCorpus, "cannot build a vocabulary from zero documents");
  if (max_n < 1 || min_df < 1) throw Error(Errc::InvalidConfig, "max_n and min_df must be >= 1");
  std::map<std::string, std::uint32_t> counts;
  for (const auto& doc : docs) {
    auto grams = ngrams(doc, max_n);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    for (auto& g : grams) ++counts[std::move(g)];
  }
  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  for (auto& [term, c] : counts) {
    if (c < static_cast<std::uint32_t>(min_df)) continue;
    terms.push_back(term);
    df.push_back(c);
  }
  return Vocabulary(std::move(terms), std::move(df), docs.size(), max_n, min_df);
}

/// Raw-count tf times smoothed idf, L2-normalized. Unknown terms are ignored.
inline SparseVector vectorize(const std::vector<std::string>& doc, const Vocabulary& vocab) {
  std::map<std::uint32_t, double> tf;
  for (const auto& g : ngrams(doc, vocab.max_n())) {
    if (auto idx = vocab.index_of(g)) tf[*idx] += 1.0;
  }
  SparseVector v;
  v.dimension = vocab.size();
  v.entries.reserve(tf.size());
  double sq = 0;
  for (const auto& [i, count] : tf) {
    double w = count * vocab.idf(i);
    v.entries.emplace_back(i, w);
    sq += w * w;
  }
  if (sq > 0) {
    double inv = 1.0 / std::sqrt(sq);
    for (auto& [_, w] : v.entries) w *= inv;
  }
  return v;
}

inline void write_vocabulary(const Vocabulary& vocab, std::ostream& out) {
  out << "#n_docs=" << vocab.n_docs() << ",max_n=" << vocab.max_n() << ",min_df=" << vocab.min_df() << '\n';
  out << "term,index,df\n";
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << detail::csv_escape(vocab.terms()[i]) << ',' << i << ',' << vocab.document_frequency(i) << '\n';
  }
}

inline Vocabulary read_vocabulary(std::string_view text) {
  auto nl = text.find('\n');
  if (nl == std::string_view::npos || text.substr(0, 1) != "#") {
    throw Error(Errc::MalformedRecord, "vocabulary: missing metadata line");
  }
  std::uint64_t n_docs = 0;
  int max_n = 0, min_df = 0;
  {
    std::string meta(text.substr(1, nl - 1));
    const auto meta_rows = detail::parse_csv(meta);
    if (meta_rows.empty()) throw Error(Errc::MalformedRecord, "vocabulary: empty metadata line");
    for (const auto& part : meta_rows.front().fields) {
      auto eq = part.find('=');
      if (eq == std::string::npos) throw Error(Errc::MalformedRecord, "vocabulary: bad metadata '" + part + "'");
      auto key = part.substr(0, eq);
      auto val = part.substr(eq + 1);
      if (key == "n_docs") n_docs = std::stoull(val);
      else if (key == "max_n") max_n = std::stoi(val);
      else if (key == "min_df") min_df = std::stoi(val);
    }
  }
  auto rows = detail::parse_csv(text.substr(nl + 1), "vocabulary");
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"term", "index", "df"}) {
    throw Error(Errc::MalformedRecord, "vocabulary: expected header term,index,df");
  }
  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 3 || std::stoull(f[1]) != r - 1) {
      throw Error(Errc::MalformedRecord, "vocabulary: row " + std::to_string(r) + " out of order");
    }
    terms.push_back(f[0]);
    df.push_back(static_cast<std::uint32_t>(std::stoul(f[2])));
  }
  return Vocabulary(std::move(terms), std::move(df), n_docs, max_n, min_df);
}

}  // namespace recat::features
