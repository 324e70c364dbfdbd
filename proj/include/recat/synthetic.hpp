#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recat/detail/csv.hpp"
#include "recat/detail/random.hpp"

// A small, fully synthetic corpus shaped like the real problem: a 2008 and
// a 2020 taxonomy with direct, split, deleted and new codes; grants coded
// at field level; journals named after their field; citation clusters that
// follow topics; a noisy baseline classification; contributed rows; keyword
// queries and curation overrides. Deterministic for a given seed.
namespace recat::synthetic {

struct FieldSpec {
  const char* code_2008;
  const char* name_2008;
  const char* targets_2020;  // space-separated 6-digit targets, empty = deleted
};

struct GroupSpec {
  const char* code;
  const char* name;
};

inline const std::vector<GroupSpec>& divisions_2008() {
  static const std::vector<GroupSpec> v = {{"01", "Mathematical Sciences"},
                                           {"06", "Biological Sciences"},
                                           {"10", "Technology"},
                                           {"11", "Medical and Health Sciences"},
                                           {"17", "Psychology and Cognitive Sciences"}};
  return v;
}

inline const std::vector<GroupSpec>& groups_2008() {
  static const std::vector<GroupSpec> v = {{"0101", "Pure Mathematics"},
                                           {"0102", "Applied Mathematics"},
                                           {"0601", "Biochemistry and Cell Biology"},
                                           {"0605", "Microbiology"},
                                           {"1005", "Communications Technologies"},
                                           {"1006", "Computer Hardware"},
                                           {"1108", "Medical Microbiology"},
                                           {"1117", "Public Health and Health Services"},
                                           {"1701", "Psychology"},
                                           {"1702", "Cognitive Sciences"}};
  return v;
}

inline const std::vector<FieldSpec>& fields_2008() {
  static const std::vector<FieldSpec> v = {
      {"010101", "Algebra and Number Theory", "490401"},
      {"010102", "Algebraic and Differential Geometry", "490402"},
      {"010201", "Approximation Theory and Asymptotic Methods", "490101"},
      {"010202", "Biological Mathematics", "490102"},
      {"060101", "Analytical Biochemistry", "310101"},
      {"060102", "Bioinformatics", "310102"},
      {"060501", "Bacteriology", "310701"},
      {"060502", "Infectious Agents", "310702 320702"},
      {"100501", "Antennas and Propagation", "400601"},
      {"100503", "Computer Communications Networks", "460605"},
      {"100604", "Memory Structures", "400906"},
      {"100605", "Performance Evaluation", "460606"},
      {"100699", "Computer Hardware not elsewhere classified", ""},
      {"110801", "Medical Bacteriology", "320701"},
      {"110803", "Medical Virology", "320704"},
      {"111706", "Epidemiology", "420202"},
      {"111712", "Environmental and Occupational Health and Safety", "420203"},
      {"170101", "Biological Psychology", "520201"},
      {"170102", "Developmental Psychology and Ageing", "520101"},
      {"170106", "Health Clinical and Counselling Psychology", "320221"},
      {"170203", "Knowledge Representation and Machine Learning", "461103"},
      {"170204", "Linguistic Processes", "520401"},
  };
  return v;
}

inline const std::vector<GroupSpec>& divisions_2020() {
  static const std::vector<GroupSpec> v = {{"31", "Biological Sciences"},
                                           {"32", "Biomedical and Clinical Sciences"},
                                           {"40", "Engineering"},
                                           {"42", "Health Sciences"},
                                           {"46", "Information and Computing Sciences"},
                                           {"49", "Mathematical Sciences"},
                                           {"52", "Psychology"}};
  return v;
}

struct TopicSpec {
  const char* code;
  const char* name;
  const char* words;  // topical vocabulary
};

inline const std::vector<TopicSpec>& groups_2020() {
  static const std::vector<TopicSpec> v = {
      {"3101", "Biochemistry and Cell Biology",
       "protein enzyme kinase metabolite cell membrane mitochondria assay peptide folding ligand sequencing"},
      {"3107", "Microbiology", "bacteria microbial culture strain biofilm colony plasmid phage fungal yeast soil isolate"},
      {"3202", "Clinical Sciences", "psychiatric patients depression clinical therapy counselling anxiety disorder treatment trial psychotherapy symptoms"},
      {"3207", "Medical Microbiology", "pathogen virus viral infection antibiotic resistance hospital vaccine antimicrobial outbreak clinical isolates"},
      {"4006", "Communications Engineering", "antenna propagation wireless signal radio frequency channel modulation beamforming spectrum transmitter receiver"},
      {"4009", "Electronics Sensors and Digital Hardware", "memory circuit transistor chip cache dram voltage fpga hardware logic silicon processor"},
      {"4202", "Epidemiology", "cohort incidence prevalence mortality risk surveillance population exposure occupational environmental health survey"},
      {"4606", "Distributed Computing and Systems Software", "network routing protocol latency throughput cloud cluster server benchmark performance scheduling packet"},
      {"4611", "Machine Learning", "learning neural deep training classifier gradient model embedding representation dataset inference transformer"},
      {"4901", "Applied Mathematics", "approximation asymptotic numerical equation differential population dynamics model expansion convergence error biological"},
      {"4904", "Pure Mathematics", "algebra group ring prime theorem manifold curvature geometry number field conjecture proof"},
      {"5201", "Applied and Developmental Psychology", "children adolescents development ageing parenting infants cognitive growth lifespan school family longitudinal"},
      {"5202", "Biological Psychology", "brain neural cortex hormone stress physiological eeg amygdala neuroimaging arousal reward sleep"},
      {"5204", "Cognitive and Computational Psychology", "language reading speech linguistic word sentence comprehension memory attention perception bilingual grammar"},
  };
  return v;
}

inline const std::vector<FieldSpec>& fields_2020() {
  // code, name, unused
  static const std::vector<FieldSpec> v = {
      {"310101", "Analytical Biochemistry", ""},
      {"310102", "Bioinformatics and Computational Biology", ""},
      {"310701", "Bacteriology", ""},
      {"310702", "Infectious Agents", ""},
      {"320221", "Psychiatry", ""},
      {"320701", "Medical Bacteriology", ""},
      {"320702", "Medical Infection Agents", ""},
      {"320704", "Medical Virology", ""},
      {"400601", "Antennas and Propagation", ""},
      {"400906", "Digital Electronic Devices", ""},
      {"420202", "Disease Surveillance", ""},
      {"420203", "Environmental Epidemiology", ""},
      {"460605", "Networking and Communications", ""},
      {"460606", "Performance Evaluation", ""},
      {"461103", "Deep Learning", ""},
      {"461104", "Neural Networks", ""},
      {"490101", "Approximation Theory and Asymptotic Methods", ""},
      {"490102", "Biological Mathematics", ""},
      {"490401", "Algebra and Number Theory", ""},
      {"490402", "Algebraic and Differential Geometry", ""},
      {"520101", "Child and Adolescent Development", ""},
      {"520201", "Behavioural Neuroscience", ""},
      {"520401", "Psycholinguistics", ""},
  };
  return v;
}

inline constexpr const char* kFiller =
    "study analysis results approach method data evidence effect role impact new novel based using towards "
    "framework review investigation assessment characterisation observations comparison";

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct Options {
  std::uint64_t seed = 7;
  std::size_t pubs_per_group = 40;
};

/// Writes the fixture files and a ready-to-run `recat.conf` into `dir`.
inline void write_fixture(const std::filesystem::path& dir, const Options& opt = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::mt19937_64 rng(opt.seed);
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& {
    return v[static_cast<std::size_t>(recat::detail::bounded(rng, v.size()))];
  };
  auto chance = [&](unsigned percent) { return recat::detail::bounded(rng, 100) < percent; };

  // Taxonomy files.
  {
    std::ostringstream cat;
    cat << "scheme,code,name\n";
    for (const auto& d : divisions_2008()) cat << "2008," << d.code << ',' << recat::detail::csv_escape(d.name) << '\n';
    for (const auto& g : groups_2008()) cat << "2008," << g.code << ',' << recat::detail::csv_escape(g.name) << '\n';
    for (const auto& f : fields_2008()) cat << "2008," << f.code_2008 << ',' << recat::detail::csv_escape(f.name_2008) << '\n';
    for (const auto& d : divisions_2020()) cat << "2020," << d.code << ',' << recat::detail::csv_escape(d.name) << '\n';
    for (const auto& g : groups_2020()) cat << "2020," << g.code << ',' << recat::detail::csv_escape(g.name) << '\n';
    for (const auto& f : fields_2020()) cat << "2020," << f.code_2008 << ',' << recat::detail::csv_escape(f.name_2008) << '\n';
    recat::detail::write_file(dir / "catalog.csv", cat.str());

    recat::detail::write_file(dir / "stem_hass.csv",
                              "scheme,division,bloc\n2008,01,STEM\n2008,06,STEM\n2008,10,STEM\n2008,11,STEM\n2008,17,HASS\n"
                              "2020,31,STEM\n2020,32,STEM\n2020,40,STEM\n2020,42,STEM\n2020,46,STEM\n2020,49,STEM\n"
                              "2020,52,HASS\n");
    std::ostringstream corr;
    corr << "source_2008,target_2020\n";
    for (const auto& f : fields_2008()) {
      auto targets = split_words(f.targets_2020);
      if (targets.empty()) corr << f.code_2008 << ",\n";
      for (const auto& t : targets) corr << f.code_2008 << ',' << t << '\n';
    }
    recat::detail::write_file(dir / "correspondence.csv", corr.str());
    recat::detail::write_file(dir / "new_codes_2020.csv", "code_2020\n461104\n");
  }

  // Source fields feeding each 2020 group (first Direct target's group).
  std::map<std::string, std::vector<std::string>> sources;
  for (const auto& f : fields_2008()) {
    auto targets = split_words(f.targets_2020);
    if (!targets.empty()) sources[targets.front().substr(0, 4)].push_back(f.code_2008);
  }

  // Journals: one or two per 2008 group plus general titles.
  std::vector<std::pair<std::string, std::string>> journals;
  std::map<std::string, std::vector<std::string>> journals_for_group;
  int jn = 0;
  for (const auto& g : groups_2008()) {
    for (const char* pattern : {"Journal of ", "International Journal of "}) {
      auto id = "J" + std::to_string(++jn);
      journals.emplace_back(id, std::string(pattern) + g.name);
      journals_for_group[g.code].push_back(id);
    }
  }
  const std::vector<std::string> general = {"J90", "J91"};
  journals.emplace_back("J90", "Nature Letters");
  journals.emplace_back("J91", "Proceedings of the Academy: Science & Society");
  {
    std::ostringstream js;
    js << "id,title\n";
    for (const auto& [id, title] : journals) js << id << ',' << recat::detail::csv_escape(title) << '\n';
    recat::detail::write_file(dir / "journals.csv", js.str());
  }

  const auto filler = split_words(kFiller);
  std::ostringstream pubs, grants, clusters, baseline, contributed;
  clusters << "doi,cluster_id\n";
  baseline << "publication_id,code_2008_4digit\n";
  contributed << "publication_id,code_2008\n";

  // Grants: a pool per source field.
  std::map<std::string, std::vector<std::string>> grants_for_field;
  int gn = 0;
  for (const auto& f : fields_2008()) {
    std::vector<std::string> words;
    auto targets = split_words(f.targets_2020);
    for (const auto& t : groups_2020()) {
      if (!targets.empty() && targets.front().substr(0, 4) == t.code) words = split_words(t.words);
    }
    if (words.empty()) words = filler;
    for (int k = 0; k < 4; ++k) {
      auto id = "G" + std::to_string(++gn);
      grants_for_field[f.code_2008].push_back(id);
      std::string title = pick(words) + " " + pick(words) + " " + pick(filler);
      std::string abstract;
      for (int w = 0; w < 12; ++w) abstract += (w ? " " : "") + pick(words);
      nlohmann::json g{{"id", id}, {"funder", k % 2 ? "NHMRC" : "ARC"}, {"title", title}, {"abstract", abstract},
                       {"codes_2008", {f.code_2008}}};
      grants << g.dump() << '\n';
    }
  }

  const char* record_types[] = {"article", "article", "article", "article", "proceeding", "chapter", "preprint", "monograph"};
  int pn = 0;
  const auto& topics = groups_2020();
  for (std::size_t ti = 0; ti < topics.size(); ++ti) {
    const auto& topic = topics[ti];
    const auto words = split_words(topic.words);
    const auto& srcs = sources[topic.code];
    for (std::size_t k = 0; k < opt.pubs_per_group; ++k) {
      auto id = "P" + std::to_string(++pn);
      const std::string field = srcs[k % srcs.size()];
      const std::string group = field.substr(0, 4);
      // Topic-coherent citation clusters: two per 2020 group, keyed also by
      // source field so split rules have something to find.
      const auto cluster = static_cast<std::int64_t>(100 * (ti + 1) + (k % srcs.size()) * 10 + (k % 2));

      // Occasionally a second topic for multi-label publications.
      const TopicSpec* second = chance(8) ? &topics[(ti + 1 + recat::detail::bounded(rng, topics.size() - 1)) % topics.size()] : nullptr;
      auto second_words = second ? split_words(second->words) : std::vector<std::string>{};

      std::string title;
      for (int w = 0; w < 5; ++w) title += (w ? " " : "") + (w == 2 ? pick(filler) : pick(words));
      if (second) title += " and " + pick(second_words) + " " + pick(second_words);
      std::string abstract;
      for (int w = 0; w < 24; ++w) {
        const auto& bank = (second && w % 3 == 0) ? second_words : (w % 4 == 3 ? filler : words);
        abstract += (w ? " " : "") + pick(bank);
      }
      if (chance(5)) abstract.clear();

      nlohmann::json p;
      p["id"] = id;
      bool has_doi = !chance(5);
      p["doi"] = has_doi ? nlohmann::json("10.9999/syn." + std::to_string(pn)) : nlohmann::json();
      p["title"] = title;
      p["abstract"] = abstract;
      p["year"] = 1991 + static_cast<int>(recat::detail::bounded(rng, 30));
      p["record_type"] = record_types[recat::detail::bounded(rng, 8)];
      if (chance(65)) {
        p["journal_id"] = pick(journals_for_group[group]);
      } else if (chance(50)) {
        p["journal_id"] = pick(general);
      } else {
        p["journal_id"] = nullptr;
      }
      std::vector<std::string> gids;
      if (chance(75)) gids.push_back(pick(grants_for_field[field]));
      if (chance(6)) {
        // Off-topic acknowledgement; the cluster filter should reject it.
        const auto& other = fields_2008()[recat::detail::bounded(rng, fields_2008().size())];
        const auto& g = pick(grants_for_field[other.code_2008]);
        if (std::find(gids.begin(), gids.end(), g) == gids.end()) gids.push_back(g);
      }
      if (pn == 3) gids.push_back("G-missing");
      p["grant_ids"] = gids;
      p["cluster_id"] = nullptr;
      pubs << p.dump() << '\n';

      if (has_doi && !chance(4)) clusters << "10.9999/syn." << pn << ',' << cluster << '\n';
      if (chance(85)) {
        std::string code = group;
        if (chance(4)) code = groups_2008()[recat::detail::bounded(rng, groups_2008().size())].code;
        baseline << id << ',' << code << '\n';
      }
      if (chance(12)) contributed << id << ',' << field << '\n';
    }
  }
  recat::detail::write_file(dir / "publications.jsonl", pubs.str());
  recat::detail::write_file(dir / "grants.jsonl", grants.str());
  recat::detail::write_file(dir / "clusters.csv", clusters.str());
  recat::detail::write_file(dir / "baseline.csv", baseline.str());
  recat::detail::write_file(dir / "contributed.csv", contributed.str());

  recat::detail::write_file(dir / "queries.jsonl",
                            "{\"target_code\":\"4611\",\"must\":[],\"any\":[\"deep learning\",\"neural classifier\"],"
                            "\"not\":[\"brain\"],\"fields\":[\"title\",\"abstract\"]}\n"
                            "{\"target_code\":\"461104\",\"must\":[\"neural\"],\"any\":[\"training\",\"gradient\"],"
                            "\"not\":[\"cortex\",\"eeg\"],\"fields\":[\"title\"]}\n");
  recat::detail::write_file(dir / "overrides.csv",
                            "publication_id,code_2020,action\nP1,3101,add\nP2,4904,remove\nP5,3107,add\n");

  recat::detail::write_file(dir / "recat.conf",
                            "# Synthetic fixture configuration. Paths are relative to this file.\n"
                            "catalog = catalog.csv\n"
                            "stem_hass = stem_hass.csv\n"
                            "correspondence = correspondence.csv\n"
                            "new_codes = new_codes_2020.csv\n"
                            "publications = publications.jsonl\n"
                            "grants = grants.jsonl\n"
                            "journals = journals.csv\n"
                            "clusters = clusters.csv\n"
                            "baseline = baseline.csv\n"
                            "contributed = contributed.csv\n"
                            "queries = queries.jsonl\n"
                            "overrides = overrides.csv\n"
                            "seed = 20220801\n"
                            "filter_threshold = 0.01\n"
                            "min_support = 5\n"
                            "shaping = proportional\n"
                            "shaping_cap_percentile = 0.95\n"
                            "shaping_floor = 10\n"
                            "max_n = 2\n"
                            "min_df = 2\n"
                            "lambda = 0.0001\n"
                            "epochs = 10\n"
                            "cv_folds = 3\n"
                            "journal_top_k = 3\n"
                            "journal_since_year = 2011\n");
}

}  // namespace recat::synthetic
