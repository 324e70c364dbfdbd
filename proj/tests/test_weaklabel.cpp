#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "recat/weaklabel.hpp"
#include "support/adapters.hpp"
#include "support/oracles.hpp"
#include "support/scratch.hpp"

using namespace recat;
using recat_test::c08;
using recat_test::c20;
using recat_test::error_code;

namespace {

Publication pub(const std::string& id, std::vector<std::string> grants = {}, std::optional<std::string> journal = {},
                std::optional<std::string> doi = {}) {
  Publication p;
  p.id = id;
  p.doi = std::move(doi);
  p.title = "t";
  p.year = 2010;
  p.journal_id = std::move(journal);
  p.grant_ids = std::move(grants);
  return p;
}

Grant grant(const std::string& id, std::vector<std::string> codes) {
  Grant g;
  g.id = id;
  for (const auto& c : codes) g.codes_2008.push_back(c08(c));
  return g;
}

std::set<std::pair<std::string, std::string>> pairs(const std::vector<LabeledExample>& v) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& ex : v) out.emplace(ex.publication_id, ex.code.digits());
  return out;
}

}  // namespace

TEST(PropagateGrantCodes, GroupOfGrantField) {
  CorpusStore store;
  store.put_grant(grant("g1", {"110803"}));
  store.put_publication(pub("p", {"g1"}));
  auto out = propagate_grant_codes(store);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].code.digits(), "1108");
  EXPECT_EQ(out[0].provenance, Provenance::GrantPropagation);
  EXPECT_EQ(out[0].filtered, FilterStatus::Unfiltered);
}

TEST(PropagateGrantCodes, UnionOverGrantLinksMatchesBruteForce) {
  // Five-record fixture; the expected set is the brute-force union of
  // truncated grant codes over every link.
  CorpusStore store;
  std::map<std::string, std::vector<std::string>> grant_codes = {
      {"g1", {"110803"}}, {"g2", {"060101"}}, {"g3", {"110801", "060102"}}};
  for (const auto& [id, codes] : grant_codes) store.put_grant(grant(id, codes));
  std::map<std::string, std::vector<std::string>> links = {{"a", {"g1", "g2"}}, {"b", {"g3", "g1"}}};
  for (const auto& [id, gids] : links) store.put_publication(pub(id, gids));

  std::set<std::pair<std::string, std::string>> expected;
  for (const auto& [p, gids] : links) {
    for (const auto& g : gids) {
      for (const auto& c : grant_codes[g]) expected.emplace(p, c.substr(0, 4));
    }
  }
  auto out = propagate_grant_codes(store);
  EXPECT_EQ(pairs(out), expected);
  EXPECT_EQ(out.size(), expected.size());  // no duplicate (pub, code)
  std::set<std::pair<std::string, std::string>> a_codes;
  for (const auto& e : expected) {
    if (e.first == "a") a_codes.insert(e);
  }
  EXPECT_EQ(a_codes, (std::set<std::pair<std::string, std::string>>{{"a", "0601"}, {"a", "1108"}}));
}

TEST(PropagateGrantCodes, NoGrantsNoExamples) {
  CorpusStore store;
  store.put_publication(pub("p"));
  EXPECT_TRUE(propagate_grant_codes(store).empty());
}

TEST(PropagateGrantCodes, DanglingReferenceIsReportedNotFatal) {
  CorpusStore store;
  store.put_grant(grant("g1", {"110803"}));
  store.put_publication(pub("p", {"g1", "missing"}));
  Diagnostics diag;
  auto out = propagate_grant_codes(store, &diag);
  EXPECT_EQ(out.size(), 1u);
  ASSERT_EQ(diag.warnings.size(), 1u);
  EXPECT_NE(diag.warnings[0].find("DanglingGrantRef"), std::string::npos);
}

TEST(PropagateGrantCodes, OnlyGroupLevelCodes) {
  std::mt19937_64 rng(3);
  CorpusStore store;
  for (int g = 0; g < 30; ++g) {
    std::vector<std::string> codes;
    for (int k = 0; k < 3; ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%06d", static_cast<int>(rng() % 999999));
      codes.push_back(buf);
    }
    store.put_grant(grant("g" + std::to_string(g), codes));
  }
  for (int p = 0; p < 50; ++p) store.put_publication(pub("p" + std::to_string(p), {"g" + std::to_string(p % 30)}));
  for (const auto& ex : propagate_grant_codes(store)) EXPECT_EQ(ex.code.level(), Level::Group);
}

TEST(ClusterCodeShare, FourOfTwoHundred) {
  BaselineLabels baseline;
  ClusterMap clusters;
  for (int i = 0; i < 200; ++i) {
    auto id = "p" + std::to_string(i);
    baseline.emplace(id, c08("1108"));
    clusters[id] = i < 4 ? 7 : 100 + i % 13;
  }
  // Unclustered baseline publications do not count.
  baseline.emplace("loose", c08("1108"));
  const double expected = 4.0 / 200.0;
  EXPECT_DOUBLE_EQ(cluster_code_share(c08("1108"), 7, baseline, clusters), expected);
  EXPECT_DOUBLE_EQ(expected, 0.02);
}

TEST(ClusterCodeShare, AllInOneCluster) {
  BaselineLabels baseline{{"a", c08("1108")}, {"b", c08("1108")}};
  ClusterMap clusters{{"a", 3}, {"b", 3}};
  EXPECT_EQ(cluster_code_share(c08("1108"), 3, baseline, clusters), 1.0);
}

TEST(ClusterCodeShare, NoBaseline) {
  BaselineLabels baseline{{"a", c08("0601")}};
  ClusterMap clusters{{"a", 3}};
  EXPECT_EQ(error_code([&] { cluster_code_share(c08("1108"), 3, baseline, clusters); }), Errc::NoBaselineForCode);
}

TEST(ClusterCodeShare, SharesSumToOneOverClusters) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto in = recat_test::to_library(oracle::random_filter_fixture(seed, 400));
    std::set<ClusterId> all;
    for (const auto& [_, c] : in.clusters) all.insert(c);
    std::set<ForCode> codes;
    for (const auto& [_, c] : in.baseline) codes.insert(c);
    for (const auto& code : codes) {
      double sum = 0;
      bool any = false;
      for (auto c : all) {
        try {
          sum += cluster_code_share(code, c, in.baseline, in.clusters);
          any = true;
        } catch (const Error&) {
        }
      }
      if (any) {
        EXPECT_NEAR(sum, 1.0, 1e-9) << code;
      }
    }
  }
}

namespace {

// Baseline with `in` of `total` publications for 1108 in cluster 1.
void share_fixture(int in, int total, BaselineLabels& baseline, ClusterMap& clusters) {
  for (int i = 0; i < total; ++i) {
    auto id = "b" + std::to_string(i);
    baseline.emplace(id, c08("1108"));
    clusters[id] = i < in ? 1 : 2 + i;
  }
}

}  // namespace

TEST(FilterByCluster, AboveThresholdAccepted) {
  BaselineLabels baseline;
  ClusterMap clusters;
  share_fixture(2, 100, baseline, clusters);
  clusters["cand"] = 1;
  auto d = filter_by_cluster({{"cand", c08("1108"), Provenance::JournalTitle}}, baseline, clusters, 0.01);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].example.filtered, FilterStatus::Accepted);
  EXPECT_DOUBLE_EQ(*d[0].share, 0.02);
  EXPECT_EQ(d[0].cluster_id, 1);
}

TEST(FilterByCluster, ExactlyThresholdRejected) {
  for (int total : {100, 200, 300, 500, 1000}) {
    BaselineLabels baseline;
    ClusterMap clusters;
    share_fixture(total / 100, total, baseline, clusters);
    clusters["cand"] = 1;
    auto d = filter_by_cluster({{"cand", c08("1108"), Provenance::GrantPropagation}}, baseline, clusters, 0.01);
    EXPECT_EQ(d[0].example.filtered, FilterStatus::Rejected) << total;
  }
}

TEST(FilterByCluster, UnknownClusterOrNoBaselineIsUnfilteredAndRetained) {
  BaselineLabels baseline;
  ClusterMap clusters;
  share_fixture(5, 10, baseline, clusters);
  clusters["clustered"] = 1;
  auto d = filter_by_cluster({{"no-doi", c08("1108"), Provenance::GrantPropagation},
                              {"clustered", c08("0601"), Provenance::GrantPropagation}},
                             baseline, clusters);
  ASSERT_EQ(d.size(), 2u);
  for (const auto& x : d) {
    EXPECT_EQ(x.example.filtered, FilterStatus::Unfiltered);
    EXPECT_FALSE(x.share.has_value());
  }
  EXPECT_EQ(decided_labels(d).size(), 2u);
  EXPECT_TRUE(decided_labels(d, true).empty());
}

TEST(FilterByCluster, DecisionInvariants) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto in = recat_test::to_library(oracle::random_filter_fixture(seed));
    for (const auto& d : filter_by_cluster(in.candidates, in.baseline, in.clusters)) {
      switch (d.example.filtered) {
        case FilterStatus::Accepted: EXPECT_GT(*d.share, d.threshold); break;
        case FilterStatus::Rejected: EXPECT_LE(*d.share, d.threshold); break;
        case FilterStatus::Unfiltered: EXPECT_TRUE(!d.cluster_id || !d.share); break;
      }
    }
  }
}

TEST(FilterByCluster, IndependentOfCandidateOrder) {
  std::mt19937 rng(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto in = recat_test::to_library(oracle::random_filter_fixture(seed));
    auto a = decided_labels(filter_by_cluster(in.candidates, in.baseline, in.clusters));
    std::shuffle(in.candidates.begin(), in.candidates.end(), rng);
    auto b = decided_labels(filter_by_cluster(in.candidates, in.baseline, in.clusters));
    EXPECT_EQ(a, b);
  }
}

TEST(FilterByCluster, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    auto fx = oracle::random_filter_fixture(seed);
    auto in = recat_test::to_library(fx);
    auto expected = oracle::brute_force_filter(fx, 1, 100);
    auto got = filter_by_cluster(in.candidates, in.baseline, in.clusters, 0.01);
    ASSERT_EQ(got.size(), expected.size());
    for (const auto& d : got) {
      auto v = expected.at({d.example.publication_id, d.example.code.digits()});
      auto want = v == oracle::Verdict::Accepted   ? FilterStatus::Accepted
                  : v == oracle::Verdict::Rejected ? FilterStatus::Rejected
                                                   : FilterStatus::Unfiltered;
      EXPECT_EQ(d.example.filtered, want) << d.example.publication_id << " " << d.example.code;
    }
  }
}

namespace {

SchemeCatalog small_catalog() {
  SchemeCatalog cat;
  for (auto [code, name] : std::vector<std::pair<const char*, const char*>>{
           {"11", "Medical and Health Sciences"},
           {"1108", "Medical Microbiology"},
           {"1103", "Clinical Sciences"},
           {"06", "Biological Sciences"},
           {"0605", "Microbiology"},
           {"1199", "Infectious Diseases"}}) {
    cat.add(c08(code), name);
  }
  return cat;
}

}  // namespace

TEST(JournalTitleCandidates, MedicalMicrobiologyJournal) {
  CorpusStore store;
  store.put_journal({"j", "International Journal of Medical Microbiology"});
  store.put_publication(pub("p1", {}, "j"));
  store.put_publication(pub("p2", {}, "j"));
  auto out = journal_title_candidates(store, small_catalog());
  auto got = pairs(out);
  EXPECT_TRUE(got.count({"p1", "1108"}));
  EXPECT_TRUE(got.count({"p2", "1108"}));
  for (const auto& ex : out) EXPECT_EQ(ex.provenance, Provenance::JournalTitle);
}

TEST(JournalTitleCandidates, CompoundTitleMatchesEveryName) {
  CorpusStore store;
  store.put_journal({"j", "Journal of Medical Microbiology and Infectious Diseases"});
  store.put_publication(pub("p", {}, "j"));
  auto got = pairs(journal_title_candidates(store, small_catalog()));
  EXPECT_TRUE(got.count({"p", "1108"}));
  EXPECT_TRUE(got.count({"p", "1199"}));
  EXPECT_FALSE(got.count({"p", "1103"}));
}

TEST(JournalTitleCandidates, GeneralTitleNoCandidates) {
  CorpusStore store;
  store.put_journal({"j", "Nature"});
  store.put_publication(pub("p", {}, "j"));
  EXPECT_TRUE(journal_title_candidates(store, small_catalog()).empty());
}

TEST(JournalTitleCandidates, CaseAndPunctuationInsensitiveContiguous) {
  CorpusStore store;
  store.put_journal({"a", "MEDICAL-MICROBIOLOGY: letters"});
  store.put_journal({"b", "Medical Reviews in Microbiology"});
  store.put_publication(pub("pa", {}, "a"));
  store.put_publication(pub("pb", {}, "b"));
  auto got = pairs(journal_title_candidates(store, small_catalog()));
  EXPECT_TRUE(got.count({"pa", "1108"}));
  EXPECT_FALSE(got.count({"pb", "1108"}));
  EXPECT_TRUE(got.count({"pb", "0605"}));
}

TEST(ImportContributed, CoarsensDedupsAndWarns) {
  recat_test::Scratch dir;
  CorpusStore store;
  store.put_publication(pub("pub1"));
  store.put_publication(pub("pub2"));
  auto path = dir.file("c.csv", "publication_id,code_2008\npub1,110803\npub1,110801\npub2,0601\nghost,110803\n");
  Diagnostics diag;
  auto out = import_contributed(path, store, &diag);
  EXPECT_EQ(pairs(out), (std::set<std::pair<std::string, std::string>>{{"pub1", "1108"}, {"pub2", "0601"}}));
  EXPECT_EQ(out.size(), 2u);
  for (const auto& ex : out) EXPECT_EQ(ex.provenance, Provenance::Contributed);
  EXPECT_EQ(diag.warnings.size(), 2u);  // 4-digit row and unknown publication
}

TEST(ImportContributed, MalformedRows) {
  recat_test::Scratch dir;
  CorpusStore store;
  store.put_publication(pub("p"));
  EXPECT_EQ(error_code([&] { import_contributed(dir.file("a.csv", "publication_id,code_2008\np,11x803\n"), store); }),
            Errc::MalformedRow);
  EXPECT_EQ(error_code([&] { import_contributed(dir.file("b.csv", "publication_id,code_2008\np,11\n"), store); }),
            Errc::MalformedRow);
  EXPECT_EQ(error_code([&] { import_contributed(dir.file("c.csv", "publication_id,code_2008\np\n"), store); }),
            Errc::MalformedRow);
}

TEST(Labels, JsonlRoundTrip) {
  std::vector<LabeledExample> labels = {
      {"a", c08("1108"), Provenance::GrantPropagation, 1.0, FilterStatus::Accepted, 0.25, 4},
      {"a", c20("3207"), Provenance::Remapped, 0.5, FilterStatus::Unfiltered, {}, {}, c08("1108"), Provenance::JournalTitle},
      {"b", c20("4611"), Provenance::KeywordQuery},
  };
  recat_test::Scratch dir;
  std::ostringstream os;
  write_labels(labels, os);
  auto path = dir.file("l.jsonl", os.str());
  EXPECT_EQ(read_labels(path), labels);
  auto first = nlohmann::json::parse(os.str().substr(0, os.str().find('\n')));
  for (const char* key : {"publication_id", "code", "scheme", "provenance", "weight", "filtered", "share", "cluster_id"}) {
    EXPECT_TRUE(first.contains(key)) << key;
  }
}

TEST(Labels, CanonicalizeDedupsByKey) {
  std::vector<LabeledExample> labels = {
      {"b", c08("1108"), Provenance::GrantPropagation},
      {"a", c08("1108"), Provenance::JournalTitle},
      {"b", c08("1108"), Provenance::GrantPropagation},
      {"a", c08("1108"), Provenance::GrantPropagation},
  };
  canonicalize(labels);
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0].publication_id, "a");
  EXPECT_EQ(labels[0].provenance, Provenance::GrantPropagation);
  EXPECT_EQ(labels[2].publication_id, "b");
}
