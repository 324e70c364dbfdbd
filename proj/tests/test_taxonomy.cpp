#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "recat/taxonomy.hpp"
#include "support/scratch.hpp"

using namespace recat;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::Io;
}

CorrespondenceTable table_rows(const std::string& body) {
  auto rows = detail::parse_csv(body);
  return parse_correspondence(rows, "t");
}

}  // namespace

TEST(ParseCode, GroupCodeKnowsItsDivision) {
  auto c = parse_code("1108", Scheme::FoR2008);
  EXPECT_EQ(c.level(), Level::Group);
  EXPECT_EQ(c.scheme(), Scheme::FoR2008);
  EXPECT_EQ(division_of(c).digits(), "11");
}

TEST(ParseCode, TwoDigitsIsDivision) {
  auto c = parse_code("32", Scheme::FoR2020);
  EXPECT_EQ(c.level(), Level::Division);
  EXPECT_EQ(c.digits(), "32");
}

TEST(ParseCode, OddLengthRejected) { EXPECT_EQ(code_of([] { parse_code("110", Scheme::FoR2008); }), Errc::InvalidLength); }

TEST(ParseCode, NonDigitRejected) { EXPECT_EQ(code_of([] { parse_code("11a8", Scheme::FoR2008); }), Errc::NonDigit); }

TEST(ParseCode, TrimsWhitespaceOnly) {
  EXPECT_EQ(parse_code("  0101 ", Scheme::FoR2008).digits(), "0101");
  EXPECT_EQ(code_of([] { parse_code("01 01", Scheme::FoR2008); }), Errc::InvalidLength);
}

TEST(ParseCode, LeadingZeroPreserved) { EXPECT_EQ(parse_code("01", Scheme::FoR2008).digits(), "01"); }

TEST(ParseCode, CatalogMembership) {
  SchemeCatalog cat;
  cat.add(ForCode::parse("11", Scheme::FoR2008), "Medical and Health Sciences");
  EXPECT_NO_THROW(parse_code("11", Scheme::FoR2008, &cat));
  EXPECT_EQ(code_of([&] { parse_code("11", Scheme::FoR2020, &cat); }), Errc::UnknownCode);
  EXPECT_EQ(code_of([&] { parse_code("12", Scheme::FoR2008, &cat); }), Errc::UnknownCode);
}

TEST(Parent, FieldToGroupToDivision) {
  auto f = ForCode::parse("110803", Scheme::FoR2008);
  EXPECT_EQ(parent(f).digits(), "1108");
  EXPECT_EQ(parent(parent(f)).digits(), "11");
  EXPECT_EQ(parent(f).scheme(), Scheme::FoR2008);
}

TEST(Parent, DivisionHasNone) {
  EXPECT_EQ(code_of([] { parent(ForCode::parse("11", Scheme::FoR2008)); }), Errc::NoParent);
}

TEST(Parent, DoubleParentIsTwoDigitPrefixForAllFields) {
  for (int i = 0; i < 1000000; i += 997) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06d", i);
    auto f = ForCode::parse(buf, Scheme::FoR2020);
    EXPECT_EQ(parent(parent(f)).digits(), std::string(buf, 2));
    EXPECT_TRUE(parent(f).is_prefix_of(f));
  }
}

TEST(Catalog, ValidateRequiresParents) {
  SchemeCatalog cat;
  cat.add(ForCode::parse("1108", Scheme::FoR2008), "Medical Microbiology");
  EXPECT_EQ(code_of([&] { cat.validate(); }), Errc::UnknownCode);
  cat.add(ForCode::parse("11", Scheme::FoR2008), "Medical and Health Sciences");
  EXPECT_NO_THROW(cat.validate());
}

TEST(Catalog, LoadsCsvAndBlocs) {
  recat_test::Scratch dir;
  auto cat = load_catalog(dir.file("c.csv",
                                   "scheme,code,name\n2008,01,Mathematical Sciences\n2008,0101,Pure Mathematics\n"
                                   "2020,49,Mathematical Sciences\n2020,52,Psychology\n"));
  load_stem_hass(cat, dir.file("s.csv", "scheme,division,bloc\n2020,49,STEM\n2020,52,HASS\n"));
  EXPECT_EQ(cat.name(ForCode::parse("0101", Scheme::FoR2008)), "Pure Mathematics");
  EXPECT_EQ(cat.bloc(ForCode::parse("52", Scheme::FoR2020)), Bloc::HASS);
  EXPECT_FALSE(cat.bloc(ForCode::parse("01", Scheme::FoR2008)).has_value());
  EXPECT_EQ(cat.codes(Scheme::FoR2020, Level::Division).size(), 2u);
}

TEST(Correspondence, SingleTargetIsDirect) {
  auto t = table_rows("110803,320899\n");
  const auto* e = t.find(ForCode::parse("110803", Scheme::FoR2008));
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->kind(), MappingKind::Direct);
  EXPECT_EQ(e->targets.front().digits(), "320899");
  EXPECT_EQ(e->targets.front().scheme(), Scheme::FoR2020);
}

TEST(Correspondence, RepeatedSourceIsSplit) {
  auto t = table_rows("170101,320301\n170101,520101\n");
  const auto* e = t.find(ForCode::parse("170101", Scheme::FoR2008));
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->kind(), MappingKind::Split);
  EXPECT_EQ(e->targets.size(), 2u);
}

TEST(Correspondence, EmptyTargetIsDeleted) {
  auto t = table_rows("100699,\n");
  EXPECT_EQ(t.find(ForCode::parse("100699", Scheme::FoR2008))->kind(), MappingKind::Deleted);
}

TEST(Correspondence, DuplicatePairRejected) {
  EXPECT_EQ(code_of([] { table_rows("110803,320899\n110803,320899\n"); }), Errc::DuplicateSource);
  EXPECT_EQ(code_of([] { table_rows("110803,320899\n110803,\n"); }), Errc::DuplicateSource);
}

TEST(Correspondence, NonFieldCodesRejected) {
  EXPECT_EQ(code_of([] { table_rows("1108,320899\n"); }), Errc::CodeLevelMismatch);
  EXPECT_EQ(code_of([] { table_rows("110803,3208\n"); }), Errc::CodeLevelMismatch);
  EXPECT_EQ(code_of([] { table_rows("11x803,320899\n"); }), Errc::MalformedRow);
}

TEST(Correspondence, LoadFromFileChecksHeaderAndNewCodes) {
  recat_test::Scratch dir;
  auto t = load_correspondence(dir.file("c.csv", "source_2008,target_2020\n010101,490401\n"));
  load_new_codes(t, dir.file("n.csv", "code_2020\n461104\n"));
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.new_codes().count(ForCode::parse("461104", Scheme::FoR2020)), 1u);
  EXPECT_EQ(code_of([&] { load_correspondence(dir.file("bad.csv", "from,to\n010101,490401\n")); }), Errc::MalformedRow);
  EXPECT_EQ(code_of([&] { load_new_codes(t, dir.file("n2.csv", "code_2020\n4611\n")); }), Errc::CodeLevelMismatch);
}

TEST(Correspondence, SerializationRoundTripsByteIdentically) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 20; ++round) {
    std::ostringstream body;
    body << "source_2008,target_2020\n";
    for (int s = 0; s < 30; ++s) {
      char src[8];
      std::snprintf(src, sizeof src, "01%02d%02d", 1 + s / 10, s);
      int k = static_cast<int>(rng() % 4);
      if (k == 0) body << src << ",\n";
      std::set<std::string> dsts;
      for (int i = 0; i < k; ++i) {
        char dst[8];
        std::snprintf(dst, sizeof dst, "%02d%02d%02d", 30 + static_cast<int>(rng() % 20), 1 + static_cast<int>(rng() % 9),
                      static_cast<int>(rng() % 99));
        dsts.insert(dst);
      }
      for (const auto& d : dsts) body << src << ',' << d << '\n';
    }
    auto rows = detail::parse_csv(body.str());
    rows.erase(rows.begin());
    auto t = parse_correspondence(rows, "r");
    std::ostringstream once, twice;
    write_correspondence(t, once);
    auto rows2 = detail::parse_csv(once.str());
    rows2.erase(rows2.begin());
    write_correspondence(parse_correspondence(rows2, "r2"), twice);
    EXPECT_EQ(once.str(), twice.str());
    EXPECT_EQ(once.str(), body.str());
  }
}

TEST(DirectGroupTarget, UnanimousChildren) {
  auto t = table_rows("111706,420202\n111712,420203\n");
  auto g = direct_group_target(t, ForCode::parse("1117", Scheme::FoR2008));
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->digits(), "4202");
  EXPECT_EQ(g->scheme(), Scheme::FoR2020);
}

TEST(DirectGroupTarget, DisagreeingChildren) {
  auto t = table_rows("170101,520201\n170106,320221\n");
  EXPECT_FALSE(direct_group_target(t, ForCode::parse("1701", Scheme::FoR2008)).has_value());
}

TEST(DirectGroupTarget, SplitOrDeletedChildBlocks) {
  auto split = table_rows("060501,310701\n060502,310702\n060502,310703\n");
  EXPECT_FALSE(direct_group_target(split, ForCode::parse("0605", Scheme::FoR2008)).has_value());
  auto del = table_rows("060501,310701\n060599,\n");
  EXPECT_FALSE(direct_group_target(del, ForCode::parse("0605", Scheme::FoR2008)).has_value());
}

TEST(DirectGroupTarget, TechnologyDivisionHasNoDirectGroup) {
  // Every Technology group spreads over Engineering and Computing.
  auto t = table_rows("100501,400601\n100503,460605\n100604,400906\n100605,460606\n100699,\n");
  for (const char* g : {"1005", "1006"}) {
    EXPECT_FALSE(direct_group_target(t, ForCode::parse(g, Scheme::FoR2008)).has_value()) << g;
  }
}

TEST(DirectGroupTarget, UnknownGroup) {
  auto t = table_rows("111706,420202\n");
  EXPECT_EQ(code_of([&] { direct_group_target(t, ForCode::parse("0101", Scheme::FoR2008)); }), Errc::UnknownCode);
}

TEST(DirectGroupTarget, RandomTablesAbsentWheneverAnyChildIsNotDirect) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 200; ++round) {
    std::ostringstream body;
    int kids = 1 + static_cast<int>(rng() % 4);
    bool any_indirect = false;
    std::set<std::string> groups;
    for (int k = 0; k < kids; ++k) {
      int kind = static_cast<int>(rng() % 4);
      std::string src = "0101" + std::to_string(10 + k);
      if (kind == 0) {
        body << src << ",\n";
        any_indirect = true;
      } else if (kind == 1) {
        body << src << ",490101\n" << src << ",490201\n";
        any_indirect = true;
      } else {
        std::string g = rng() % 2 ? "4901" : "4904";
        groups.insert(g);
        body << src << ',' << g << "0" << k << '\n';
      }
    }
    auto r = direct_group_target(table_rows(body.str()), ForCode::parse("0101", Scheme::FoR2008));
    if (any_indirect || groups.size() != 1) {
      EXPECT_FALSE(r.has_value()) << body.str();
    } else {
      ASSERT_TRUE(r.has_value());
      EXPECT_EQ(r->digits(), *groups.begin());
    }
  }
}
