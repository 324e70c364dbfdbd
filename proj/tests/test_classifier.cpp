#include <algorithm>
#include <chrono>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "recat/classifier.hpp"
#include "recat/evaluate.hpp"
#include "support/adapters.hpp"
#include "support/scratch.hpp"
#include "support/separable.hpp"

using namespace recat;
using recat_test::c20;
using recat_test::error_code;

namespace {

// Labels over publications p0..p{n-1}, one class per count.
std::vector<LabeledExample> class_sizes(const std::vector<std::pair<std::string, int>>& sizes) {
  std::vector<LabeledExample> out;
  int next = 0;
  for (const auto& [code, n] : sizes) {
    for (int i = 0; i < n; ++i) out.push_back({"p" + std::to_string(next++), c20(code), Provenance::Remapped});
  }
  return out;
}

double weighted_count(const ShapedLabels& s, const ForCode& code) {
  double w = 0;
  for (const auto& [pid, codes] : s.labels) {
    if (codes.count(code)) w += s.weights.at(pid);
  }
  return w;
}

Model tiny_model(std::vector<std::pair<std::string, double>> biases, std::size_t dim = 2) {
  Model m;
  std::vector<std::string> terms;
  std::vector<std::uint32_t> df;
  for (std::size_t i = 0; i < dim; ++i) {
    terms.push_back("t" + std::to_string(i));
    df.push_back(1);
  }
  m.vocabulary = features::Vocabulary(terms, df, 1, 1, 1);
  for (const auto& [code, b] : biases) m.classes.push_back({c20(code), std::vector<double>(dim, 0.0), b, 0.0});
  return m;
}

features::SparseVector zeros(std::size_t dim) { return {{}, dim}; }

}  // namespace

TEST(ShapeLabels, CapDownsamplesReproducibly) {
  auto labels = class_sizes({{"3101", 10000}, {"3102", 1000}, {"3103", 1000}});
  ShapingPolicy p;
  p.mode = ShapingMode::Proportional;
  p.cap_percentile = 0.5;  // cap at the median class size, 1000
  p.seed = 42;
  auto a = shape_labels(labels, p);
  EXPECT_EQ(a.caps.at(c20("3101")), 1000u);
  EXPECT_EQ(a.class_counts.at(c20("3101")), 1000u);
  EXPECT_EQ(a.class_counts.at(c20("3102")), 1000u);
  auto b = shape_labels(labels, p);
  EXPECT_EQ(a.labels, b.labels);
  p.seed = 43;
  EXPECT_NE(shape_labels(labels, p).labels, a.labels);
}

TEST(ShapeLabels, EqualPolicyCapAndFloor) {
  auto labels = class_sizes({{"3101", 1000}, {"3102", 100}, {"3103", 10}});
  ShapingPolicy p;
  p.mode = ShapingMode::Equal;
  p.floor = 50;
  p.seed = 7;
  auto s = shape_labels(labels, p);
  // Equal share of 1110 publications over 3 classes.
  EXPECT_EQ(s.caps.at(c20("3101")), 370u);
  EXPECT_EQ(s.class_counts.at(c20("3101")), 370u);
  EXPECT_EQ(s.class_counts.at(c20("3102")), 100u);
  EXPECT_EQ(s.class_counts.at(c20("3103")), 10u);
  EXPECT_DOUBLE_EQ(weighted_count(s, c20("3103")), 50.0);
  EXPECT_DOUBLE_EQ(weighted_count(s, c20("3102")), 100.0);
  EXPECT_EQ(shape_labels(labels, p).labels, s.labels);
}

TEST(ShapeLabels, UnionPerPublication) {
  std::vector<LabeledExample> labels{{"p", c20("3207"), Provenance::Remapped},
                                     {"p", c20("3101"), Provenance::KeywordQuery},
                                     {"p", c20("3207"), Provenance::Override}};
  ShapingPolicy none;
  none.mode = ShapingMode::None;
  auto s = shape_labels(labels, none);
  ASSERT_EQ(s.labels.size(), 1u);
  EXPECT_EQ(s.labels.at("p"), (std::set<ForCode>{c20("3101"), c20("3207")}));
}

TEST(ShapeLabels, SkipsRejectedAndOldSchemeAndEmptyIsError) {
  std::vector<LabeledExample> labels{{"p", recat_test::c08("1108"), Provenance::GrantPropagation}};
  LabeledExample rejected{"q", c20("3207"), Provenance::Remapped};
  rejected.filtered = FilterStatus::Rejected;
  labels.push_back(rejected);
  EXPECT_EQ(error_code([&] { shape_labels(labels, {}); }), Errc::EmptyLabelSet);
}

TEST(ShapeDataset, TrainingSetShape) {
  auto fx = recat_test::separable_fixture(20, 3, 5);
  auto set = recat_test::separable_set(fx);
  EXPECT_EQ(set.examples.size(), 45u);
  EXPECT_EQ(set.class_counts.at(fx.code_a), 25u);
  EXPECT_TRUE(std::is_sorted(set.examples.begin(), set.examples.end(),
                             [](const auto& a, const auto& b) { return a.publication_id < b.publication_id; }));
  for (const auto& ex : set.examples) {
    EXPECT_FALSE(ex.labels.empty());
    EXPECT_EQ(ex.x.dimension, set.vocabulary.size());
    if (ex.publication_id[0] == 'm') {
      EXPECT_EQ(ex.labels.size(), 2u);
    }
  }
}

TEST(Train, SeparableFixtureFitsTrainingSet) {
  auto fx = recat_test::separable_fixture();
  auto set = recat_test::separable_set(fx);
  auto model = train(set, {});
  for (const auto& ex : set.examples) {
    auto r = predict(model, ex.x);
    EXPECT_EQ(r.front().code, ex.labels.front()) << ex.publication_id;
  }
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
  auto fx = recat_test::separable_fixture(40, 9, 8);
  auto set = recat_test::separable_set(fx);
  TrainerConfig one;
  one.seed = 5;
  one.threads = 1;
  TrainerConfig many = one;
  many.threads = 4;
  const auto bytes = serialize_model(train(set, one));
  EXPECT_EQ(serialize_model(train(set, one)), bytes);
  EXPECT_EQ(serialize_model(train(set, many)), bytes);
}

TEST(Train, ConfigErrors) {
  auto fx = recat_test::separable_fixture(10);
  auto set = recat_test::separable_set(fx);
  TrainerConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(error_code([&] { train(set, cfg); }), Errc::InvalidConfig);
  auto one_class = set;
  one_class.class_counts.erase(fx.code_b);
  EXPECT_EQ(error_code([&] { train(one_class, {}); }), Errc::SingleClass);
  auto bad = set;
  bad.examples[0].x.dimension += 1;
  EXPECT_EQ(error_code([&] { train(bad, {}); }), Errc::DimensionMismatch);
}

TEST(Train, ObjectiveNonIncreasingAcrossEpochs) {
  auto fx = recat_test::separable_fixture();
  auto set = recat_test::separable_set(fx);
  TrainerConfig cfg;
  cfg.epochs = 15;
  std::map<ForCode, std::vector<double>> history;
  train(set, cfg, [&](const ForCode& code, int, const std::vector<double>& w, double b) {
    history[code].push_back(hinge_objective(w, b, set, code, cfg.lambda));
  });
  ASSERT_EQ(history.size(), 2u);
  for (const auto& [code, h] : history) {
    ASSERT_EQ(h.size(), 15u);
    for (std::size_t e = 1; e < h.size(); ++e) EXPECT_LE(h[e], h[e - 1] + 1e-6) << code << " epoch " << e;
  }
}

TEST(Train, DuplicatedTrainingSetKeepsTopRank) {
  auto fx = recat_test::separable_fixture(50, 4, 6);
  auto set = recat_test::separable_set(fx);
  auto doubled = set;
  for (const auto& ex : set.examples) doubled.examples.push_back(ex);
  for (auto& [_, n] : doubled.class_counts) n *= 2;
  auto a = train(set, {});
  auto b = train(doubled, {});
  for (const auto& ex : set.examples) {
    auto ra = predict(a, ex.x), rb = predict(b, ex.x);
    std::vector<ForCode> oa, ob;
    for (const auto& s : ra) oa.push_back(s.code);
    for (const auto& s : rb) ob.push_back(s.code);
    EXPECT_EQ(oa, ob) << ex.publication_id;
  }
}

TEST(Predict, ZeroVectorRanksByBiasThenCode) {
  auto m = tiny_model({{"3202", 0.5}, {"3101", 0.5}, {"4601", 0.9}, {"3001", -1}});
  auto r = predict(m, zeros(2));
  std::vector<std::string> order;
  for (const auto& s : r) order.push_back(s.code.digits());
  EXPECT_EQ(order, (std::vector<std::string>{"4601", "3101", "3202", "3001"}));
  EXPECT_EQ(r[0].score, 0.9);
}

TEST(Predict, DimensionMismatch) {
  auto m = tiny_model({{"3101", 0}, {"3202", 0}});
  EXPECT_EQ(error_code([&] { predict(m, zeros(3)); }), Errc::DimensionMismatch);
}

TEST(Predict, SeparableClassRankedFirstAndRankingComplete) {
  auto fx = recat_test::separable_fixture();
  auto model = train(recat_test::separable_set(fx), {});
  Publication p;
  p.id = "new";
  p.title = "aw1 aw2 aw3";
  p.abstract = "aw4 aw5 aw6 aw7";
  auto r = predict(model, vectorize_publication(model, p));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].code, fx.code_a);
  EXPECT_NE(r[0].code, r[1].code);
}

TEST(Assign, ThresholdAndDivisions) {
  auto m = tiny_model({{"3201", 0.4}, {"3202", 0.2}, {"4601", -0.1}});
  auto a = assign(m, zeros(2));
  EXPECT_EQ(a.groups, (std::vector<ForCode>{c20("3201"), c20("3202")}));
  EXPECT_EQ(a.divisions, (std::vector<ForCode>{c20("32")}));
  auto one = assign(m, zeros(2), {0.3});
  EXPECT_EQ(one.groups, (std::vector<ForCode>{c20("3201")}));
  EXPECT_EQ(one.divisions.size(), 1u);
  EXPECT_TRUE(assign(m, zeros(2), {1.0}).empty());
  EXPECT_TRUE(assign(m, zeros(2), {0.4}).empty());  // strictly above
}

TEST(Assign, SubsetOfRankingWithParentDivisions) {
  auto fx = recat_test::separable_fixture(60, 2, 15);
  auto model = train(recat_test::separable_set(fx), {});
  auto x = vectorize_publication(model, fx.mixed);
  auto a = assign(model, x);
  auto r = predict(model, x);
  std::set<ForCode> ranked, parents;
  for (const auto& s : r) ranked.insert(s.code);
  for (const auto& g : a.groups) {
    EXPECT_TRUE(ranked.count(g));
    parents.insert(parent(g));
  }
  EXPECT_EQ(std::set<ForCode>(a.divisions.begin(), a.divisions.end()), parents);
  EXPECT_GE(a.groups.size(), 2u);
}

TEST(Model, ArchiveRoundTrip) {
  auto fx = recat_test::separable_fixture(30, 8);
  auto set = recat_test::separable_set(fx);
  TrainerConfig cfg;
  cfg.seed = 77;
  cfg.epochs = 4;
  cfg.threshold = 0.25;
  auto m = train(set, cfg);
  recat_test::Scratch dir;
  save_model(m, dir.path() / "model.tar");
  auto back = load_model(dir.path() / "model.tar");
  EXPECT_EQ(serialize_model(back), serialize_model(m));
  EXPECT_EQ(back.trainer.seed, 77u);
  EXPECT_EQ(back.trainer.epochs, 4);
  ASSERT_EQ(back.classes.size(), m.classes.size());
  EXPECT_EQ(back.classes[0].threshold, 0.25);
  for (const auto& ex : set.examples) {
    auto ra = predict(m, ex.x), rb = predict(back, ex.x);
    for (std::size_t i = 0; i < ra.size(); ++i) {
      EXPECT_EQ(ra[i].code, rb[i].code);
      EXPECT_EQ(ra[i].score, rb[i].score);
    }
  }
}

TEST(Model, RejectsWrongVersion) {
  auto fx = recat_test::separable_fixture(10);
  auto bytes = serialize_model(train(recat_test::separable_set(fx), {}));
  auto members = detail::tar_unpack(bytes);
  members["VERSION"] = "99\n";
  std::vector<detail::TarMember> files;
  for (const auto& [name, data] : members) files.push_back({name, data});
  EXPECT_THROW(deserialize_model(detail::tar_pack(files)), Error);
}
