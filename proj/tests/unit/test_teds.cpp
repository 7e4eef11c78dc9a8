#include <doctest.h>

#include <random>

#include "../support/random_tables.hpp"
#include "../support/tree_oracle.hpp"
#include "tsr/error.hpp"
#include "tsr/teds.hpp"

using namespace tsr;
using grammar::TableTree;
using grammar::tokenize;
namespace ts = testing_support;

namespace {

void flatten(const grammar::TableNode& n, int parent, oracle::Parents& parents, std::vector<int>& labels) {
  const int self = static_cast<int>(parents.size());
  parents.push_back(parent);
  labels.push_back(teds::node_key(n));
  for (const auto& c : n.children) flatten(c, self, parents, labels);
}

int oracle_distance(const TableTree& a, const TableTree& b) {
  oracle::Parents pa, pb;
  std::vector<int> la, lb;
  flatten(a.root, -1, pa, la);
  flatten(b.root, -1, pb, lb);
  return oracle::edit_distance(oracle::Shape(pa), la, oracle::Shape(pb), lb);
}

TableTree tree(const char* html) { return grammar::parse_tree(tokenize(html)); }

}  // namespace

TEST_CASE("tree_edit_distance basics") {
  CHECK(teds::tree_edit_distance(tree("<tr><td></td></tr>"), tree("<tr><td></td></tr>")) == 0.0);
  CHECK(teds::tree_edit_distance(TableTree{}, tree("<td></td>")) == 1.0);
  CHECK(teds::tree_edit_distance(tree("<tr><td></td><td></td></tr>"), tree("<tr><td></td></tr>")) == 1.0);
  // Attribute change is one relabel.
  CHECK(teds::tree_edit_distance(tree("<tr><td></td></tr>"), tree("<tr><td colspan=\"2\"></td></tr>")) == 1.0);
  CHECK(teds::tree_edit_distance(tree("<tr><td rowspan=\"2\"></td></tr>"),
                                 tree("<tr><td colspan=\"2\"></td></tr>")) == 1.0);
}

TEST_CASE("oracle-frozen distances on hand-picked tables") {
  // Values produced by the exhaustive-mapping oracle (tests/support).
  struct Case {
    const char* a;
    const char* b;
    int d;
  };
  const Case cases[] = {
      {"<tr><td></td><td></td></tr>", "<tr><td></td></tr>", 1},
      {"<thead><tr><td></td></tr></thead><tbody><tr><td></td></tr></tbody>", "<tr><td></td></tr><tr><td></td></tr>", 2},
      {"<tr><td></td><td></td></tr><tr><td></td><td></td></tr>", "<tr><td colspan=\"2\"></td></tr><tr><td></td><td></td></tr>", 2},
      {"<tbody><tr><td></td></tr></tbody>", "<td></td>", 2},
      {"<thead><tr><td></td><td></td></tr></thead>", "<tbody><tr><td></td></tr><tr><td></td></tr></tbody>", 4},
  };
  for (const auto& c : cases) {
    CAPTURE(c.a);
    CAPTURE(c.b);
    CHECK(oracle_distance(tree(c.a), tree(c.b)) == c.d);
    CHECK(teds::tree_edit_distance(tree(c.a), tree(c.b)) == c.d);
  }
}

TEST_CASE("zhang-shasha equals the oracle on every pair of trees up to 4 nodes, 3 labels") {
  struct Labeled {
    std::size_t shape;
    std::vector<int> labels;
    teds::OrderedTree ot;
  };
  std::vector<oracle::Shape> shapes;
  std::vector<Labeled> all;
  for (int n = 1; n <= 4; ++n) {
    for (const auto& p : oracle::shapes_of_size(n)) {
      shapes.emplace_back(p);
      int combos = 1;
      for (int i = 0; i < n; ++i) combos *= 3;
      for (int code = 0; code < combos; ++code) {
        std::vector<int> lab(static_cast<std::size_t>(n));
        for (int i = 0, c = code; i < n; ++i, c /= 3) lab[static_cast<std::size_t>(i)] = c % 3;
        all.push_back({shapes.size() - 1, lab, teds::OrderedTree::from_parents(p, lab)});
      }
    }
  }
  REQUIRE(all.size() == 3 + 9 + 2 * 27 + 5 * 81);
  std::vector<std::vector<std::vector<oracle::Mapping>>> maps(shapes.size());
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    for (std::size_t j = 0; j < shapes.size(); ++j) maps[i].push_back(oracle::maximal_mappings(shapes[i], shapes[j]));
  }
  teds::ZhangShasha zs;
  long mismatches = 0;
  for (const auto& a : all) {
    for (const auto& b : all) {
      const int want = oracle::edit_distance(maps[a.shape][b.shape], a.labels.size(), a.labels, b.labels.size(),
                                             b.labels);
      mismatches += zs.distance(a.ot, b.ot) != want;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("shape enumeration matches the Catalan numbers") {
  const std::size_t catalan[] = {1, 1, 2, 5, 14, 42};
  for (int n = 1; n <= 6; ++n) CHECK(oracle::shapes_of_size(n).size() == catalan[n - 1]);
}

TEST_CASE("teds score") {
  const auto one = tokenize("<tr><td></td></tr>");
  const auto two = tokenize("<tr><td></td><td></td></tr>");
  CHECK(teds::teds(two, two) == 1.0);
  CHECK(teds::teds(one, two) == 0.75);
  CHECK(teds::teds(tokenize("<tr></td>"), two) == 0.0);
  CHECK_THROWS_AS(teds::teds(two, tokenize("<tr></td>")), Error);
  try {
    teds::teds(two, tokenize("<tr>"));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidGroundTruth);
  }
  // Disjoint trees clamp at zero rather than going negative.
  const auto wide = tokenize("<tr><td colspan=\"7\"></td><td></td><td></td><td></td><td></td></tr>");
  const auto tall = tokenize("<thead><tr></tr><tr><td colspan=\"10\"></td></tr></thead><tbody><tr></tr></tbody>");
  CHECK(teds::tree_edit_distance(grammar::parse_tree(wide), grammar::parse_tree(tall)) > 7.0);
  CHECK(teds::teds(wide, tall) == 0.0);
  CHECK(teds::teds(tall, wide) == 0.0);
  CHECK(teds::teds(tokenize("<td></td><td></td><td></td><td></td><td></td>"), tokenize("")) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("teds identity, symmetry, triangle inequality, leaf deletion") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const TableTree a = ts::random_table(rng, 3, 3);
    const TableTree b = ts::random_table(rng, 3, 3);
    const TableTree c = ts::random_table(rng, 3, 3);
    const auto sa = grammar::to_tokens(a);
    const auto sb = grammar::to_tokens(b);
    REQUIRE(teds::teds(sa, sa) == 1.0);
    REQUIRE(teds::teds(sa, sb) == teds::teds(sb, sa));
    const double ab = teds::tree_edit_distance(a, b);
    const double bc = teds::tree_edit_distance(b, c);
    const double ac = teds::tree_edit_distance(a, c);
    REQUIRE(ac <= ab + bc);
    if (a.size() + b.size() <= 14) REQUIRE(ab == oracle_distance(a, b) * 1.0);
  }
  // Removing one leaf moves the distance to any other tree by at most 1.
  for (int trial = 0; trial < 300; ++trial) {
    TableTree gt = ts::random_table(rng, 3, 3);
    const TableTree other = ts::random_table(rng, 3, 3);
    TableTree cut = gt;
    if (cut.root.children.empty()) continue;
    auto* node = &cut.root;
    while (!node->children.empty() && !node->children.back().children.empty()) node = &node->children.back();
    node->children.pop_back();
    const double before = teds::tree_edit_distance(gt, other);
    const double after = teds::tree_edit_distance(cut, other);
    REQUIRE(std::abs(before - after) <= 1.0);
  }
}

TEST_CASE("evaluate_corpus aggregation") {
  const auto simple_gt = tokenize("<tr><td></td><td></td></tr>");
  const auto simple_pred = tokenize("<tr><td></td></tr>");  // 0.75
  const auto complex_gt = tokenize("<tr><td colspan=\"2\"></td></tr>");
  // A 3-node tree against a 3-node tree with two relabels... use a direct
  // case: prediction drops the row entirely -> 1 - 2/3.
  SUBCASE("perfect predictions") {
    const auto r = teds::evaluate_corpus({{"b", simple_gt, simple_gt}, {"a", complex_gt, complex_gt}});
    CHECK(*r.mean_simple == 100.0);
    CHECK(*r.mean_complex == 100.0);
    CHECK(r.mean_all == 100.0);
    CHECK(r.samples.front().id == "a");
  }
  SUBCASE("mixed") {
    // Complex sample scored 0.5: four-node gt against a two-node prediction.
    const auto cgt = tokenize("<tr><td rowspan=\"2\"></td><td></td></tr>");
    const auto cpred = tokenize("<td rowspan=\"2\"></td>");
    REQUIRE(teds::teds(cpred, cgt) == 0.5);
    const auto r = teds::evaluate_corpus({{"s", simple_pred, simple_gt}, {"c", cpred, cgt}});
    CHECK(*r.mean_simple == 75.0);
    CHECK(*r.mean_complex == 50.0);
    CHECK(r.mean_all == 62.5);
    CHECK(r.n_simple == 1);
    CHECK(r.n_complex == 1);
    const auto j = r.to_json(false);
    CHECK(j["all"] == 62.5);
    CHECK(r.to_table().find("62.50") != std::string::npos);
  }
  SUBCASE("class missing") {
    const auto r = teds::evaluate_corpus({{"s", simple_gt, simple_gt}});
    CHECK_FALSE(r.mean_complex.has_value());
  }
  SUBCASE("empty") {
    try {
      teds::evaluate_corpus({});
      FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCorpus);
    }
  }
  SUBCASE("order independence") {
    const auto r1 = teds::evaluate_corpus({{"x", simple_pred, simple_gt}, {"y", simple_gt, simple_gt}});
    const auto r2 = teds::evaluate_corpus({{"y", simple_gt, simple_gt}, {"x", simple_pred, simple_gt}});
    CHECK(r1.to_json().dump() == r2.to_json().dump());
  }
}
