#include <doctest.h>

#include <random>
#include <set>

#include "../support/random_tables.hpp"
#include "tsr/error.hpp"
#include "tsr/grammar.hpp"

using namespace tsr::grammar;
using tsr::MalformedStructure;
namespace ts = testing_support;

namespace {

TokenSeq ids(std::initializer_list<TokenId> v) { return TokenSeq{std::vector<TokenId>(v), false}; }

}  // namespace

TEST_CASE("vocabulary has the documented 32 entries") {
  const Vocabulary v = build_vocab();
  REQUIRE(v.size() == 32);
  std::set<std::string> texts;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(v.entries()[i].id == i);
    texts.insert(v.entries()[i].text);
    CHECK(v.lookup(v.entries()[i].text) == v.entries()[i].id);
  }
  CHECK(texts.size() == 32);
  CHECK(v.text(tok::kSos) == "<sos>");
  CHECK(v.text(tok::kEos) == "<eos>");
  CHECK(v.text(tok::kPad) == "<pad>");
  CHECK(v.text(tok::kUnk) == "<unk>");

  int paired = 0, spanning = 0, rowspans = 0, colspans = 0, special = 0;
  for (const auto& e : v.entries()) {
    if (is_special(e.id)) {
      ++special;
    } else if (is_rowspan(e.id)) {
      ++rowspans;
    } else if (is_colspan(e.id)) {
      ++colspans;
    } else if (e.text == "<td" || e.text == ">") {
      ++spanning;
    } else {
      ++paired;
    }
  }
  CHECK(special == 4);
  CHECK(paired == 8);
  CHECK(spanning == 2);
  CHECK(rowspans == 9);
  CHECK(colspans == 9);
  for (int k = 2; k <= 10; ++k) {
    CHECK(v.text(rowspan_token(k)) == " rowspan=\"" + std::to_string(k) + "\"");
    CHECK(v.text(colspan_token(k)) == " colspan=\"" + std::to_string(k) + "\"");
    CHECK(attribute_value(rowspan_token(k)) == k);
  }
}

TEST_CASE("tokenize") {
  CHECK(tokenize("<tr><td></td></tr>") == ids({tok::kTrOpen, tok::kTdOpen, tok::kTdClose, tok::kTrClose}));
  CHECK(tokenize("<td rowspan=\"2\">") == ids({tok::kTdSpanOpen, rowspan_token(2), tok::kSpanClose}));
  CHECK(tokenize("<td colspan=\"10\" rowspan=\"3\"></td>") ==
        ids({tok::kTdSpanOpen, colspan_token(10), rowspan_token(3), tok::kSpanClose, tok::kTdClose}));
  CHECK(tokenize("<div>") == ids({tok::kUnk}));
  CHECK(tokenize("<tr>text</tr>") == ids({tok::kTrOpen, tok::kUnk, tok::kTrClose}));
  CHECK(tokenize("").ids.empty());
  CHECK_FALSE(tokenize("<tr>").framed);
}

TEST_CASE("detokenize") {
  CHECK(detokenize(ids({tok::kTrOpen, tok::kTdOpen, tok::kTdClose, tok::kTrClose})) == "<tr><td></td></tr>");
  CHECK(detokenize(TokenSeq{{tok::kSos, tok::kTdOpen, tok::kTdClose, tok::kEos}, true}) == "<td></td>");
  CHECK_THROWS_AS(detokenize(ids({tok::kUnk})), tsr::Error);
  try {
    detokenize(ids({tok::kUnk}));
  } catch (const tsr::Error& e) {
    CHECK(e.code() == tsr::ErrorCode::UnknownToken);
  }
}

TEST_CASE("tokenize inverts detokenize for every non-special token sequence") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    TokenSeq s;
    const int n = ts::pick(rng, 0, 40);
    for (int i = 0; i < n; ++i) {
      auto t = static_cast<TokenId>(ts::pick(rng, 4, 31));
      // "<td" directly followed by ">" spells "<td>", which is not a valid spanning group.
      if (t == tok::kSpanClose && !s.ids.empty() && s.ids.back() == tok::kTdSpanOpen) continue;
      s.ids.push_back(t);
    }
    REQUIRE(tokenize(detokenize(s)) == s);
  }
}

TEST_CASE("validate framing") {
  CHECK_NOTHROW(validate(TokenSeq{{tok::kSos, tok::kTdOpen, tok::kTdClose, tok::kEos, tok::kPad}, true}));
  CHECK_THROWS_AS(validate(TokenSeq{{tok::kTdOpen, tok::kEos}, true}), MalformedStructure);
  CHECK_THROWS_AS(validate(TokenSeq{{tok::kSos, tok::kEos, tok::kTdOpen}, true}), MalformedStructure);
  CHECK_THROWS_AS(validate(TokenSeq{{tok::kSos, tok::kEos, tok::kEos}, true}), MalformedStructure);
  CHECK_THROWS_AS(validate(ids({40})), MalformedStructure);
  CHECK_THROWS_AS(validate(ids({tok::kSos})), MalformedStructure);
}

TEST_CASE("parse_tree") {
  SUBCASE("row with one cell") {
    const TableTree t = parse_tree(ids({tok::kTrOpen, tok::kTdOpen, tok::kTdClose, tok::kTrClose}));
    CHECK(t.size() == 3);  // table, tr, td
    REQUIRE(t.root.children.size() == 1);
    CHECK(t.root.children[0].label == Label::Tr);
    CHECK(t.root.children[0].children[0].label == Label::Td);
  }
  SUBCASE("spanning cell directly under the root") {
    const TableTree t = parse_tree(ids({tok::kTdSpanOpen, colspan_token(3), tok::kSpanClose, tok::kTdClose}));
    CHECK(t.size() == 2);
    CHECK(t.root.children[0].colspan == 3);
    CHECK(t.root.children[0].rowspan == 1);
  }
  SUBCASE("malformed inputs") {
    CHECK_THROWS_AS(parse_tree(ids({tok::kTrOpen, tok::kTdClose})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kTrOpen})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kTdOpen, tok::kTrOpen, tok::kTrClose, tok::kTdClose})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({rowspan_token(2)})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kTdSpanOpen, tok::kSpanClose, tok::kTdClose})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kTdSpanOpen, rowspan_token(2), rowspan_token(3), tok::kSpanClose,
                                    tok::kTdClose})),
                    MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kTheadOpen, tok::kTdOpen, tok::kTdClose, tok::kTheadClose})),
                    MalformedStructure);
    CHECK_THROWS_AS(parse_tree(ids({tok::kUnk})), MalformedStructure);
    CHECK_THROWS_AS(parse_tree(TokenSeq{{tok::kSos, tok::kTdOpen, tok::kTdClose}, true}), MalformedStructure);
  }
  SUBCASE("framed sequences ignore framing and padding") {
    const TableTree t =
        parse_tree(TokenSeq{{tok::kSos, tok::kTdOpen, tok::kTdClose, tok::kEos, tok::kPad, tok::kPad}, true});
    CHECK(t.size() == 2);
  }
  SUBCASE("malformed structure reports the position") {
    try {
      parse_tree(ids({tok::kTrOpen, tok::kTdOpen, tok::kTdClose, tok::kTdClose}));
      FAIL("expected MalformedStructure");
    } catch (const MalformedStructure& e) {
      CHECK(e.position() == 3);
      CHECK(e.code() == tsr::ErrorCode::MalformedStructure);
    }
  }
}

TEST_CASE("classify") {
  CHECK(classify(parse_tree(tokenize("<tr><td></td><td></td></tr>"))) == TableClass::Simple);
  CHECK(classify(parse_tree(tokenize("<tr><td rowspan=\"2\"></td></tr>"))) == TableClass::Complex);
  CHECK(classify(TableTree{}) == TableClass::Simple);
}

TEST_CASE("random derivations round-trip through tokens") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5000; ++trial) {
    const TableTree t = ts::random_table(rng);
    const TokenSeq s = to_tokens(t);
    REQUIRE(parse_tree(s) == t);
    REQUIRE(parse_tree(frame(s)) == t);
    REQUIRE(tokenize(detokenize(s)) == s);
    bool has_attr = false;
    for (TokenId id : s.ids) has_attr = has_attr || is_attribute(id);
    REQUIRE((classify(t) == TableClass::Complex) == has_attr);
  }
}

TEST_CASE("single-token corruptions either parse or raise MalformedStructure") {
  std::mt19937_64 rng(77);
  int rejected = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    TokenSeq s = to_tokens(ts::random_table(rng));
    const int op = ts::pick(rng, 0, 2);
    const auto tokid = static_cast<TokenId>(ts::pick(rng, 0, 31));
    if (op == 0 && !s.ids.empty()) {
      s.ids[static_cast<std::size_t>(ts::pick(rng, 0, static_cast<int>(s.ids.size()) - 1))] = tokid;
    } else if (op == 1) {
      s.ids.insert(s.ids.begin() + ts::pick(rng, 0, static_cast<int>(s.ids.size())), tokid);
    } else if (!s.ids.empty()) {
      s.ids.erase(s.ids.begin() + ts::pick(rng, 0, static_cast<int>(s.ids.size()) - 1));
    }
    try {
      const TableTree t = parse_tree(s);
      // Anything accepted must be a canonical derivation of its own tree
      // (up to attribute order).
      CHECK(parse_tree(to_tokens(t)) == t);
    } catch (const MalformedStructure&) {
      ++rejected;
    }
  }
  CHECK(rejected > 0);
}

TEST_CASE("from_strings and to_strings") {
  const TokenSeq s = from_strings({"<sos>", "<td", " colspan=\"2\"", ">", "</td>", "<b>", "<eos>"});
  CHECK(s.framed);
  CHECK(s.ids[5] == tok::kUnk);
  CHECK(to_strings(s)[2] == " colspan=\"2\"");
}
