#include "tsr/grammar.hpp"

#include <algorithm>

#include "tsr/error.hpp"

namespace tsr::grammar {

Vocabulary::Vocabulary() {
  std::vector<std::string> texts{"<sos>",   "<eos>", "<pad>", "<unk>", "<thead>", "</thead>", "<tbody>",
                                 "</tbody>", "<tr>",  "</tr>", "<td>",  "</td>",   "<td",      ">"};
  for (int k = 2; k <= kMaxSpan; ++k) texts.push_back(" rowspan=\"" + std::to_string(k) + "\"");
  for (int k = 2; k <= kMaxSpan; ++k) texts.push_back(" colspan=\"" + std::to_string(k) + "\"");
  entries_.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    entries_.push_back({std::move(texts[i]), static_cast<TokenId>(i)});
  }
}

std::string_view Vocabulary::text(TokenId id) const {
  if (id >= entries_.size()) throw Error(ErrorCode::IndexOutOfRange, "token id " + std::to_string(id));
  return entries_[id].text;
}

std::optional<TokenId> Vocabulary::lookup(std::string_view text) const {
  for (const auto& e : entries_) {
    if (e.text == text) return e.id;
  }
  return std::nullopt;
}

Vocabulary build_vocab() { return Vocabulary{}; }

const Vocabulary& vocab() {
  static const Vocabulary v;
  return v;
}

bool is_special(TokenId id) { return id <= tok::kUnk; }
bool is_rowspan(TokenId id) { return id >= tok::kRowspanFirst && id < tok::kColspanFirst; }
bool is_colspan(TokenId id) { return id >= tok::kColspanFirst && id < kVocabSize; }

int attribute_value(TokenId id) {
  if (is_rowspan(id)) return id - tok::kRowspanFirst + 2;
  if (is_colspan(id)) return id - tok::kColspanFirst + 2;
  throw Error(ErrorCode::IndexOutOfRange, "token " + std::to_string(id) + " is not an attribute");
}

TokenId rowspan_token(int value) {
  if (value < 2 || value > kMaxSpan) throw Error(ErrorCode::IndexOutOfRange, "rowspan " + std::to_string(value));
  return static_cast<TokenId>(tok::kRowspanFirst + value - 2);
}

TokenId colspan_token(int value) {
  if (value < 2 || value > kMaxSpan) throw Error(ErrorCode::IndexOutOfRange, "colspan " + std::to_string(value));
  return static_cast<TokenId>(tok::kColspanFirst + value - 2);
}

TokenSeq frame(const TokenSeq& seq) {
  if (seq.framed) return seq;
  TokenSeq out;
  out.framed = true;
  out.ids.reserve(seq.ids.size() + 2);
  out.ids.push_back(tok::kSos);
  out.ids.insert(out.ids.end(), seq.ids.begin(), seq.ids.end());
  out.ids.push_back(tok::kEos);
  return out;
}

TokenSeq strip_specials(const TokenSeq& seq) {
  TokenSeq out;
  for (TokenId id : seq.ids) {
    if (id == tok::kEos) break;
    if (id == tok::kSos || id == tok::kPad) continue;
    out.ids.push_back(id);
  }
  return out;
}

void validate(const TokenSeq& seq) {
  bool seen_eos = false;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const TokenId id = seq.ids[i];
    if (id >= kVocabSize) throw MalformedStructure(i, "token id out of range");
    if (!seq.framed) {
      if (id == tok::kSos || id == tok::kEos) throw MalformedStructure(i, "framing token in unframed sequence");
      continue;
    }
    if (i == 0) {
      if (id != tok::kSos) throw MalformedStructure(i, "framed sequence must start with <sos>");
      continue;
    }
    if (id == tok::kSos) throw MalformedStructure(i, "<sos> after position 0");
    if (seen_eos && id != tok::kPad) throw MalformedStructure(i, "token after <eos>");
    if (id == tok::kEos) seen_eos = true;
  }
  if (seq.framed && seq.ids.empty()) throw MalformedStructure(0, "empty framed sequence");
}

namespace {

// Structural tokens eligible for matching, longest text first so the greedy
// scan prefers "<td>" over "<td".
const std::vector<TokenId>& match_order() {
  static const std::vector<TokenId> order = [] {
    std::vector<TokenId> ids;
    for (TokenId id = tok::kTheadOpen; id < kVocabSize; ++id) ids.push_back(id);
    std::stable_sort(ids.begin(), ids.end(),
                     [](TokenId a, TokenId b) { return vocab().text(a).size() > vocab().text(b).size(); });
    return ids;
  }();
  return order;
}

}  // namespace

TokenSeq tokenize(std::string_view html) {
  TokenSeq out;
  std::size_t pos = 0;
  while (pos < html.size()) {
    const std::string_view rest = html.substr(pos);
    bool matched = false;
    for (TokenId id : match_order()) {
      const std::string_view text = vocab().text(id);
      if (rest.substr(0, text.size()) == text) {
        out.ids.push_back(id);
        pos += text.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    std::size_t end = pos + 1;
    while (end < html.size() && html[end] != '<' && html[end - 1] != '>') ++end;
    out.ids.push_back(tok::kUnk);
    pos = end;
  }
  return out;
}

std::string detokenize(const TokenSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    const TokenId id = seq.ids[i];
    if (id == tok::kUnk) throw Error(ErrorCode::UnknownToken, "<unk> at position " + std::to_string(i));
    if (id == tok::kSos || id == tok::kEos || id == tok::kPad) continue;
    out += vocab().text(id);
  }
  return out;
}

TokenSeq from_strings(const std::vector<std::string>& tokens) {
  TokenSeq out;
  out.ids.reserve(tokens.size());
  for (const auto& t : tokens) out.ids.push_back(vocab().lookup(t).value_or(tok::kUnk));
  if (!out.ids.empty() && out.ids.front() == tok::kSos) out.framed = true;
  return out;
}

std::vector<std::string> to_strings(const TokenSeq& seq) {
  std::vector<std::string> out;
  out.reserve(seq.ids.size());
  for (TokenId id : seq.ids) out.emplace_back(vocab().text(id));
  return out;
}

std::string_view label_name(Label label) {
  switch (label) {
    case Label::Table: return "table";
    case Label::Thead: return "thead";
    case Label::Tbody: return "tbody";
    case Label::Tr: return "tr";
    case Label::Td: return "td";
  }
  return "?";
}

namespace {

std::size_t count_nodes(const TableNode& n) {
  std::size_t total = 1;
  for (const auto& c : n.children) total += count_nodes(c);
  return total;
}

bool may_contain(Label parent, Label child) {
  switch (parent) {
    case Label::Table:
      return child != Label::Table;
    case Label::Thead:
    case Label::Tbody:
      return child == Label::Tr;
    case Label::Tr:
      return child == Label::Td;
    case Label::Td:
      return false;
  }
  return false;
}

}  // namespace

std::size_t TableTree::size() const { return count_nodes(root); }

TableTree parse_tree(const TokenSeq& seq) {
  TableTree tree;
  // Path from the root to the currently open node.
  std::vector<TableNode*> open{&tree.root};

  auto push = [&](std::size_t pos, Label label, int rowspan, int colspan) {
    TableNode* parent = open.back();
    if (!may_contain(parent->label, label)) {
      throw MalformedStructure(pos, std::string{"<"} + std::string{label_name(label)} + "> inside <" +
                                        std::string{label_name(parent->label)} + ">");
    }
    parent->children.push_back(TableNode{label, rowspan, colspan, {}});
    open.push_back(&parent->children.back());
  };
  auto pop = [&](std::size_t pos, Label label) {
    if (open.size() < 2 || open.back()->label != label) {
      throw MalformedStructure(pos, std::string{"unbalanced </"} + std::string{label_name(label)} + ">");
    }
    open.pop_back();
  };

  std::size_t i = 0;
  const auto& ids = seq.ids;
  for (; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id >= kVocabSize) throw MalformedStructure(i, "token id out of range");
    if (id == tok::kSos) {
      if (i != 0) throw MalformedStructure(i, "<sos> after position 0");
      continue;
    }
    if (id == tok::kEos) break;
    if (id == tok::kPad) continue;
    switch (id) {
      case tok::kUnk:
        throw MalformedStructure(i, "<unk> token");
      case tok::kTheadOpen: push(i, Label::Thead, 1, 1); break;
      case tok::kTheadClose: pop(i, Label::Thead); break;
      case tok::kTbodyOpen: push(i, Label::Tbody, 1, 1); break;
      case tok::kTbodyClose: pop(i, Label::Tbody); break;
      case tok::kTrOpen: push(i, Label::Tr, 1, 1); break;
      case tok::kTrClose: pop(i, Label::Tr); break;
      case tok::kTdOpen: push(i, Label::Td, 1, 1); break;
      case tok::kTdClose: pop(i, Label::Td); break;
      case tok::kSpanClose:
        throw MalformedStructure(i, "'>' outside a spanning <td group");
      case tok::kTdSpanOpen: {
        const std::size_t start = i;
        int rowspan = 1;
        int colspan = 1;
        std::size_t attrs = 0;
        for (++i; i < ids.size() && ids[i] != tok::kSpanClose; ++i) {
          const TokenId a = ids[i];
          if (is_rowspan(a)) {
            if (rowspan != 1) throw MalformedStructure(i, "duplicate rowspan");
            rowspan = attribute_value(a);
          } else if (is_colspan(a)) {
            if (colspan != 1) throw MalformedStructure(i, "duplicate colspan");
            colspan = attribute_value(a);
          } else {
            throw MalformedStructure(i, "expected attribute or '>' in spanning <td group");
          }
          ++attrs;
        }
        if (i == ids.size()) throw MalformedStructure(start, "unterminated spanning <td group");
        if (attrs == 0) throw MalformedStructure(i, "spanning <td group without attributes");
        push(start, Label::Td, rowspan, colspan);
        break;
      }
      default:
        throw MalformedStructure(i, "attribute token outside a spanning <td group");
    }
  }
  if (seq.framed) {
    if (i == ids.size()) throw MalformedStructure(ids.size(), "framed sequence without <eos>");
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      if (ids[j] != tok::kPad) throw MalformedStructure(j, "token after <eos>");
    }
  }
  if (open.size() != 1) {
    throw MalformedStructure(ids.size(), std::string{"unclosed <"} + std::string{label_name(open.back()->label)} + ">");
  }
  return tree;
}

namespace {

void emit(const TableNode& node, std::vector<TokenId>& out) {
  switch (node.label) {
    case Label::Table:
      for (const auto& c : node.children) emit(c, out);
      return;
    case Label::Thead:
      out.push_back(tok::kTheadOpen);
      for (const auto& c : node.children) emit(c, out);
      out.push_back(tok::kTheadClose);
      return;
    case Label::Tbody:
      out.push_back(tok::kTbodyOpen);
      for (const auto& c : node.children) emit(c, out);
      out.push_back(tok::kTbodyClose);
      return;
    case Label::Tr:
      out.push_back(tok::kTrOpen);
      for (const auto& c : node.children) emit(c, out);
      out.push_back(tok::kTrClose);
      return;
    case Label::Td:
      if (node.rowspan == 1 && node.colspan == 1) {
        out.push_back(tok::kTdOpen);
      } else {
        out.push_back(tok::kTdSpanOpen);
        if (node.rowspan != 1) out.push_back(rowspan_token(node.rowspan));
        if (node.colspan != 1) out.push_back(colspan_token(node.colspan));
        out.push_back(tok::kSpanClose);
      }
      out.push_back(tok::kTdClose);
      return;
  }
}

bool has_span(const TableNode& n) {
  if (n.rowspan != 1 || n.colspan != 1) return true;
  return std::any_of(n.children.begin(), n.children.end(), has_span);
}

}  // namespace

TokenSeq to_tokens(const TableTree& tree) {
  TokenSeq out;
  emit(tree.root, out.ids);
  return out;
}

std::string_view class_name(TableClass c) { return c == TableClass::Simple ? "simple" : "complex"; }

TableClass classify(const TableTree& tree) {
  return has_span(tree.root) ? TableClass::Complex : TableClass::Simple;
}

}  // namespace tsr::grammar
