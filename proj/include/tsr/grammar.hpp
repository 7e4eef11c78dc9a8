#pragma once

// HTML table-structure vocabulary (32 tokens), tokenizer, and the parser that
// turns a token sequence into a TableTree.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsr::grammar {

using TokenId = std::uint8_t;

inline constexpr std::size_t kVocabSize = 32;
inline constexpr int kMaxSpan = 10;

namespace tok {
inline constexpr TokenId kSos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPad = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kTheadOpen = 4;
inline constexpr TokenId kTheadClose = 5;
inline constexpr TokenId kTbodyOpen = 6;
inline constexpr TokenId kTbodyClose = 7;
inline constexpr TokenId kTrOpen = 8;
inline constexpr TokenId kTrClose = 9;
inline constexpr TokenId kTdOpen = 10;
inline constexpr TokenId kTdClose = 11;
inline constexpr TokenId kTdSpanOpen = 12;  // "<td"
inline constexpr TokenId kSpanClose = 13;   // ">"
inline constexpr TokenId kRowspanFirst = 14;  // ' rowspan="2"' .. ' rowspan="10"'
inline constexpr TokenId kColspanFirst = 23;  // ' colspan="2"' .. ' colspan="10"'
}  // namespace tok

class Vocabulary {
 public:
  struct Entry {
    std::string text;
    TokenId id;
  };

  Vocabulary();

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  std::string_view text(TokenId id) const;
  std::optional<TokenId> lookup(std::string_view text) const;

 private:
  std::vector<Entry> entries_;
};

/// The canonical vocabulary: specials first (<sos>=0, <eos>=1, <pad>=2,
/// <unk>=3), then paired tags, the spanning pair, rowspan 2..10, colspan 2..10.
Vocabulary build_vocab();
const Vocabulary& vocab();

bool is_special(TokenId id);
bool is_rowspan(TokenId id);
bool is_colspan(TokenId id);
inline bool is_attribute(TokenId id) { return is_rowspan(id) || is_colspan(id); }
/// Span value 2..10 carried by an attribute token.
int attribute_value(TokenId id);
TokenId rowspan_token(int value);
TokenId colspan_token(int value);

struct TokenSeq {
  std::vector<TokenId> ids;
  // true when the sequence carries <sos> ... <eos> framing.
  bool framed = false;

  bool operator==(const TokenSeq&) const = default;
};

/// Adds <sos>/<eos> around an unframed sequence.
TokenSeq frame(const TokenSeq& seq);
/// Drops <sos>, <eos>, <pad> (and anything after <eos>).
TokenSeq strip_specials(const TokenSeq& seq);
/// Checks the id-range and framing invariants; throws MalformedStructure.
void validate(const TokenSeq& seq);

/// Greedy longest-match tokenization over the structural tokens. An
/// unrecognized span (up to the next '<', or through the next '>') becomes a
/// single <unk>.
TokenSeq tokenize(std::string_view html);

/// Concatenates token strings, dropping framing and padding. Throws
/// Error(UnknownToken) when <unk> is present.
std::string detokenize(const TokenSeq& seq);

/// Maps token strings one-to-one (PubTabNet annotation style); unknown
/// strings become <unk>.
TokenSeq from_strings(const std::vector<std::string>& tokens);
std::vector<std::string> to_strings(const TokenSeq& seq);

enum class Label : std::uint8_t { Table, Thead, Tbody, Tr, Td };
std::string_view label_name(Label label);

struct TableNode {
  Label label = Label::Table;
  int rowspan = 1;
  int colspan = 1;
  std::vector<TableNode> children;

  bool operator==(const TableNode&) const = default;
};

struct TableTree {
  TableNode root;

  std::size_t size() const;
  bool operator==(const TableTree&) const = default;
};

/// Builds the tree under an implicit `table` root. Throws MalformedStructure
/// on unbalanced tags, attributes outside a `<td ... >` group, or nesting
/// violations.
TableTree parse_tree(const TokenSeq& seq);

/// Emits the canonical unframed token sequence for a tree (rowspan before
/// colspan inside a spanning group).
TokenSeq to_tokens(const TableTree& tree);

enum class TableClass { Simple, Complex };
std::string_view class_name(TableClass c);
TableClass classify(const TableTree& tree);

}  // namespace tsr::grammar
