#pragma once

// Tree edit distance (Zhang-Shasha, unit costs) and the TEDS similarity score
// with Simple / Complex / All corpus aggregation.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/grammar.hpp"

namespace tsr::teds {

/// Ordered labeled tree flattened in postorder, annotated for Zhang-Shasha.
struct OrderedTree {
  std::vector<int> keys;      // node identity, postorder
  std::vector<int> leftmost;  // leftmost leaf descendant of each node
  std::vector<int> keyroots;  // ascending

  std::size_t size() const { return keys.size(); }

  /// `parents[i]` is the preorder index of node i's parent (-1 for the root,
  /// which must be node 0); children keep their preorder order.
  static OrderedTree from_parents(const std::vector<int>& parents, const std::vector<int>& keys);
  static OrderedTree from_table(const grammar::TableTree& tree);
};

/// Identity compared by relabel: (label, rowspan, colspan).
int node_key(const grammar::TableNode& node);

/// Reusable scratch space; one per thread.
class ZhangShasha {
 public:
  int distance(const OrderedTree& a, const OrderedTree& b);

 private:
  std::vector<int> tree_dist_;
  std::vector<int> forest_dist_;
};

double tree_edit_distance(const grammar::TableTree& a, const grammar::TableTree& b);

/// 1 - d / max(|a|, |b|), clamped at 0. Node counts include the table root.
double teds_trees(const grammar::TableTree& pred, const grammar::TableTree& gt);

/// Scores a predicted token sequence against the ground truth. A prediction
/// that fails to parse scores 0; a malformed ground truth throws
/// Error(InvalidGroundTruth).
double teds(const grammar::TokenSeq& pred, const grammar::TokenSeq& gt);

struct SampleScore {
  std::string id;
  double score = 0.0;
  grammar::TableClass cls = grammar::TableClass::Simple;
};

struct TedsReport {
  std::vector<SampleScore> samples;  // sorted by id
  // Percentages rounded to two decimals; empty when a class has no samples.
  std::optional<double> mean_simple;
  std::optional<double> mean_complex;
  double mean_all = 0.0;
  std::size_t n_simple = 0;
  std::size_t n_complex = 0;

  nlohmann::json to_json(bool include_samples = true) const;
  /// Aligned text table with Simple / Complex / All columns.
  std::string to_table(const std::string& row_name = "model") const;
};

struct EvalPair {
  std::string id;
  grammar::TokenSeq pred;
  grammar::TokenSeq gt;
};

/// Classifies each sample by its ground-truth tree. Throws Error(EmptyCorpus)
/// on an empty list and Error(InvalidGroundTruth) on a malformed ground truth.
TedsReport evaluate_corpus(const std::vector<EvalPair>& pairs);

/// Formats several reports as one comparison table.
std::string comparison_table(const std::vector<std::pair<std::string, TedsReport>>& rows);

}  // namespace tsr::teds
