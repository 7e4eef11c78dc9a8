#include "tsr/teds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include "tsr/error.hpp"

namespace tsr::teds {

namespace {

void annotate(OrderedTree& t, const std::vector<std::vector<int>>& children, int root_pre,
              const std::vector<int>& pre_keys) {
  const std::size_t n = pre_keys.size();
  t.keys.assign(n, 0);
  t.leftmost.assign(n, 0);
  int next = 0;
  // Iterative postorder so deep trees cannot overflow the stack.
  struct Frame {
    int node;
    std::size_t child;
    int leftmost;
  };
  std::vector<Frame> stack{{root_pre, 0, -1}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& kids = children[static_cast<std::size_t>(f.node)];
    if (f.child < kids.size()) {
      const int c = kids[f.child++];
      stack.push_back({c, 0, -1});
      continue;
    }
    const int post = next++;
    t.keys[static_cast<std::size_t>(post)] = pre_keys[static_cast<std::size_t>(f.node)];
    const int lm = kids.empty() ? post : f.leftmost;
    t.leftmost[static_cast<std::size_t>(post)] = lm;
    stack.pop_back();
    if (!stack.empty() && stack.back().leftmost < 0) stack.back().leftmost = lm;
  }
  // A keyroot is the highest node sharing its leftmost leaf.
  std::map<int, int> highest;
  for (int i = 0; i < static_cast<int>(n); ++i) highest[t.leftmost[static_cast<std::size_t>(i)]] = i;
  t.keyroots.clear();
  for (const auto& [lm, node] : highest) t.keyroots.push_back(node);
  std::sort(t.keyroots.begin(), t.keyroots.end());
}

}  // namespace

OrderedTree OrderedTree::from_parents(const std::vector<int>& parents, const std::vector<int>& keys) {
  if (parents.empty() || parents.size() != keys.size() || parents[0] != -1) {
    throw Error(ErrorCode::ShapeMismatch, "from_parents: invalid parent array");
  }
  std::vector<std::vector<int>> children(parents.size());
  for (std::size_t i = 1; i < parents.size(); ++i) {
    const int p = parents[i];
    if (p < 0 || static_cast<std::size_t>(p) >= i) throw Error(ErrorCode::ShapeMismatch, "from_parents: bad parent");
    children[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
  }
  OrderedTree t;
  annotate(t, children, 0, keys);
  return t;
}

int node_key(const grammar::TableNode& node) {
  return static_cast<int>(node.label) * 121 + node.rowspan * 11 + node.colspan;
}

OrderedTree OrderedTree::from_table(const grammar::TableTree& tree) {
  std::vector<int> parents;
  std::vector<int> keys;
  std::function<void(const grammar::TableNode&, int)> walk = [&](const grammar::TableNode& n, int parent) {
    const int self = static_cast<int>(parents.size());
    parents.push_back(parent);
    keys.push_back(node_key(n));
    for (const auto& c : n.children) walk(c, self);
  };
  walk(tree.root, -1);
  return from_parents(parents, keys);
}

int ZhangShasha::distance(const OrderedTree& a, const OrderedTree& b) {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  if (na == 0) return static_cast<int>(nb);
  if (nb == 0) return static_cast<int>(na);
  tree_dist_.assign(na * nb, 0);
  forest_dist_.resize((na + 1) * (nb + 1));
  const std::size_t fw = nb + 1;

  for (int ka : a.keyroots) {
    for (int kb : b.keyroots) {
      const int la = a.leftmost[static_cast<std::size_t>(ka)];
      const int lb = b.leftmost[static_cast<std::size_t>(kb)];
      const std::size_t m = static_cast<std::size_t>(ka - la + 2);
      const std::size_t n = static_cast<std::size_t>(kb - lb + 2);
      int* fd = forest_dist_.data();
      fd[0] = 0;
      for (std::size_t x = 1; x < m; ++x) fd[x * fw] = fd[(x - 1) * fw] + 1;
      for (std::size_t y = 1; y < n; ++y) fd[y] = fd[y - 1] + 1;
      for (std::size_t x = 1; x < m; ++x) {
        const int i = la + static_cast<int>(x) - 1;
        const int li = a.leftmost[static_cast<std::size_t>(i)];
        for (std::size_t y = 1; y < n; ++y) {
          const int j = lb + static_cast<int>(y) - 1;
          const int lj = b.leftmost[static_cast<std::size_t>(j)];
          const int del = fd[(x - 1) * fw + y] + 1;
          const int ins = fd[x * fw + y - 1] + 1;
          if (li == la && lj == lb) {
            const int rel = fd[(x - 1) * fw + y - 1] +
                            (a.keys[static_cast<std::size_t>(i)] == b.keys[static_cast<std::size_t>(j)] ? 0 : 1);
            const int best = std::min({del, ins, rel});
            fd[x * fw + y] = best;
            tree_dist_[static_cast<std::size_t>(i) * nb + static_cast<std::size_t>(j)] = best;
          } else {
            const std::size_t px = static_cast<std::size_t>(li - la);
            const std::size_t py = static_cast<std::size_t>(lj - lb);
            const int sub = fd[px * fw + py] + tree_dist_[static_cast<std::size_t>(i) * nb + static_cast<std::size_t>(j)];
            fd[x * fw + y] = std::min({del, ins, sub});
          }
        }
      }
    }
  }
  return tree_dist_[(na - 1) * nb + (nb - 1)];
}

double tree_edit_distance(const grammar::TableTree& a, const grammar::TableTree& b) {
  ZhangShasha zs;
  return zs.distance(OrderedTree::from_table(a), OrderedTree::from_table(b));
}

double teds_trees(const grammar::TableTree& pred, const grammar::TableTree& gt) {
  const double d = tree_edit_distance(pred, gt);
  const double denom = static_cast<double>(std::max(pred.size(), gt.size()));
  return std::max(0.0, 1.0 - d / denom);
}

double teds(const grammar::TokenSeq& pred, const grammar::TokenSeq& gt) {
  grammar::TableTree gt_tree;
  try {
    gt_tree = grammar::parse_tree(gt);
  } catch (const MalformedStructure& e) {
    throw Error(ErrorCode::InvalidGroundTruth, e.what());
  }
  grammar::TableTree pred_tree;
  try {
    pred_tree = grammar::parse_tree(pred);
  } catch (const MalformedStructure&) {
    return 0.0;
  }
  return teds_trees(pred_tree, gt_tree);
}

namespace {

double percent2(double mean) { return std::round(mean * 10000.0) / 100.0; }

std::string fmt_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

TedsReport evaluate_corpus(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyCorpus, "no samples to evaluate");
  TedsReport report;
  report.samples.reserve(pairs.size());
  for (const auto& p : pairs) {
    grammar::TableTree gt_tree;
    try {
      gt_tree = grammar::parse_tree(p.gt);
    } catch (const MalformedStructure& e) {
      throw Error(ErrorCode::InvalidGroundTruth, "sample '" + p.id + "': " + e.what());
    }
    SampleScore s;
    s.id = p.id;
    s.cls = grammar::classify(gt_tree);
    try {
      s.score = teds_trees(grammar::parse_tree(p.pred), gt_tree);
    } catch (const MalformedStructure&) {
      s.score = 0.0;
    }
    report.samples.push_back(std::move(s));
  }
  std::stable_sort(report.samples.begin(), report.samples.end(),
                   [](const SampleScore& a, const SampleScore& b) { return a.id < b.id; });

  double sum_simple = 0.0;
  double sum_complex = 0.0;
  for (const auto& s : report.samples) {
    if (s.cls == grammar::TableClass::Simple) {
      sum_simple += s.score;
      ++report.n_simple;
    } else {
      sum_complex += s.score;
      ++report.n_complex;
    }
  }
  if (report.n_simple > 0) report.mean_simple = percent2(sum_simple / static_cast<double>(report.n_simple));
  if (report.n_complex > 0) report.mean_complex = percent2(sum_complex / static_cast<double>(report.n_complex));
  report.mean_all = percent2((sum_simple + sum_complex) / static_cast<double>(report.samples.size()));
  return report;
}

nlohmann::json TedsReport::to_json(bool include_samples) const {
  nlohmann::json j;
  j["simple"] = mean_simple ? nlohmann::json(*mean_simple) : nlohmann::json(nullptr);
  j["complex"] = mean_complex ? nlohmann::json(*mean_complex) : nlohmann::json(nullptr);
  j["all"] = mean_all;
  j["n_simple"] = n_simple;
  j["n_complex"] = n_complex;
  if (include_samples) {
    auto& arr = j["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
      arr.push_back({{"id", s.id}, {"score", s.score}, {"class", std::string{grammar::class_name(s.cls)}}});
    }
  }
  return j;
}

std::string comparison_table(const std::vector<std::pair<std::string, TedsReport>>& rows) {
  std::size_t name_w = 5;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s\n", static_cast<int>(name_w), "Model", "Simple", "Complex",
                "All");
  out += buf;
  out += std::string(name_w + 32, '-') + "\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s\n", static_cast<int>(name_w), name.c_str(),
                  fmt_cell(r.mean_simple).c_str(), fmt_cell(r.mean_complex).c_str(),
                  fmt_cell(r.mean_all).c_str());
    out += buf;
  }
  return out;
}

std::string TedsReport::to_table(const std::string& row_name) const {
  return comparison_table({{row_name, *this}});
}

}  // namespace tsr::teds
