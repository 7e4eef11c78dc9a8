#include "tsr/synth.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "tsr/image_io.hpp"
#include "tsr/nn/checkpoint.hpp"
#include "tsr/nn/trainer.hpp"

namespace tsr::synth {

using grammar::Label;
using grammar::TableNode;
using grammar::TableTree;

void SynthConfig::validate() const {
  if (min_rows < 1 || min_cols < 1 || min_rows > max_rows || min_cols > max_cols) {
    throw Error(ErrorCode::ConfigError, "synth: need 1 <= min <= max for rows and cols");
  }
  if (max_rows > 64 || max_cols > 64) throw Error(ErrorCode::ConfigError, "synth: at most 64 rows/cols");
  if (!(span_prob >= 0.0 && span_prob <= 1.0)) throw Error(ErrorCode::ConfigError, "synth.span_prob must be in [0, 1]");
  if (patch == 0 || resolution == 0 || resolution % patch != 0) {
    throw Error(ErrorCode::IndivisibleImage, "synth.resolution " + std::to_string(resolution) +
                                                 " not divisible by patch " + std::to_string(patch));
  }
  if (fill_styles < 1) throw Error(ErrorCode::ConfigError, "synth.fill_styles must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "synth.val_fraction must be in [0, 1)");
  }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"min_rows", c.min_rows},       {"max_rows", c.max_rows},     {"min_cols", c.min_cols},
       {"max_cols", c.max_cols},       {"span_prob", c.span_prob},   {"header", c.header},
       {"resolution", c.resolution},   {"patch", c.patch},           {"fill_styles", c.fill_styles},
       {"seed", c.seed},               {"val_fraction", c.val_fraction}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.min_rows = j.value("min_rows", c.min_rows);
  c.max_rows = j.value("max_rows", c.max_rows);
  c.min_cols = j.value("min_cols", c.min_cols);
  c.max_cols = j.value("max_cols", c.max_cols);
  c.span_prob = j.value("span_prob", c.span_prob);
  c.header = j.value("header", c.header);
  c.resolution = j.value("resolution", c.resolution);
  c.patch = j.value("patch", c.patch);
  c.fill_styles = j.value("fill_styles", c.fill_styles);
  c.seed = j.value("seed", c.seed);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
}

namespace {

constexpr int kMaxSpan = 10;

std::size_t uniform_in(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

bool coin(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

struct Placed {
  std::size_t row, col, rowspan, colspan;
};

// Fills a rows x cols grid band [row_lo, row_hi) with cells. Every row keeps
// at least one cell that starts in it, so no <tr> ends up empty.
void place_band(std::vector<std::vector<int>>& occ, std::size_t row_lo, std::size_t row_hi, std::size_t cols,
                double span_prob, std::mt19937_64& rng, std::vector<Placed>& out) {
  auto free_in_row = [&](std::size_t r) {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols; ++c) n += occ[r][c] < 0;
    return n;
  };
  for (std::size_t r = row_lo; r < row_hi; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (occ[r][c] >= 0) continue;
      std::size_t rs = 1;
      std::size_t cs = 1;
      if (coin(rng, span_prob)) {
        std::size_t run = 0;
        while (c + run < cols && occ[r][c + run] < 0 && run < static_cast<std::size_t>(kMaxSpan)) ++run;
        const std::size_t max_rows_here = std::min<std::size_t>(row_hi - r, kMaxSpan);
        cs = uniform_in(rng, 1, run);
        // Largest rowspan whose block is free and leaves later rows a cell.
        std::size_t rmax = 1;
        for (std::size_t k = 1; k < max_rows_here; ++k) {
          bool ok = true;
          for (std::size_t cc = c; cc < c + cs && ok; ++cc) ok = occ[r + k][cc] < 0;
          ok = ok && free_in_row(r + k) > cs;
          if (!ok) break;
          rmax = k + 1;
        }
        rs = uniform_in(rng, 1, rmax);
        if (rs == 1 && cs == 1) {
          if (run >= 2) {
            cs = 2;
          } else if (rmax >= 2) {
            rs = 2;
          }
        }
      }
      const int id = static_cast<int>(out.size());
      for (std::size_t rr = r; rr < r + rs; ++rr) {
        for (std::size_t cc = c; cc < c + cs; ++cc) occ[rr][cc] = id;
      }
      out.push_back(Placed{r, c, rs, cs});
    }
  }
}

TableNode make_td(const Placed& p) {
  TableNode td;
  td.label = Label::Td;
  td.rowspan = static_cast<int>(p.rowspan);
  td.colspan = static_cast<int>(p.colspan);
  return td;
}

// Cell geometry recovered from the tree: grid position and span of every td.
struct CellBox {
  std::size_t row, col, rowspan, colspan;
  bool header;
};

struct Layout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<CellBox> cells;
};

Layout layout_of(const TableTree& tree) {
  Layout lay;
  std::vector<std::vector<bool>> occ;
  std::size_t row = 0;
  auto visit_row = [&](const TableNode& tr, bool header) {
    if (occ.size() <= row) occ.resize(row + 1);
    std::size_t col = 0;
    for (const auto& td : tr.children) {
      while (col < occ[row].size() && occ[row][col]) ++col;
      const auto rs = static_cast<std::size_t>(td.rowspan);
      const auto cs = static_cast<std::size_t>(td.colspan);
      if (occ.size() < row + rs) occ.resize(row + rs);
      for (std::size_t r = row; r < row + rs; ++r) {
        if (occ[r].size() < col + cs) occ[r].resize(col + cs, false);
        for (std::size_t c = col; c < col + cs; ++c) occ[r][c] = true;
      }
      lay.cells.push_back(CellBox{row, col, rs, cs, header});
      col += cs;
    }
    ++row;
  };
  for (const auto& child : tree.root.children) {
    if (child.label == Label::Tr) {
      visit_row(child, false);
    } else if (child.label == Label::Thead || child.label == Label::Tbody) {
      for (const auto& tr : child.children) visit_row(tr, child.label == Label::Thead);
    }
  }
  lay.rows = occ.size();
  for (const auto& r : occ) lay.cols = std::max(lay.cols, r.size());
  return lay;
}

void fill_rect(nn::Tensor<float>& img, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1,
               const float (&rgb)[3]) {
  y1 = std::min(y1, img.dim(0));
  x1 = std::min(x1, img.dim(1));
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = rgb[k];
    }
  }
}

}  // namespace

std::pair<TableTree, grammar::TokenSeq> generate_table(const SynthConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t rows = uniform_in(rng, config.min_rows, config.max_rows);
  const std::size_t cols = uniform_in(rng, config.min_cols, config.max_cols);
  const bool header = config.header && rows >= 2;
  std::vector<std::vector<int>> occ(rows, std::vector<int>(cols, -1));
  std::vector<Placed> cells;
  const std::size_t body_start = header ? 1 : 0;
  if (header) place_band(occ, 0, 1, cols, config.span_prob, rng, cells);
  place_band(occ, body_start, rows, cols, config.span_prob, rng, cells);

  TableTree tree;
  std::vector<TableNode> trs(rows);
  for (auto& tr : trs) tr.label = Label::Tr;
  for (const auto& p : cells) trs[p.row].children.push_back(make_td(p));
  if (header) {
    TableNode thead;
    thead.label = Label::Thead;
    thead.children.push_back(std::move(trs[0]));
    tree.root.children.push_back(std::move(thead));
  }
  TableNode tbody;
  tbody.label = Label::Tbody;
  for (std::size_t r = body_start; r < rows; ++r) tbody.children.push_back(std::move(trs[r]));
  tree.root.children.push_back(std::move(tbody));
  return {tree, grammar::frame(grammar::to_tokens(tree))};
}

nn::Tensor<float> render(const TableTree& tree, const SynthConfig& config) {
  config.validate();
  const Layout lay = layout_of(tree);
  const std::size_t res = config.resolution;
  constexpr std::size_t kMargin = 2;
  constexpr std::size_t kMinCell = 4;
  if (lay.rows == 0 || lay.cols == 0) throw Error(ErrorCode::GridOverflow, "table has no cells to draw");
  const std::size_t span = res - 2 * kMargin;
  if (res <= 2 * kMargin || span / lay.rows < kMinCell || span / lay.cols < kMinCell) {
    throw Error(ErrorCode::GridOverflow, std::to_string(lay.rows) + "x" + std::to_string(lay.cols) +
                                             " grid does not fit a " + std::to_string(res) + " px image");
  }
  auto y_at = [&](std::size_t r) { return kMargin + (r * span) / lay.rows; };
  auto x_at = [&](std::size_t c) { return kMargin + (c * span) / lay.cols; };

  static constexpr float kWhite[3] = {1.0f, 1.0f, 1.0f};
  static constexpr float kHeader[3] = {0.78f, 0.84f, 0.93f};
  static constexpr float kBorder[3] = {0.12f, 0.12f, 0.15f};
  static constexpr float kInk[3] = {0.35f, 0.35f, 0.40f};

  nn::Tensor<float> img({res, res, 3}, 1.0f);
  fill_rect(img, 0, res, 0, res, kWhite);
  for (const auto& cell : lay.cells) {
    const std::size_t y0 = y_at(cell.row);
    const std::size_t y1 = y_at(cell.row + cell.rowspan);
    const std::size_t x0 = x_at(cell.col);
    const std::size_t x1 = x_at(cell.col + cell.colspan);
    if (cell.header) fill_rect(img, y0, y1, x0, x1, kHeader);
    // Ink bars stand in for cell text; the style depends on the cell's grid
    // position and the config seed only.
    const std::uint64_t style =
        nn::mix_seed({config.seed, cell.row, cell.col, cell.rowspan, cell.colspan}) % config.fill_styles;
    const std::size_t inner_w = x1 - x0 > 3 ? x1 - x0 - 3 : 0;
    const std::size_t mid = (y0 + y1) / 2;
    if (style >= 1 && inner_w > 0) {
      const std::size_t len = std::max<std::size_t>(1, inner_w * (style == 1 ? 1 : 2) / 3);
      fill_rect(img, mid, mid + 1, x0 + 2, x0 + 2 + std::min(len, inner_w), kInk);
    }
    if (style >= 3 && y1 - y0 >= 6 && inner_w > 0) {
      fill_rect(img, mid - 2, mid - 1, x0 + 2, x0 + 2 + std::max<std::size_t>(1, inner_w / 2), kInk);
    }
    // Outline of the merged cell; shared edges overlap.
    fill_rect(img, y0, y0 + 1, x0, x1 + 1, kBorder);
    fill_rect(img, y1, y1 + 1, x0, x1 + 1, kBorder);
    fill_rect(img, y0, y1 + 1, x0, x0 + 1, kBorder);
    fill_rect(img, y0, y1 + 1, x1, x1 + 1, kBorder);
  }
  return img;
}

DatasetSummary build_dataset(const std::filesystem::path& dir, std::size_t n, const SynthConfig& config) {
  config.validate();
  if (n == 0) throw Error(ErrorCode::ConfigError, "build_dataset needs n >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + (dir / "images").string() + ": " + ec.message());

  const auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
  std::vector<bool> is_val(n, false);
  const auto perm = nn::shuffled_indices(n, nn::mix_seed({config.seed, 0x5e}));
  for (std::size_t i = 0; i < n_val; ++i) is_val[perm[i]] = true;

  DatasetSummary summary;
  std::ostringstream labels;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(nn::mix_seed({config.seed, i}));
    auto [tree, tokens] = generate_table(config, rng);
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i << ".png";
    io::write_png(dir / "images" / name.str(), render(tree, config));
    nlohmann::json rec = {{"filename", name.str()},
                          {"split", is_val[i] ? "val" : "train"},
                          {"html", {{"structure", {{"tokens", grammar::to_strings(grammar::strip_specials(tokens))}}}}}};
    labels << rec.dump() << '\n';
    (is_val[i] ? summary.val : summary.train) += 1;
    (grammar::classify(tree) == grammar::TableClass::Simple ? summary.simple : summary.complex) += 1;
  }
  nn::atomic_write_file(dir / "labels.jsonl", labels.str());
  return summary;
}

}  // namespace tsr::synth
