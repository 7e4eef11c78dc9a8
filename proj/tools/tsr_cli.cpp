// Command-line entry point: vocab, tokenize, teds, synth, train-vqvae,
// pretrain, finetune, evaluate, recipe.
//
// Errors are reported on stderr as one JSON object
//   {"error": "<code>", "message": "..."}
// and the process exits nonzero.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsr/config.hpp"
#include "tsr/dataset.hpp"
#include "tsr/grammar.hpp"
#include "tsr/pipeline.hpp"
#include "tsr/teds.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

tsr::config::RunConfig resolve_config(const Globals& g) {
  json j = g.config_path.empty() ? tsr::config::to_json(tsr::config::RunConfig::desk())
                                 : tsr::config::to_json(tsr::config::load(g.config_path));
  j = tsr::config::apply_overrides(j, g.overrides);
  auto cfg = tsr::config::from_json(j);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.output_dir = g.out;
  cfg.validate();
  return cfg;
}

tsr::pipeline::Logger logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& s) { std::cerr << s << std::endl; };
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw tsr::Error(tsr::ErrorCode::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Structure sequences keyed by filename, from a labels/predictions JSONL.
// Accepts either html.structure.tokens or a top-level "tokens" array.
std::map<std::string, tsr::grammar::TokenSeq> read_sequences(const fs::path& path) {
  std::map<std::string, tsr::grammar::TokenSeq> out;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !(j.contains("filename") || j.contains("id"))) {
      throw tsr::Error(tsr::ErrorCode::MalformedRecord, path.string() + " line " + std::to_string(n));
    }
    json toks;
    if (j.contains("tokens")) {
      toks = j["tokens"];
    } else if (j.contains("html") && j["html"].contains("structure")) {
      toks = j["html"]["structure"].value("tokens", json());
    }
    if (!toks.is_array()) {
      throw tsr::Error(tsr::ErrorCode::MalformedRecord, path.string() + " line " + std::to_string(n) + ": no tokens");
    }
    out[j.contains("filename") ? j["filename"].get<std::string>() : j["id"].get<std::string>()] =
        tsr::grammar::frame(tsr::grammar::from_strings(toks.get<std::vector<std::string>>()));
  }
  return out;
}

tsr::teds::TedsReport score_files(const fs::path& pred_path, const fs::path& gt_path) {
  const auto preds = read_sequences(pred_path);
  const auto gts = read_sequences(gt_path);
  std::vector<tsr::teds::EvalPair> pairs;
  for (const auto& [id, gt] : gts) {
    auto it = preds.find(id);
    // A missing prediction scores as an empty (malformed) output.
    pairs.push_back({id, it == preds.end() ? tsr::grammar::TokenSeq{} : it->second, gt});
  }
  return tsr::teds::evaluate_corpus(pairs);
}

void print_report(const tsr::teds::TedsReport& r, bool as_json) {
  if (as_json) {
    std::cout << r.to_json(false).dump(2) << "\n";
  } else {
    std::cout << r.to_table();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Table structure recognition: tokenizer, TEDS, synthetic data, VQ-VAE, MIM pretraining, finetuning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config (defaults to the desk profile)");
  app.add_option("--set", g.overrides, "Override a config field, e.g. finetune.full.epochs=3")->take_all();
  app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--out", g.out, "Output directory (default: $TSR_OUTPUT_ROOT or ./runs)");
  app.add_flag("--quiet", g.quiet, "No progress output");

  bool json_out = false;

  auto* vocab = app.add_subcommand("vocab", "Print the 32-token structure vocabulary");
  vocab->add_flag("--json", json_out);

  std::string html;
  auto* tokenize = app.add_subcommand("tokenize", "Tokenize an HTML structure string");
  tokenize->add_option("html", html, "Structure markup")->required();

  std::string pred_html, gt_html, pred_file, gt_file;
  auto* teds = app.add_subcommand("teds", "TEDS between two structures or two JSONL files");
  teds->add_option("--pred", pred_html, "Predicted structure markup");
  teds->add_option("--gt", gt_html, "Ground-truth structure markup");
  teds->add_option("--pred-file", pred_file, "Predictions JSONL");
  teds->add_option("--gt-file", gt_file, "Labels JSONL");
  teds->add_flag("--json", json_out);

  std::size_t synth_n = 1000;
  std::string synth_dir;
  tsr::synth::SynthConfig sc;
  std::optional<std::size_t> min_rows, max_rows, min_cols, max_cols, resolution, fill_styles;
  std::optional<double> span_prob, val_fraction;
  std::optional<bool> header;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset (images/ + labels.jsonl)");
  synth->add_option("--dir", synth_dir, "Dataset directory")->required();
  synth->add_option("-n", synth_n, "Number of tables");
  synth->add_option("--min-rows", min_rows);
  synth->add_option("--max-rows", max_rows);
  synth->add_option("--min-cols", min_cols);
  synth->add_option("--max-cols", max_cols);
  synth->add_option("--span-prob", span_prob);
  synth->add_option("--header", header);
  synth->add_option("--resolution", resolution);
  synth->add_option("--fill-styles", fill_styles);
  synth->add_option("--val-fraction", val_fraction);

  std::string data_dir, vqvae_ckpt, init = "scratch", schedule = "full", ckpt, split = "val";
  auto* train_vqvae = app.add_subcommand("train-vqvae", "Train the visual tokenizer on images/");
  train_vqvae->add_option("--data", data_dir)->required();

  auto* pretrain = app.add_subcommand("pretrain", "Masked image modeling on images/");
  pretrain->add_option("--data", data_dir)->required();
  pretrain->add_option("--vqvae", vqvae_ckpt, "VQ-VAE checkpoint directory")->required();

  auto* finetune = app.add_subcommand("finetune", "Train the structure recognizer");
  finetune->add_option("--data", data_dir)->required();
  finetune->add_option("--init", init, "scratch | mim:<checkpoint>");
  finetune->add_option("--schedule", schedule, "frozen | full");

  auto* evaluate = app.add_subcommand("evaluate", "TEDS of a checkpoint on a split, or of predictions vs labels");
  evaluate->add_option("--data", data_dir);
  evaluate->add_option("--ckpt", ckpt);
  evaluate->add_option("--split", split);
  evaluate->add_option("--pred-file", pred_file);
  evaluate->add_option("--labels", gt_file);
  evaluate->add_flag("--json", json_out);

  auto* recipe = app.add_subcommand("recipe", "synth -> train-vqvae -> pretrain -> finetune x3 -> comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "ConfigError"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*vocab) {
      const auto v = tsr::grammar::build_vocab();
      json arr = json::array();
      for (const auto& e : v.entries()) {
        if (json_out) {
          arr.push_back({{"id", e.id}, {"token", e.text}});
        } else {
          std::cout << static_cast<int>(e.id) << "\t" << e.text << "\n";
        }
      }
      if (json_out) std::cout << arr.dump(2) << "\n";
    } else if (*tokenize) {
      const auto seq = tsr::grammar::tokenize(html);
      std::size_t unk = 0;
      std::vector<int> ids;
      for (auto id : seq.ids) {
        ids.push_back(id);
        unk += id == tsr::grammar::tok::kUnk;
      }
      std::cout << json{{"tokens", tsr::grammar::to_strings(seq)}, {"ids", ids}, {"unk", unk}}.dump() << "\n";
    } else if (*teds) {
      if (!pred_file.empty() || !gt_file.empty()) {
        if (pred_file.empty() || gt_file.empty()) {
          throw tsr::Error(tsr::ErrorCode::ConfigError, "--pred-file and --gt-file go together");
        }
        print_report(score_files(pred_file, gt_file), json_out);
      } else {
        if (gt_html.empty()) throw tsr::Error(tsr::ErrorCode::ConfigError, "need --gt (and --pred)");
        const double s = tsr::teds::teds(tsr::grammar::tokenize(pred_html), tsr::grammar::tokenize(gt_html));
        if (json_out) {
          std::cout << json{{"teds", s}}.dump() << "\n";
        } else {
          std::cout << s << "\n";
        }
      }
    } else if (*synth) {
      const auto cfg = resolve_config(g);
      sc = cfg.synth;
      sc.seed = cfg.seed;
      if (min_rows) sc.min_rows = *min_rows;
      if (max_rows) sc.max_rows = *max_rows;
      if (min_cols) sc.min_cols = *min_cols;
      if (max_cols) sc.max_cols = *max_cols;
      if (span_prob) sc.span_prob = *span_prob;
      if (header) sc.header = *header;
      if (resolution) sc.resolution = *resolution;
      if (fill_styles) sc.fill_styles = *fill_styles;
      if (val_fraction) sc.val_fraction = *val_fraction;
      const auto s = tsr::synth::build_dataset(synth_dir, synth_n, sc);
      std::cout << json{{"dir", synth_dir}, {"train", s.train}, {"val", s.val}, {"simple", s.simple},
                        {"complex", s.complex}}.dump()
                << "\n";
    } else if (*train_vqvae) {
      const auto cfg = resolve_config(g);
      const auto r = tsr::pipeline::train_vqvae(cfg, data_dir, cfg.output_root(), logger(g));
      json j = r.to_json();
      j["checkpoint"] = r.checkpoint.string();
      std::cout << j.dump() << "\n";
    } else if (*pretrain) {
      const auto cfg = resolve_config(g);
      const auto r = tsr::pipeline::pretrain(cfg, data_dir, vqvae_ckpt, cfg.output_root(), logger(g));
      json j = r.to_json();
      j["checkpoint"] = r.checkpoint.string();
      std::cout << j.dump() << "\n";
    } else if (*finetune) {
      const auto cfg = resolve_config(g);
      std::optional<fs::path> mim;
      if (init.rfind("mim:", 0) == 0) {
        mim = init.substr(4);
      } else if (init != "scratch") {
        throw tsr::Error(tsr::ErrorCode::ConfigError, "--init must be scratch or mim:<checkpoint>");
      }
      const auto r = tsr::pipeline::finetune(cfg, data_dir, mim, tsr::model::parse_schedule(schedule),
                                             cfg.output_root(), logger(g));
      json j = r.to_json();
      j["checkpoint"] = r.checkpoint.string();
      j.erase("history");
      std::cout << j.dump() << "\n";
    } else if (*evaluate) {
      if (!pred_file.empty()) {
        if (gt_file.empty()) throw tsr::Error(tsr::ErrorCode::ConfigError, "--pred-file needs --labels");
        print_report(score_files(pred_file, gt_file), json_out);
      } else {
        if (data_dir.empty() || ckpt.empty()) {
          throw tsr::Error(tsr::ErrorCode::ConfigError, "evaluate needs --data and --ckpt, or --pred-file and --labels");
        }
        const auto cfg = resolve_config(g);
        print_report(tsr::pipeline::evaluate_checkpoint(cfg, data_dir, ckpt, split), json_out);
      }
    } else if (*recipe) {
      const auto cfg = resolve_config(g);
      const auto r = tsr::pipeline::run_recipe(cfg, cfg.output_root(), logger(g));
      std::cout << r.comparison;
    }
  } catch (const tsr::Error& e) {
    std::cerr << json{{"error", tsr::error_code_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
