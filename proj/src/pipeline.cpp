#include "tsr/pipeline.hpp"

#include <fstream>
#include <set>

#include "tsr/dataset.hpp"
#include "tsr/nn/checkpoint.hpp"

namespace tsr::pipeline {

namespace {

// Stream ids for mix_seed so phases never share random streams.
enum Stream : std::uint64_t { kPretrainData = 1, kFinetuneData = 2, kVqvae = 3, kMim = 4, kTsr = 5, kHoldout = 6 };

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

vision::Normalization normalization_for(const config::RunConfig& cfg, const std::vector<nn::Tensor<float>>& raw) {
  return cfg.image.normalization == "imagenet" ? vision::Normalization::imagenet()
                                               : vision::Normalization::from_images(raw);
}

nlohmann::json grid_json(const vision::PatchGrid& g) {
  return {{"patch", g.patch}, {"rows", g.rows}, {"cols", g.cols}, {"channels", g.channels}};
}

void append_line(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path.string());
  out << j.dump() << '\n';
}

void fresh_file(const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  fs::remove(path, ec);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

synth::DatasetSummary make_dataset(const config::RunConfig& cfg, const fs::path& dir, std::size_t n,
                                   std::uint64_t seed, double val_fraction) {
  synth::SynthConfig sc = cfg.synth;
  sc.seed = seed;
  sc.val_fraction = val_fraction;
  return synth::build_dataset(dir, n, sc);
}

nlohmann::json VqvaeResult::to_json() const { return {{"final_loss", final_loss}, {"codes_used", codes_used}}; }

VqvaeResult train_vqvae(const config::RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir,
                        const Logger& log) {
  cfg.validate();
  const auto grid = cfg.grid();
  const auto raw = data::load_images(dataset_dir, cfg.image.resolution);
  const auto norm = normalization_for(cfg, raw.images);
  const auto images = data::normalize_all(raw.images, norm);
  say(log, "train-vqvae: " + std::to_string(images.size()) + " images, K=" + std::to_string(cfg.vqvae.codebook_size));

  nn::ParamStore<float> store;
  std::mt19937_64 rng(nn::mix_seed({cfg.seed, kVqvae}));
  const vq::Vqvae<float> model(store, cfg.vqvae, grid, rng);
  const std::string name = "vqvae-" + cfg.lineage();
  const fs::path log_path = out_dir / (name + ".log.jsonl");
  fresh_file(log_path);
  const auto history = vq::train_vqvae(store, model, images, cfg.optim, nn::mix_seed({cfg.seed, kVqvae, 1}),
                                       [&](const vq::VqvaeEpochLog& e) {
                                         append_line(log_path, e.to_json());
                                         say(log, "  epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss) +
                                                      " tau " + fmt(e.tau, 3));
                                       });
  std::set<int> used;
  for (const auto& img : images) {
    for (int c : model.tokenize(img).codes) used.insert(c);
  }
  VqvaeResult res;
  res.final_loss = history.back().loss;
  res.codes_used = used.size();
  res.checkpoint = out_dir / name;
  nn::CheckpointInfo info{"vqvae", cfg.seed,
                          {{"normalization", norm.to_json()},
                           {"grid", grid_json(grid)},
                           {"vqvae", cfg.vqvae},
                           {"result", res.to_json()}}};
  nn::save_checkpoint(res.checkpoint, store, info);
  say(log, "  codes used " + std::to_string(res.codes_used) + ", saved " + res.checkpoint.string());
  return res;
}

nlohmann::json PretrainResult::to_json() const {
  return {{"final_loss", final_loss},
          {"masked_accuracy", masked_accuracy},
          {"heldout_loss", heldout_loss},
          {"heldout_images", heldout_images}};
}

PretrainResult pretrain(const config::RunConfig& cfg, const fs::path& dataset_dir, const fs::path& vqvae_ckpt,
                        const fs::path& out_dir, const Logger& log) {
  cfg.validate();
  const auto grid = cfg.grid();
  const auto vinfo = nn::read_checkpoint_info(vqvae_ckpt);
  if (vinfo.tag != "vqvae") throw Error(ErrorCode::ConfigMismatch, vqvae_ckpt.string() + " is not a vqvae checkpoint");
  if (vinfo.extra.value("grid", nlohmann::json()) != grid_json(grid)) {
    throw Error(ErrorCode::ConfigMismatch, "tokenizer grid " + vinfo.extra.value("grid", nlohmann::json()).dump() +
                                               " does not match patch grid " + grid_json(grid).dump());
  }
  vq::VqvaeConfig vcfg;
  vq::from_json(vinfo.extra.at("vqvae"), vcfg);
  nn::ParamStore<float> vstore;
  std::mt19937_64 vrng(0);
  const vq::Vqvae<float> tokenizer(vstore, vcfg, grid, vrng);
  nn::load_checkpoint(vqvae_ckpt, vstore);
  const auto norm = vision::Normalization::from_json(vinfo.extra.at("normalization"));

  const auto raw = data::load_images(dataset_dir, cfg.image.resolution);
  const auto images = data::normalize_all(raw.images, norm);
  std::vector<vq::TokenGrid> targets;
  targets.reserve(images.size());
  for (const auto& img : images) targets.push_back(tokenizer.tokenize(img));

  const std::string name = "mim-" + cfg.lineage();
  {
    nlohmann::json cache = nlohmann::json::object();
    for (std::size_t i = 0; i < images.size(); ++i) cache[raw.names[i]] = targets[i].to_json();
    fs::create_directories(out_dir);
    nn::atomic_write_file(out_dir / (name + ".targets.json"), cache.dump());
  }

  const auto n_hold = static_cast<std::size_t>(cfg.pretrain.holdout_fraction * static_cast<double>(images.size()));
  const auto perm = nn::shuffled_indices(images.size(), nn::mix_seed({cfg.seed, kHoldout}));
  std::vector<nn::Tensor<float>> train, held;
  std::vector<vq::TokenGrid> train_t, held_t;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const std::size_t i = perm[k];
    (k < n_hold ? held : train).push_back(images[i]);
    (k < n_hold ? held_t : train_t).push_back(targets[i]);
  }
  say(log, "pretrain: " + std::to_string(train.size()) + " train / " + std::to_string(held.size()) +
               " held-out images, mask ratio " + fmt(cfg.pretrain.mask_ratio, 2));

  nn::ParamStore<float> store;
  std::mt19937_64 rng(nn::mix_seed({cfg.seed, kMim}));
  const mim::MimModel<float> model(store, cfg.model, grid, vcfg.codebook_size, rng);
  const fs::path log_path = out_dir / (name + ".log.jsonl");
  fresh_file(log_path);
  const auto history =
      mim::pretrain(store, model, cfg.pretrain, cfg.optim, train, train_t, held, held_t,
                    nn::mix_seed({cfg.seed, kMim, 1}), [&](const mim::MimEpochLog& e) {
                      append_line(log_path, e.to_json());
                      say(log, "  epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss) + " held-out acc " +
                                   fmt(e.masked_accuracy) + " lr " + fmt(e.lr, 6));
                    });
  PretrainResult res;
  res.final_loss = history.back().loss;
  res.masked_accuracy = history.back().masked_accuracy;
  res.heldout_loss = history.back().heldout_loss;
  res.heldout_images = held.size();
  res.checkpoint = out_dir / name;
  nn::CheckpointInfo info{"mim", cfg.seed,
                          {{"normalization", norm.to_json()},
                           {"grid", grid_json(grid)},
                           {"model", cfg.model},
                           {"codebook_size", vcfg.codebook_size},
                           {"result", res.to_json()}}};
  nn::save_checkpoint(res.checkpoint, store, info);
  say(log, "  saved " + res.checkpoint.string());
  return res;
}

nlohmann::json FinetuneResult::to_json() const {
  return {{"init", init},
          {"schedule", schedule},
          {"encoder_hash_before", encoder_hash_before},
          {"encoder_hash_after", encoder_hash_after},
          {"history", history},
          {"val", val.to_json(false)}};
}

FinetuneResult finetune(const config::RunConfig& cfg, const fs::path& dataset_dir,
                        const std::optional<fs::path>& mim_ckpt, model::Schedule schedule, const fs::path& out_dir,
                        const Logger& log) {
  cfg.validate();
  const auto grid = cfg.grid();
  FinetuneResult res;
  res.init = mim_ckpt ? "mim" : "scratch";
  res.schedule = std::string(model::schedule_name(schedule));

  vision::Normalization norm;
  if (mim_ckpt) {
    const auto info = nn::read_checkpoint_info(*mim_ckpt);
    if (info.tag != "mim") throw Error(ErrorCode::CheckpointMismatch, mim_ckpt->string() + " is not a mim checkpoint");
    const nlohmann::json want_model = cfg.model;
    if (info.extra.value("model", nlohmann::json()) != want_model ||
        info.extra.value("grid", nlohmann::json()) != grid_json(grid)) {
      throw Error(ErrorCode::CheckpointMismatch, "encoder checkpoint was trained with model " +
                                                     info.extra.value("model", nlohmann::json()).dump() +
                                                     " grid " + info.extra.value("grid", nlohmann::json()).dump());
    }
    norm = vision::Normalization::from_json(info.extra.at("normalization"));
  } else {
    norm = normalization_for(cfg, data::load_split_images(dataset_dir, "train", cfg.image.resolution));
  }
  const auto train = data::load_examples(dataset_dir, "train", cfg.image.resolution, norm);
  const auto val = data::load_examples(dataset_dir, "val", cfg.image.resolution, norm);

  nn::ParamStore<float> store;
  // Same stream for both inits: the decoder starts from identical weights.
  std::mt19937_64 rng(nn::mix_seed({cfg.seed, kTsr}));
  const model::TsrModel<float> model(store, cfg.model, grid, rng);
  if (mim_ckpt) nn::load_checkpoint(*mim_ckpt, store, nn::LoadOptions{"encoder.", false});
  res.encoder_hash_before = nn::hex64(nn::params_hash(store, "encoder."));

  const std::string name = "tsr-" + res.init + "-" + res.schedule + "-" + cfg.lineage();
  const fs::path log_path = out_dir / (name + ".log.jsonl");
  fresh_file(log_path);
  say(log, "finetune " + res.init + "/" + res.schedule + ": " + std::to_string(train.size()) + " train / " +
               std::to_string(val.size()) + " val");
  const auto history = model::finetune(
      store, model, schedule, cfg.finetune, cfg.optim, train, val, nn::mix_seed({cfg.seed, kTsr, 1}),
      [&](const model::FinetuneEpochLog& e) {
        append_line(log_path, e.to_json());
        std::string msg = "  epoch " + std::to_string(e.epoch) + " loss " + fmt(e.loss);
        if (e.val) msg += " val TEDS " + fmt(e.val->mean_all, 2);
        say(log, msg);
      });
  for (const auto& e : history) res.history.push_back(e.to_json());
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    if (it->val) {
      res.val = *it->val;
      break;
    }
  }
  res.encoder_hash_after = nn::hex64(nn::params_hash(store, "encoder."));
  res.checkpoint = out_dir / name;
  store.set_trainable("encoder.", true);
  nn::CheckpointInfo info{"tsr", cfg.seed,
                          {{"normalization", norm.to_json()},
                           {"grid", grid_json(grid)},
                           {"model", cfg.model},
                           {"init", res.init},
                           {"schedule", res.schedule}}};
  nn::save_checkpoint(res.checkpoint, store, info);
  nn::atomic_write_file(out_dir / (name + ".metrics.json"), res.to_json().dump(2) + "\n");
  say(log, "  saved " + res.checkpoint.string());
  return res;
}

teds::TedsReport evaluate_checkpoint(const config::RunConfig& cfg, const fs::path& dataset_dir,
                                     const fs::path& tsr_ckpt, const std::string& split,
                                     nlohmann::json* predictions) {
  const auto info = nn::read_checkpoint_info(tsr_ckpt);
  if (info.tag != "tsr") throw Error(ErrorCode::CheckpointMismatch, tsr_ckpt.string() + " is not a tsr checkpoint");
  nn::LayerConfig mcfg;
  nn::from_json(info.extra.at("model"), mcfg);
  const auto& g = info.extra.at("grid");
  const vision::PatchGrid grid{g.at("patch").get<std::size_t>(), g.at("rows").get<std::size_t>(),
                               g.at("cols").get<std::size_t>(), g.at("channels").get<std::size_t>()};
  nn::ParamStore<float> store;
  std::mt19937_64 rng(0);
  const model::TsrModel<float> model(store, mcfg, grid, rng);
  nn::load_checkpoint(tsr_ckpt, store);
  const auto norm = vision::Normalization::from_json(info.extra.at("normalization"));
  const auto examples = data::load_examples(dataset_dir, split, grid.height(), norm);
  if (examples.empty()) throw Error(ErrorCode::EmptyCorpus, "no '" + split + "' records in " + dataset_dir.string());
  std::vector<model::TokenSeq> preds;
  std::vector<teds::EvalPair> pairs;
  for (const auto& ex : examples) {
    pairs.push_back(teds::EvalPair{ex.id, model::greedy_decode(model, ex.image, cfg.eval.max_len), ex.tokens});
  }
  if (predictions) {
    *predictions = nlohmann::json::array();
    for (const auto& p : pairs) {
      (*predictions).push_back({{"filename", p.id}, {"tokens", grammar::to_strings(grammar::strip_specials(p.pred))}});
    }
  }
  return teds::evaluate_corpus(pairs);
}

RecipeResult run_recipe(const config::RunConfig& cfg, const fs::path& out_dir, const Logger& log) {
  cfg.validate();
  const fs::path pre_dir = out_dir / "data" / "pretrain";
  const fs::path ft_dir = out_dir / "data" / "finetune";
  std::error_code ec;
  fs::remove_all(out_dir / "data", ec);

  say(log, "synth: " + std::to_string(cfg.data.pretrain_images) + " pretraining images");
  make_dataset(cfg, pre_dir, cfg.data.pretrain_images, nn::mix_seed({cfg.seed, kPretrainData}), 0.0);
  // Pretraining data is image-only.
  fs::remove(pre_dir / "labels.jsonl", ec);
  const std::size_t n_ft = cfg.data.train_images + cfg.data.val_images;
  say(log, "synth: " + std::to_string(n_ft) + " labeled tables");
  const auto summary = make_dataset(cfg, ft_dir, n_ft, nn::mix_seed({cfg.seed, kFinetuneData}),
                                    static_cast<double>(cfg.data.val_images) / static_cast<double>(n_ft));

  const fs::path ckpt_dir = out_dir / "checkpoints";
  const auto vq = train_vqvae(cfg, pre_dir, ckpt_dir, log);
  const auto pre = pretrain(cfg, pre_dir, vq.checkpoint, ckpt_dir, log);
  const auto scratch = finetune(cfg, ft_dir, std::nullopt, model::Schedule::Full, ckpt_dir, log);
  const auto full = finetune(cfg, ft_dir, pre.checkpoint, model::Schedule::Full, ckpt_dir, log);
  const auto frozen = finetune(cfg, ft_dir, pre.checkpoint, model::Schedule::Frozen, ckpt_dir, log);

  RecipeResult res;
  res.comparison = teds::comparison_table({{"LinearProj (from scratch)", scratch.val},
                                           {"LinearProj (frozen)", frozen.val},
                                           {"LinearProj", full.val}});
  res.metrics = {{"config_hash", nn::hex64(cfg.hash())},
                 {"seed", cfg.seed},
                 {"data",
                  {{"pretrain_images", cfg.data.pretrain_images},
                   {"train", summary.train},
                   {"val", summary.val},
                   {"simple", summary.simple},
                   {"complex", summary.complex}}},
                 {"vqvae", vq.to_json()},
                 {"pretrain", pre.to_json()},
                 {"finetune",
                  {{"scratch_full", scratch.to_json()},
                   {"mim_full", full.to_json()},
                   {"mim_frozen", frozen.to_json()}}}};
  res.metrics_path = out_dir / "metrics.json";
  nn::atomic_write_file(res.metrics_path, res.metrics.dump(2) + "\n");
  nn::atomic_write_file(out_dir / "comparison.txt", res.comparison);
  say(log, "\n" + res.comparison);
  return res;
}

}  // namespace tsr::pipeline
