#include "tsr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "tsr/nn/checkpoint.hpp"

namespace tsr::config {

RunConfig RunConfig::desk() {
  RunConfig c;
  c.synth.resolution = c.image.resolution;
  c.synth.patch = c.image.patch;
  c.synth.val_fraction = static_cast<double>(c.data.val_images) /
                         static_cast<double>(c.data.train_images + c.data.val_images);
  return c;
}

RunConfig RunConfig::full_scale() {
  RunConfig c = desk();
  c.image.resolution = 448;
  c.image.normalization = "imagenet";
  c.model = nn::LayerConfig{};
  c.vqvae.codebook_size = 8192;
  c.vqvae.code_dim = 512;
  c.vqvae.hidden = 512;
  c.finetune.full.epochs = 15;
  c.finetune.full.lr = 1e-4;
  c.finetune.frozen.lr = 1e-4;
  c.pretrain.schedule.lr = 1e-4;
  c.synth.resolution = 448;
  return c;
}

void RunConfig::validate() const {
  if (image.patch == 0 || image.resolution % image.patch != 0) {
    throw Error(ErrorCode::IndivisibleImage, "image.resolution " + std::to_string(image.resolution) +
                                                 " is not divisible by image.patch " + std::to_string(image.patch));
  }
  if (image.channels != 3) throw Error(ErrorCode::ConfigError, "image.channels must be 3 (RGB PNG input)");
  if (image.normalization != "dataset" && image.normalization != "imagenet") {
    throw Error(ErrorCode::ConfigError, "image.normalization must be dataset|imagenet");
  }
  if (grammar::build_vocab().size() != grammar::kVocabSize) {
    throw Error(ErrorCode::ConfigError, "vocabulary must have 32 tokens");
  }
  if (eval.max_len < 2 || eval.max_len > model::kMaxSequence) {
    throw Error(ErrorCode::ConfigError, "eval.max_len must be in [2, 512]");
  }
  model.validate();
  vqvae.validate();
  pretrain.validate();
  finetune.validate();
  synth.validate();
  if (data.train_images == 0) throw Error(ErrorCode::ConfigError, "data.train_images must be >= 1");
}

vision::PatchGrid RunConfig::grid() const {
  return vision::PatchGrid::for_image(image.resolution, image.resolution, image.channels, image.patch);
}

std::filesystem::path RunConfig::output_root() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "runs";
}

std::uint64_t RunConfig::hash() const {
  nlohmann::json j = to_json(*this);
  j.erase("output_dir");
  const std::string s = j.dump();
  return nn::fnv1a(s.data(), s.size());
}

std::string RunConfig::lineage() const { return nn::hex64(hash()).substr(0, 8) + "-s" + std::to_string(seed); }

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["image"] = {{"resolution", c.image.resolution},
                {"patch", c.image.patch},
                {"channels", c.image.channels},
                {"normalization", c.image.normalization}};
  j["model"] = c.model;
  j["optim"] = c.optim;
  j["synth"] = c.synth;
  j["data"] = {{"pretrain_images", c.data.pretrain_images},
               {"train_images", c.data.train_images},
               {"val_images", c.data.val_images}};
  j["vqvae"] = c.vqvae;
  j["pretrain"] = c.pretrain;
  j["finetune"] = c.finetune;
  j["eval"] = {{"max_len", c.eval.max_len}};
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig c = RunConfig::desk();
  try {
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("image")) {
      const auto& s = j["image"];
      c.image.resolution = s.value("resolution", c.image.resolution);
      c.image.patch = s.value("patch", c.image.patch);
      c.image.channels = s.value("channels", c.image.channels);
      c.image.normalization = s.value("normalization", c.image.normalization);
    }
    if (j.contains("model")) nn::from_json(j["model"], c.model);
    if (j.contains("optim")) nn::from_json(j["optim"], c.optim);
    if (j.contains("data")) {
      const auto& s = j["data"];
      c.data.pretrain_images = s.value("pretrain_images", c.data.pretrain_images);
      c.data.train_images = s.value("train_images", c.data.train_images);
      c.data.val_images = s.value("val_images", c.data.val_images);
    }
    // The synth section follows the image and data sections unless it sets
    // its own values.
    c.synth.resolution = c.image.resolution;
    c.synth.patch = c.image.patch;
    c.synth.val_fraction = static_cast<double>(c.data.val_images) /
                           static_cast<double>(std::max<std::size_t>(1, c.data.train_images + c.data.val_images));
    if (j.contains("synth")) synth::from_json(j["synth"], c.synth);
    if (j.contains("vqvae")) vq::from_json(j["vqvae"], c.vqvae);
    if (j.contains("pretrain")) mim::from_json(j["pretrain"], c.pretrain);
    if (j.contains("finetune")) model::from_json(j["finetune"], c.finetune);
    if (j.contains("eval")) c.eval.max_len = j["eval"].value("max_len", c.eval.max_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "config " + path.string() + ": " + e.what());
  }
}

nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides) {
  const nlohmann::json known = to_json(RunConfig::desk());
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::ConfigError, "override '" + ov + "' is not of the form a.b=value");
    }
    const std::string path = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    std::string pointer;
    std::stringstream ss(path);
    for (std::string part; std::getline(ss, part, '.');) {
      if (part.empty()) throw Error(ErrorCode::ConfigError, "empty segment in override path '" + path + "'");
      pointer += "/" + part;
    }
    const nlohmann::json::json_pointer ptr(pointer);
    if (!known.contains(ptr)) throw Error(ErrorCode::ConfigError, "unknown config key '" + path + "'");
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[ptr] = value;
  }
  return j;
}

}  // namespace tsr::config
