#pragma once

// Dataset directories: images/*.png plus an optional labels.jsonl in the
// PubTabNet structure-annotation schema.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsr/grammar.hpp"
#include "tsr/nn/tensor.hpp"
#include "tsr/tsr_model.hpp"
#include "tsr/visual_encoder.hpp"

namespace tsr::data {

struct Record {
  std::size_t line = 0;  // 1-based
  std::string filename;
  std::string split;
  grammar::TokenSeq tokens;  // unframed
};

struct IngestReport {
  std::size_t records = 0;
  std::size_t total_tokens = 0;
  std::size_t unk_tokens = 0;
  std::map<std::string, std::size_t> histogram;        // by vocabulary token
  std::map<std::string, std::size_t> unknown_strings;  // raw strings mapped to <unk>

  nlohmann::json to_json() const;
};

struct Ingested {
  std::vector<Record> records;
  IngestReport report;
};

/// One JSON object per line with "filename" and html.structure.tokens.
/// Throws Error(MalformedRecord) naming the line, Error(IoError) if unreadable.
Ingested ingest_pubtabnet(const std::filesystem::path& labels_jsonl);

/// Sorted images/*.png under a dataset directory. Never looks at labels.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dataset_dir);

struct ImageSet {
  std::vector<std::string> names;
  std::vector<nn::Tensor<float>> images;  // [R, R, 3] in [0, 1]
};

/// Loads (at most `limit`, 0 = all) images resized to `resolution`.
ImageSet load_images(const std::filesystem::path& dataset_dir, std::size_t resolution, std::size_t limit = 0);

std::vector<nn::Tensor<float>> normalize_all(const std::vector<nn::Tensor<float>>& images,
                                             const vision::Normalization& norm);

/// Labeled examples of one split, normalized, tokens framed, sorted by name.
std::vector<model::Example> load_examples(const std::filesystem::path& dataset_dir, const std::string& split,
                                          std::size_t resolution, const vision::Normalization& norm);

/// Raw (unnormalized) images of one labeled split, for normalization stats.
std::vector<nn::Tensor<float>> load_split_images(const std::filesystem::path& dataset_dir, const std::string& split,
                                                 std::size_t resolution);

}  // namespace tsr::data
