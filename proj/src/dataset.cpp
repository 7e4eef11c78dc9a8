#include "tsr/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "tsr/image_io.hpp"

namespace tsr::data {

nlohmann::json IngestReport::to_json() const {
  return {{"records", records},
          {"total_tokens", total_tokens},
          {"unk_tokens", unk_tokens},
          {"histogram", histogram},
          {"unknown_strings", unknown_strings}};
}

Ingested ingest_pubtabnet(const std::filesystem::path& labels_jsonl) {
  std::ifstream in(labels_jsonl);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + labels_jsonl.string());
  Ingested out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord, labels_jsonl.filename().string() + " line " +
                                                   std::to_string(line_no) + ": " + why);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(std::string("invalid JSON (") + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("filename") || !j["filename"].is_string()) throw fail("missing \"filename\"");
    if (!j.contains("html") || !j["html"].is_object() || !j["html"].contains("structure") ||
        !j["html"]["structure"].is_object()) {
      throw fail("missing \"html.structure\"");
    }
    const auto& toks = j["html"]["structure"].value("tokens", nlohmann::json());
    if (!toks.is_array()) throw fail("html.structure.tokens is not an array");
    Record rec;
    rec.line = line_no;
    rec.filename = j["filename"].get<std::string>();
    rec.split = j.value("split", std::string("train"));
    for (const auto& t : toks) {
      if (!t.is_string()) throw fail("non-string structure token");
      const std::string s = t.get<std::string>();
      const auto id = grammar::vocab().lookup(s);
      const grammar::TokenId tid = id.value_or(grammar::tok::kUnk);
      rec.tokens.ids.push_back(tid);
      out.report.histogram[std::string(grammar::vocab().text(tid))] += 1;
      if (!id) {
        out.report.unknown_strings[s] += 1;
        out.report.unk_tokens += 1;
      }
      out.report.total_tokens += 1;
    }
    out.records.push_back(std::move(rec));
  }
  out.report.records = out.records.size();
  return out;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dataset_dir) {
  const auto dir = dataset_dir / "images";
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(ErrorCode::IoError, "no images/ under " + dataset_dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageSet load_images(const std::filesystem::path& dataset_dir, std::size_t resolution, std::size_t limit) {
  ImageSet set;
  auto paths = list_images(dataset_dir);
  if (limit > 0 && paths.size() > limit) paths.resize(limit);
  for (const auto& p : paths) {
    set.names.push_back(p.filename().string());
    set.images.push_back(io::load_image(p, resolution));
  }
  if (set.images.empty()) throw Error(ErrorCode::EmptyCorpus, "no PNG images under " + dataset_dir.string());
  return set;
}

std::vector<nn::Tensor<float>> normalize_all(const std::vector<nn::Tensor<float>>& images,
                                             const vision::Normalization& norm) {
  std::vector<nn::Tensor<float>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(norm.apply(img));
  return out;
}

namespace {

std::vector<Record> split_records(const std::filesystem::path& dataset_dir, const std::string& split) {
  auto ingested = ingest_pubtabnet(dataset_dir / "labels.jsonl");
  std::vector<Record> out;
  for (auto& r : ingested.records) {
    if (r.split == split) out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const Record& a, const Record& b) { return a.filename < b.filename; });
  return out;
}

}  // namespace

std::vector<model::Example> load_examples(const std::filesystem::path& dataset_dir, const std::string& split,
                                          std::size_t resolution, const vision::Normalization& norm) {
  std::vector<model::Example> out;
  for (auto& r : split_records(dataset_dir, split)) {
    model::Example ex;
    ex.id = r.filename;
    ex.image = norm.apply(io::load_image(dataset_dir / "images" / r.filename, resolution));
    ex.tokens = grammar::frame(r.tokens);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<nn::Tensor<float>> load_split_images(const std::filesystem::path& dataset_dir, const std::string& split,
                                                 std::size_t resolution) {
  std::vector<nn::Tensor<float>> out;
  for (const auto& r : split_records(dataset_dir, split)) {
    out.push_back(io::load_image(dataset_dir / "images" / r.filename, resolution));
  }
  return out;
}

}  // namespace tsr::data
