#include "tsr/visual_encoder.hpp"

#include <cmath>

namespace tsr::vision {

PatchGrid PatchGrid::for_image(std::size_t height, std::size_t width, std::size_t channels, std::size_t patch) {
  if (patch == 0 || height == 0 || width == 0 || channels == 0) {
    throw Error(ErrorCode::IndivisibleImage, "image and patch dimensions must be positive");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw Error(ErrorCode::IndivisibleImage, "image " + std::to_string(height) + "x" + std::to_string(width) +
                                                 " not divisible by patch size " + std::to_string(patch));
  }
  return PatchGrid{patch, height / patch, width / patch, channels};
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch) {
  if (image.rank() != 3) throw Error(ErrorCode::ShapeMismatch, "patchify expects [H, W, C]");
  const PatchGrid grid = PatchGrid::for_image(image.dim(0), image.dim(1), image.dim(2), patch);
  const std::size_t c = grid.channels;
  Tensor<T> out({grid.count(), grid.patch_dim()});
  for (std::size_t gr = 0; gr < grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.cols; ++gc) {
      T* dst = out.row(gr * grid.cols + gc);
      for (std::size_t py = 0; py < patch; ++py) {
        const T* src = &image.at(gr * patch + py, gc * patch, 0);
        std::copy_n(src, patch * c, dst + py * patch * c);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, const PatchGrid& grid) {
  if (patches.rank() != 2 || patches.dim(0) != grid.count() || patches.dim(1) != grid.patch_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "unpatchify: got " + nn::shape_str(patches.shape()));
  }
  const std::size_t p = grid.patch;
  const std::size_t c = grid.channels;
  Tensor<T> image({grid.height(), grid.width(), c});
  for (std::size_t gr = 0; gr < grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.cols; ++gc) {
      const T* src = patches.row(gr * grid.cols + gc);
      for (std::size_t py = 0; py < p; ++py) {
        std::copy_n(src + py * p * c, p * c, &image.at(gr * p + py, gc * p, 0));
      }
    }
  }
  return image;
}

Normalization Normalization::imagenet() {
  return Normalization{{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}};
}

Normalization Normalization::from_images(const std::vector<Tensor<float>>& images) {
  if (images.empty()) throw Error(ErrorCode::EmptyCorpus, "no images to compute normalization from");
  const std::size_t c = images.front().dim(2);
  std::vector<double> sum(c, 0.0);
  std::vector<double> sq(c, 0.0);
  std::size_t count = 0;
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(2) != c) throw Error(ErrorCode::ShapeMismatch, "inconsistent image channels");
    for (std::size_t i = 0; i < img.size(); ++i) {
      sum[i % c] += img[i];
      sq[i % c] += static_cast<double>(img[i]) * img[i];
    }
    count += img.size() / c;
  }
  Normalization n;
  n.mean.assign(c, 0.0f);
  n.std.assign(c, 1.0f);
  for (std::size_t k = 0; k < c; ++k) {
    const double m = sum[k] / static_cast<double>(count);
    const double var = std::max(sq[k] / static_cast<double>(count) - m * m, 0.0);
    n.mean[k] = static_cast<float>(m);
    n.std[k] = static_cast<float>(std::max(std::sqrt(var), 1e-3));
  }
  return n;
}

Tensor<float> Normalization::apply(const Tensor<float>& image) const {
  const std::size_t c = image.dim(2);
  if (mean.size() != c || std.size() != c) throw Error(ErrorCode::ShapeMismatch, "normalization channel mismatch");
  Tensor<float> out = image;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % c]) / std[i % c];
  return out;
}

nlohmann::json Normalization::to_json() const { return {{"mean", mean}, {"std", std}}; }

Normalization Normalization::from_json(const nlohmann::json& j) {
  Normalization n;
  n.mean = j.at("mean").get<std::vector<float>>();
  n.std = j.at("std").get<std::vector<float>>();
  return n;
}

template <typename T>
VisualEncoder<T>::VisualEncoder(nn::ParamStore<T>& store, const std::string& prefix, const nn::LayerConfig& cfg,
                                const PatchGrid& grid, std::mt19937_64& rng)
    : cfg_(cfg), grid_(grid) {
  cfg.validate();
  projection_ = nn::Linear<T>(store, prefix + ".patch_embed", grid.patch_dim(), cfg.d_model, rng);
  positions_ = &store.add(prefix + ".position_embedding", nn::normal_init<T>({grid.count(), cfg.d_model}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    layers_.emplace_back(store, prefix + ".layer" + std::to_string(i), cfg, rng);
  }
  norm_ = nn::LayerNorm<T>(store, prefix + ".norm", cfg.d_model);
}

template <typename T>
Var VisualEncoder<T>::embed(Graph<T>& g, const Tensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != grid_.height() || image.dim(1) != grid_.width() ||
      image.dim(2) != grid_.channels) {
    throw Error(ErrorCode::ShapeMismatch, "encoder expects image [" + std::to_string(grid_.height()) + "," +
                                              std::to_string(grid_.width()) + "," + std::to_string(grid_.channels) +
                                              "], got " + nn::shape_str(image.shape()));
  }
  return projection_.forward(g, g.constant(patchify(image, grid_.patch)));
}

template <typename T>
Var VisualEncoder<T>::encode_embeddings(Graph<T>& g, Var patch_embeddings, const nn::Mode& mode) const {
  Var x = nn::add(g, patch_embeddings, g.param(*positions_));
  x = nn::maybe_dropout(g, x, cfg_.dropout, mode);
  for (const auto& layer : layers_) x = layer.forward(g, x, mode);
  return norm_.forward(g, x);
}

template <typename T>
Var VisualEncoder<T>::encode(Graph<T>& g, const Tensor<T>& image, const nn::Mode& mode) const {
  return encode_embeddings(g, embed(g, image), mode);
}

template Tensor<float> patchify<float>(const Tensor<float>&, std::size_t);
template Tensor<double> patchify<double>(const Tensor<double>&, std::size_t);
template Tensor<float> unpatchify<float>(const Tensor<float>&, const PatchGrid&);
template Tensor<double> unpatchify<double>(const Tensor<double>&, const PatchGrid&);
template class VisualEncoder<float>;
template class VisualEncoder<double>;

}  // namespace tsr::vision
