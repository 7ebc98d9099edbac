#include "tokengray/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace tg {

namespace {

// Shared tail of the synthetic generators: per-sample noise on top of the
// class means, balanced labels, deterministic per stream.
Dataset noisy_from_means(std::string name, std::vector<Image> means, int samples, int c,
                         double noise, RngStream stream) {
  Dataset ds;
  ds.name = std::move(name);
  ds.classes = static_cast<int>(means.size());
  ds.channel_mean.assign(c, 0.0);
  ds.channel_std.assign(c, 1.0);
  Rng rng(stream);
  ds.images.reserve(samples);
  ds.labels.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    const int label = i % ds.classes;
    Image img = means[label];
    for (double& v : img.pix) v += noise * rng.gaussian();
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

Dataset synth_dataset(int samples, int h, int w, int c, int classes, double noise,
                      RngStream stream) {
  if (samples <= 0 || h <= 0 || w <= 0 || c <= 0 || classes <= 1)
    throw std::invalid_argument("synth_dataset: bad sizes");

  // Position-coded classes: every class uses the same bump shape, placed at a
  // class-specific location on a coarse grid. The class signal therefore
  // lives in *which tokens* are active, not in any global statistic -- the
  // image mean is identical across classes, so representations that collapse
  // the tokens to a common vector lose the label entirely.
  int grid = 1;
  while (grid * grid < classes) ++grid;
  const double sigma = std::max(1.0, std::min(h, w) / (2.5 * grid));
  std::vector<Image> means(classes);
  for (int k = 0; k < classes; ++k) {
    Image& m = means[k];
    m.h = h;
    m.w = w;
    m.c = c;
    m.pix.resize(static_cast<std::size_t>(h) * w * c);
    const double cy = (k / grid + 0.5) * h / grid;
    const double cx = (k % grid + 0.5) * w / grid;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dy = y - cy, dx = x - cx;
          m.at(ch, y, x) = 2.0 * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        }
  }
  return noisy_from_means("synth", std::move(means), samples, c, noise, stream);
}

Dataset synth_texture_dataset(int samples, int h, int w, int c, int classes, double noise,
                              RngStream stream) {
  if (samples <= 0 || h <= 0 || w <= 0 || c <= 0 || classes <= 1)
    throw std::invalid_argument("synth_texture_dataset: bad sizes");
  const double pi = 3.14159265358979323846;
  std::vector<Image> means(classes);
  for (int k = 0; k < classes; ++k) {
    Image& m = means[k];
    m.h = h;
    m.w = w;
    m.c = c;
    m.pix.resize(static_cast<std::size_t>(h) * w * c);
    // Distinct (fy, fx) frequency pair per class.
    const int fy = 1 + k % 3;
    const int fx = 1 + k / 3;
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          m.at(ch, y, x) = std::sin(2.0 * pi * fy * y / h + ch) *
                           std::cos(2.0 * pi * fx * x / w);
  }
  return noisy_from_means("synth_texture", std::move(means), samples, c, noise, stream);
}

Dataset load_cifar10(const std::string& path, int limit) {
  constexpr int kRecord = 1 + 3072;
  constexpr int kSide = 32;
  constexpr int kChannels = 3;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar10: cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff bytes = in.tellg();
  in.seekg(0, std::ios::beg);
  if (bytes <= 0 || bytes % kRecord != 0)
    throw std::runtime_error("load_cifar10: " + path + " has " + std::to_string(bytes) +
                             " bytes, not a multiple of " + std::to_string(kRecord));
  int records = static_cast<int>(bytes / kRecord);
  if (limit > 0 && limit < records) records = limit;

  Dataset ds;
  ds.name = "cifar10";
  ds.classes = 10;
  std::vector<unsigned char> buf(kRecord);
  for (int r = 0; r < records; ++r) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), kRecord))
      throw std::runtime_error("load_cifar10: short read at record " + std::to_string(r));
    if (buf[0] > 9)
      throw std::runtime_error("load_cifar10: label " + std::to_string(buf[0]) +
                               " out of range at record " + std::to_string(r));
    Image img;
    img.h = kSide;
    img.w = kSide;
    img.c = kChannels;
    img.pix.resize(static_cast<std::size_t>(kSide) * kSide * kChannels);
    for (std::size_t i = 0; i < img.pix.size(); ++i)
      img.pix[i] = buf[1 + i] / 255.0;  // file layout is already channel-major
    ds.labels.push_back(buf[0]);
    ds.images.push_back(std::move(img));
  }

  // Standardize per channel over the loaded subset.
  ds.channel_mean.assign(kChannels, 0.0);
  ds.channel_std.assign(kChannels, 0.0);
  const std::size_t plane = static_cast<std::size_t>(kSide) * kSide;
  const double count = static_cast<double>(plane * ds.images.size());
  for (const Image& img : ds.images)
    for (int ch = 0; ch < kChannels; ++ch)
      for (std::size_t i = 0; i < plane; ++i) ds.channel_mean[ch] += img.pix[ch * plane + i];
  for (double& m : ds.channel_mean) m /= count;
  for (const Image& img : ds.images)
    for (int ch = 0; ch < kChannels; ++ch)
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = img.pix[ch * plane + i] - ds.channel_mean[ch];
        ds.channel_std[ch] += d * d;
      }
  for (double& s : ds.channel_std) s = std::max(std::sqrt(s / count), 1e-8);
  for (Image& img : ds.images)
    for (int ch = 0; ch < kChannels; ++ch)
      for (std::size_t i = 0; i < plane; ++i)
        img.pix[ch * plane + i] =
            (img.pix[ch * plane + i] - ds.channel_mean[ch]) / ds.channel_std[ch];
  return ds;
}

std::vector<int> epoch_permutation(int n, RngStream stream, int epoch) {
  if (n < 0) throw std::invalid_argument("epoch_permutation: negative size");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng rng({stream.seed, stream.stream_id ^ static_cast<std::uint64_t>(epoch)});
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

}  // namespace tg
