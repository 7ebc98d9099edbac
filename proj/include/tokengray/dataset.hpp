#pragma once

#include <string>
#include <vector>

#include "tokengray/rng.hpp"
#include "tokengray/vitcore.hpp"

namespace tg {

struct Dataset {
  std::string name;
  std::vector<Image> images;
  std::vector<int> labels;
  int classes = 0;
  // Per-channel normalization applied after [0,1] scaling; identity for
  // synthetic data.
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
};

// Class-mean spatial patterns plus Gaussian noise. Separable by construction,
// deterministic per stream; used whenever no CIFAR file is on disk.
Dataset synth_dataset(int samples, int h, int w, int c, int classes, double noise,
                      RngStream stream);

// Texture-coded variant: each class is a global sinusoid pattern, so the
// label survives spatial pooling. Suited to architectures that average over
// positions (the ConvMixer experiments).
Dataset synth_texture_dataset(int samples, int h, int w, int c, int classes, double noise,
                              RngStream stream);

// CIFAR-10 binary batch format: records of 1 label byte + 3072 channel-major
// pixel bytes. Pixels are scaled to [0,1] and standardized per channel with
// statistics computed over the loaded subset (recorded in the result).
// limit <= 0 loads every record.
Dataset load_cifar10(const std::string& path, int limit = 0);

// Deterministic epoch shuffle: a Fisher-Yates permutation of [0, n) drawn
// from (stream.seed, stream.stream_id ^ epoch).
std::vector<int> epoch_permutation(int n, RngStream stream, int epoch);

}  // namespace tg
