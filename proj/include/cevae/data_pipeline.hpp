#ifndef CEVAE_DATA_PIPELINE_HPP_
#define CEVAE_DATA_PIPELINE_HPP_

#include <string>
#include <vector>

#include "cevae/tensor.hpp"

namespace cevae {

struct PairEntry {
  std::string id;
  std::string degraded_path;
  std::string reference_path;
};

struct DatasetManifest {
  std::string root;
  std::vector<PairEntry> pairs;  // sorted by id
  std::string split;
};

enum class DatasetLayout { kPairedDirs, kIdentity };

// paired_dirs: <root>/degraded and <root>/reference matched by basename.
// identity: every image under <root> is paired with itself (I = I*).
DatasetManifest load_manifest(const std::string& root, DatasetLayout layout);

// Plain-text cache: "id<TAB>degraded<TAB>reference" per line.
void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Both images (3,S,S) in [-1,1].
struct PairedSample {
  std::string id;
  Tensor degraded;
  Tensor reference;
};

// Decode, bilinear-resize to size x size, map to [-1,1]; identical geometry
// for both sides of the pair.
PairedSample load_pair(const PairEntry& entry, int size = 256);
PairedSample preprocess(const std::string& id, const Tensor& degraded_unit,
                        const Tensor& reference_unit, int size = 256);

struct AugmentRecord {
  int crop_x = 0, crop_y = 0, crop_size = 0;  // crop_size == S means full frame
  bool flip = false;
};

// Random crop (fraction in [0.8,1.0], resized back) + horizontal flip with
// p = 0.5; the same geometric op hits both images. Deterministic per seed.
PairedSample augment(const PairedSample& sample, uint64_t rng_seed,
                     AugmentRecord* record = nullptr);
PairedSample apply_augment(const PairedSample& sample, const AugmentRecord& rec);

// Deterministic per-epoch shuffle; the final partial batch is kept.
std::vector<std::vector<PairEntry>> batches(const DatasetManifest& manifest, int batch_size,
                                            uint64_t shuffle_seed, int epoch = 0);

// Stacks samples into (N,3,S,S) degraded/reference tensors.
std::pair<Tensor, Tensor> stack_batch(const std::vector<PairedSample>& samples);

}  // namespace cevae

#endif  // CEVAE_DATA_PIPELINE_HPP_
