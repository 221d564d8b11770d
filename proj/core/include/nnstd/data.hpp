#pragma once
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nnstd/matrix.hpp"
#include "nnstd/rng.hpp"

namespace nnstd {

enum class Partition { TRAIN, VAL, TEST };

// An image classification dataset split into train/val/test. Loader-built
// datasets keep raw bytes plus a per-feature affine transform and
// materialize standardized batches on demand; synthetic datasets store
// features directly.
class Dataset {
 public:
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }
  int count(Partition p) const;

  // Standardized features of the given sample indices, one row each.
  Matrix batch_features(Partition p, std::span<const int> indices) const;
  std::vector<int> batch_labels(Partition p, std::span<const int> indices) const;
  int label(Partition p, int index) const;

  // Image geometry; augmentation is enabled for datasets that train with it.
  bool augment_enabled() const { return augment_; }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const std::string& name() const { return name_; }

  // Build a dataset from already-prepared feature rows (tests, synthetic
  // tasks). No standardization is applied.
  static Dataset from_features(Matrix train_x, std::vector<int> train_y, Matrix val_x,
                               std::vector<int> val_y, Matrix test_x,
                               std::vector<int> test_y, int num_classes,
                               std::string name = "synthetic");

 private:
  friend Dataset make_loaded_dataset(std::string name, int channels, int height, int width,
                                     bool augment, std::vector<std::uint8_t> train_raw,
                                     std::vector<int> train_y,
                                     std::vector<std::uint8_t> test_raw,
                                     std::vector<int> test_y, int val_count,
                                     std::uint64_t split_seed, bool per_channel_stats);

  std::string name_ = "synthetic";
  int feature_dim_ = 0;
  int num_classes_ = 0;
  int channels_ = 1, height_ = 0, width_ = 0;
  bool augment_ = false;

  // Raw path (loaders): bytes scaled to [0,1] then standardized on access.
  bool raw_mode_ = false;
  std::vector<std::uint8_t> raw_[3];
  std::vector<double> mean_, inv_std_;  // per feature

  // Dense path (from_features).
  Matrix dense_[3];
  std::vector<int> labels_[3];
};

struct DataOptions {
  std::filesystem::path cache_dir;  // default: $NNSTD_DATA_DIR, else "data"
  bool offline = false;             // never attempt a download
  bool verify_checksums = true;
  std::uint64_t split_seed = 1;     // train/val split; fixed across runs by default

  std::filesystem::path resolved_cache_dir() const;
};

// Fashion-MNIST from the four IDX gzip files: 48000/12000/10000 samples,
// 784 features scaled to [0,1] and standardized per feature with statistics
// from the train split.
Dataset load_fashion_mnist(const DataOptions& opts = {});

// CIFAR-10 from the binary batch files (or cifar-10-binary.tar.gz):
// 40000/10000/10000 samples, 3072 features standardized per channel.
// Augmentation (flip + padded crop) is enabled on this dataset.
Dataset load_cifar10(const DataOptions& opts = {});

// Deterministic per-sample augmentation: optional horizontal flip, then a
// crop of the 4-pixel reflective-padded image back to its original size.
// Offsets (pad, pad) with no flip reproduce the input.
struct AugmentOps {
  bool flip = false;
  int dy = 0;  // crop offset in [0, 2*pad]
  int dx = 0;
};
void augment_sample(std::span<double> feat, const AugmentOps& ops, int channels, int height,
                    int width, int pad = 4);

// Draws AugmentOps per row (flip, dy, dx in that order) and applies them.
void augment_batch(Matrix& batch, Rng& rng, int channels, int height, int width,
                   int pad = 4);

}  // namespace nnstd
