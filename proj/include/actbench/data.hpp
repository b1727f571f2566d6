#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "actbench/ops.hpp"
#include "actbench/tensor.hpp"

namespace actbench {

enum class Split { kTrain, kTest };
enum class DatasetName { kMnist, kCifar10 };

std::string_view dataset_name(DatasetName name);
/// "mnist" or "cifar10".
DatasetName parse_dataset(std::string_view name);
std::string_view split_name(Split split);

/// Per-channel normalisation constants.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
};

const Normalization& normalization_for(DatasetName name);

/// A loaded split. Pixels are kept as the raw bytes from disk and
/// normalised when a batch is materialised.
class Dataset {
 public:
  Dataset(DatasetName name, Split split, std::array<std::size_t, 3> image_shape, std::vector<std::uint8_t> pixels,
          Labels labels);

  DatasetName name() const { return name_; }
  Split split() const { return split_; }
  std::size_t size() const { return labels_.size(); }
  std::array<std::size_t, 3> image_shape() const { return image_shape_; }
  std::size_t image_size() const { return image_shape_[0] * image_shape_[1] * image_shape_[2]; }
  const Labels& labels() const { return labels_; }
  std::span<const std::uint8_t> raw_image(std::size_t i) const;

  /// Normalised images [n×C×H×W] for the given indices.
  Tensor images(std::span<const std::size_t> indices) const;
  /// Every image, normalised.
  Tensor images() const;

  /// First `n` examples (all of them when n is 0 or exceeds the size).
  Dataset head(std::size_t n) const;

 private:
  DatasetName name_;
  Split split_;
  std::array<std::size_t, 3> image_shape_;
  std::vector<std::uint8_t> pixels_;
  Labels labels_;
};

/// Reads IDX files (optionally gzip-compressed, with a ".gz" suffix) from
/// `dir` or `dir/mnist`. `limit` > 0 keeps only the first `limit` examples.
Dataset load_mnist(const std::filesystem::path& dir, Split split, std::size_t limit = 0);

/// Reads CIFAR-10 binary batches from `dir`, `dir/cifar10` or
/// `dir/cifar-10-batches-bin`.
Dataset load_cifar10(const std::filesystem::path& dir, Split split, std::size_t limit = 0);

Dataset load_dataset(DatasetName name, const std::filesystem::path& dir, Split split, std::size_t limit = 0);

/// Inverse of the loader normalisation: raw pixel intensities in [0,1].
Tensor denormalize(const Tensor& images, DatasetName name);

/// Images with one or two label vectors. After mixup the loss is
/// λ·CE(labels) + (1−λ)·CE(labels_b).
struct Batch {
  Tensor images;
  Labels labels;
  std::optional<Labels> labels_b;
  double lambda = 1.0;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// A fresh random permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng);

/// Per-image horizontal flip with probability `flip_prob`, then reflect-pad
/// by `pad` and a random crop back to the original size.
Batch augment(const Batch& batch, double flip_prob, std::size_t pad, std::mt19937_64& rng);

/// Draws λ ~ Beta(alpha, alpha) and a random pairing permutation.
Batch mixup(const Batch& batch, double alpha, std::mt19937_64& rng);

/// Mixup with a given λ and pairing.
Batch mixup_with(const Batch& batch, double lambda, std::span<const std::size_t> perm);

}  // namespace actbench
