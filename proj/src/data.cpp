#include "actbench/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <numeric>
#include <string>

#include "actbench/errors.hpp"

namespace actbench {
namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kNumClasses = 10;

/// Whole-file read. zlib passes uncompressed files through unchanged.
std::vector<std::uint8_t> read_file(const fs::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw MissingFileError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  int err = 0;
  const char* msg = gzerror(f, &err);
  const std::string reason = n < 0 ? std::string(msg) : std::string();
  gzclose(f);
  if (n < 0) throw FormatError(path.string() + ": read failed: " + reason);
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

/// First existing file among `names` (plain or .gz) under any of `dirs`.
fs::path find_file(const std::vector<fs::path>& dirs, const std::vector<std::string>& names) {
  for (const auto& d : dirs) {
    for (const auto& n : names) {
      for (const auto& candidate : {d / n, d / (n + ".gz")}) {
        if (fs::is_regular_file(candidate)) return candidate;
      }
    }
  }
  std::string msg = "missing file " + names.front() + " (searched";
  for (const auto& d : dirs) msg += " " + d.string();
  throw MissingFileError(msg + ")");
}

Labels checked_labels(std::span<const std::uint8_t> raw, const std::string& source) {
  Labels labels(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] >= kNumClasses) {
      throw FormatError(source + ": label " + std::to_string(raw[i]) + " at index " + std::to_string(i) +
                        " outside [0, 10)");
    }
    labels[i] = raw[i];
  }
  return labels;
}

std::size_t reflect(long i, long n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

std::string_view dataset_name(DatasetName name) { return name == DatasetName::kMnist ? "mnist" : "cifar10"; }

DatasetName parse_dataset(std::string_view name) {
  if (name == "mnist") return DatasetName::kMnist;
  if (name == "cifar10") return DatasetName::kCifar10;
  throw RegistryError("unknown dataset '" + std::string(name) + "'; available: mnist cifar10");
}

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

const Normalization& normalization_for(DatasetName name) {
  static const Normalization mnist{{0.1307}, {0.3081}};
  static const Normalization cifar{{0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
  return name == DatasetName::kMnist ? mnist : cifar;
}

Dataset::Dataset(DatasetName name, Split split, std::array<std::size_t, 3> image_shape,
                 std::vector<std::uint8_t> pixels, Labels labels)
    : name_(name), split_(split), image_shape_(image_shape), pixels_(std::move(pixels)), labels_(std::move(labels)) {
  if (pixels_.size() != labels_.size() * image_size()) {
    throw ConsistencyError("dataset holds " + std::to_string(pixels_.size()) + " pixel bytes for " +
                           std::to_string(labels_.size()) + " labels");
  }
}

std::span<const std::uint8_t> Dataset::raw_image(std::size_t i) const {
  if (i >= size()) throw LabelError("image index " + std::to_string(i) + " out of range");
  return std::span<const std::uint8_t>(pixels_).subspan(i * image_size(), image_size());
}

Tensor Dataset::images(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("cannot materialise an empty batch");
  const auto& norm = normalization_for(name_);
  const std::size_t channels = image_shape_[0];
  const std::size_t plane = image_shape_[1] * image_shape_[2];
  Tensor out({indices.size(), image_shape_[0], image_shape_[1], image_shape_[2]});
  auto dst = out.data();
  std::size_t k = 0;
  for (std::size_t idx : indices) {
    const auto src = raw_image(idx);
    for (std::size_t c = 0; c < channels; ++c) {
      const double mean = norm.mean[c];
      const double sd = norm.std[c];
      for (std::size_t p = 0; p < plane; ++p) dst[k++] = (src[c * plane + p] / 255.0 - mean) / sd;
    }
  }
  return out;
}

Tensor Dataset::images() const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return images(all);
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  std::vector<std::uint8_t> px(pixels_.begin(), pixels_.begin() + static_cast<long>(n * image_size()));
  Labels lb(labels_.begin(), labels_.begin() + static_cast<long>(n));
  return Dataset(name_, split_, image_shape_, std::move(px), std::move(lb));
}

Dataset load_mnist(const fs::path& dir, Split split, std::size_t limit) {
  const std::vector<fs::path> dirs{dir, dir / "mnist"};
  const std::string prefix = split == Split::kTrain ? "train" : "t10k";
  const fs::path image_path = find_file(dirs, {prefix + "-images-idx3-ubyte", prefix + "-images.idx3-ubyte"});
  const fs::path label_path = find_file(dirs, {prefix + "-labels-idx1-ubyte", prefix + "-labels.idx1-ubyte"});

  auto images = read_file(image_path);
  const auto labels = read_file(label_path);
  if (images.size() < 16) throw FormatError(image_path.string() + ": truncated header");
  if (labels.size() < 8) throw FormatError(label_path.string() + ": truncated header");
  if (const auto m = read_be32(images, 0); m != kImageMagic) {
    throw FormatError(image_path.string() + ": image magic " + std::to_string(m) + ", expected 2051");
  }
  if (const auto m = read_be32(labels, 0); m != kLabelMagic) {
    throw FormatError(label_path.string() + ": label magic " + std::to_string(m) + ", expected 2049");
  }
  const std::size_t n = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t n_labels = read_be32(labels, 4);
  if (rows != 28 || cols != 28) {
    throw FormatError(image_path.string() + ": images are " + std::to_string(rows) + "x" + std::to_string(cols) +
                      ", expected 28x28");
  }
  if (images.size() != 16 + n * rows * cols) {
    throw FormatError(image_path.string() + ": header declares " + std::to_string(n) + " images but file has " +
                      std::to_string(images.size()) + " bytes");
  }
  if (labels.size() != 8 + n_labels) {
    throw FormatError(label_path.string() + ": header declares " + std::to_string(n_labels) +
                      " labels but file has " + std::to_string(labels.size()) + " bytes");
  }
  if (n != n_labels) {
    throw ConsistencyError("MNIST " + std::string(split_name(split)) + ": " + std::to_string(n) + " images but " +
                           std::to_string(n_labels) + " labels");
  }
  const std::size_t keep = (limit == 0 || limit > n) ? n : limit;
  std::vector<std::uint8_t> px(images.begin() + 16, images.begin() + static_cast<long>(16 + keep * rows * cols));
  Labels lb = checked_labels(std::span<const std::uint8_t>(labels).subspan(8, keep), label_path.string());
  return Dataset(DatasetName::kMnist, split, {1, rows, cols}, std::move(px), std::move(lb));
}

Dataset load_cifar10(const fs::path& dir, Split split, std::size_t limit) {
  const std::vector<fs::path> dirs{dir, dir / "cifar10", dir / "cifar-10-batches-bin"};
  std::vector<std::string> files;
  if (split == Split::kTrain) {
    for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
  } else {
    files.push_back("test_batch.bin");
  }
  std::vector<std::uint8_t> px;
  std::vector<std::uint8_t> raw_labels;
  for (const auto& name : files) {
    if (limit && raw_labels.size() >= limit) break;
    const fs::path path = find_file(dirs, {name});
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      if (limit && raw_labels.size() >= limit) break;
      raw_labels.push_back(bytes[off]);
      px.insert(px.end(), bytes.begin() + static_cast<long>(off + 1),
                bytes.begin() + static_cast<long>(off + kCifarRecord));
    }
  }
  Labels lb = checked_labels(raw_labels, "CIFAR-10 " + std::string(split_name(split)));
  return Dataset(DatasetName::kCifar10, split, {3, 32, 32}, std::move(px), std::move(lb));
}

Dataset load_dataset(DatasetName name, const fs::path& dir, Split split, std::size_t limit) {
  return name == DatasetName::kMnist ? load_mnist(dir, split, limit) : load_cifar10(dir, split, limit);
}

Tensor denormalize(const Tensor& images, DatasetName name) {
  const auto& norm = normalization_for(name);
  if (images.rank() != 4 || images.dim(1) != norm.mean.size()) {
    throw DimensionError("denormalize expects Bx" + std::to_string(norm.mean.size()) + "xHxW, got " +
                         shape_to_string(images.shape()));
  }
  Tensor out = images;
  const std::size_t plane = images.dim(2) * images.dim(3);
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t c = (i / plane) % norm.mean.size();
    d[i] = d[i] * norm.std[c] + norm.mean[c];
  }
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b{data.images(indices), {}, std::nullopt, 1.0};
  b.labels.reserve(indices.size());
  for (std::size_t i : indices) b.labels.push_back(data.labels()[i]);
  return b;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Batch augment(const Batch& batch, double flip_prob, std::size_t pad, std::mt19937_64& rng) {
  if (flip_prob < 0.0 || flip_prob > 1.0) throw ContractError("flip_prob must lie in [0, 1]");
  const Tensor& x = batch.images;
  if (x.rank() != 4) throw DimensionError("augment expects BxCxHxW, got " + shape_to_string(x.shape()));
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (pad >= H || pad >= W) throw ContractError("reflect padding must be smaller than the image");

  Batch out = batch;
  auto src = x.data();
  auto dst = out.images.data();
  std::bernoulli_distribution flip(flip_prob);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  for (std::size_t b = 0; b < B; ++b) {
    const bool f = flip(rng);
    const long oy = static_cast<long>(offset(rng)) - static_cast<long>(pad);
    const long ox = static_cast<long>(offset(rng)) - static_cast<long>(pad);
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * H * W;
      for (std::size_t y = 0; y < H; ++y) {
        const std::size_t sy = reflect(static_cast<long>(y) + oy, static_cast<long>(H));
        for (std::size_t xx = 0; xx < W; ++xx) {
          std::size_t sx = reflect(static_cast<long>(xx) + ox, static_cast<long>(W));
          if (f) sx = W - 1 - sx;
          dst[base + y * W + xx] = src[base + sy * W + sx];
        }
      }
    }
  }
  return out;
}

Batch mixup(const Batch& batch, double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw ContractError("mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  const double lambda = (a + b) > 0.0 ? a / (a + b) : 0.5;
  const auto perm = shuffled_indices(batch.size(), rng);
  return mixup_with(batch, lambda, perm);
}

Batch mixup_with(const Batch& batch, double lambda, std::span<const std::size_t> perm) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("mixup lambda must lie in [0, 1]");
  if (batch.labels_b) throw ContractError("batch is already mixed");
  if (perm.size() != batch.size()) throw DimensionError("mixup permutation length differs from batch size");
  const std::size_t per = batch.images.size() / batch.size();
  Batch out = batch;
  out.labels_b.emplace(batch.size());
  out.lambda = lambda;
  auto src = batch.images.data();
  auto dst = out.images.data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t j = perm[i];
    if (j >= batch.size()) throw ContractError("mixup permutation index out of range");
    (*out.labels_b)[i] = batch.labels[j];
    for (std::size_t p = 0; p < per; ++p) dst[i * per + p] = lambda * src[i * per + p] + (1.0 - lambda) * src[j * per + p];
  }
  return out;
}

}  // namespace actbench
