#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "actbench/autograd.hpp"

namespace actbench {

using Labels = std::vector<int>;

// Elementwise and reduction ops. Operands must have identical shapes.
NodeId add(Tape& tape, NodeId a, NodeId b);
NodeId mul(Tape& tape, NodeId a, NodeId b);
NodeId scale(Tape& tape, NodeId a, double factor);
NodeId sum(Tape& tape, NodeId a);
NodeId reshape(Tape& tape, NodeId a, Shape shape);

/// [M×K]·[K×N] → [M×N].
NodeId matmul(Tape& tape, NodeId a, NodeId b);

/// Affine layer x[B×In] · weightᵀ[In×Out] + bias[Out], weight stored [Out×In].
NodeId linear(Tape& tape, NodeId x, NodeId weight, NodeId bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of x[B×C×H×W] with kernel[F×C×Kh×Kw]; `bias` is [F] or
/// absent. Output is [B×F×H'×W'], H' = (H + 2·pad − Kh)/stride + 1.
NodeId conv2d(Tape& tape, NodeId x, NodeId kernel, std::optional<NodeId> bias, Conv2dOptions options = {});

/// Non-overlapping max pool with a square window. The gradient goes to the
/// first maximal element of each window in row-major order.
NodeId maxpool2d(Tape& tape, NodeId x, std::size_t window);

/// Mean over H and W: [B×C×H×W] → [B×C].
NodeId global_avg_pool(Tape& tape, NodeId x);

/// Running statistics carried by a batch-norm layer between passes.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::size_t channels = 0) : mean(channels, 0.0), var(channels, 1.0) {}
};

/// Per-channel normalisation of [B×C×H×W]. In training mode batch
/// statistics are used and `stats` is updated; otherwise `stats` is read.
NodeId batch_norm(Tape& tape, NodeId x, NodeId gamma, NodeId beta, BatchNormStats& stats, bool training);

/// Mean over the batch of −log softmax(logits)[label], for logits [B×K].
NodeId softmax_cross_entropy(Tape& tape, NodeId logits, const Labels& labels);

/// Row-wise softmax probabilities (no tape), max-subtracted.
Tensor softmax(const Tensor& logits);

}  // namespace actbench
