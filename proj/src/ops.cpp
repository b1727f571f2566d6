#include "actbench/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "actbench/errors.hpp"

namespace actbench {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t out_area() const { return out_h * out_w; }
  std::size_t in_image() const { return channels * height * width; }
};

// Unfolds one C×H×W image into a (C·Kh·Kw) × (H'·W') patch matrix.
void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.pad);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width)) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          double* dst = image + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          const double* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.width)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

NodeId add(Tape& tape, NodeId a, NodeId b) {
  const Tensor& va = tape.value(a);
  const Tensor& vb = tape.value(b);
  require_same_shape("add", va, vb);
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
    auto g = t.grad(self);
    if (t.requires_grad(a)) accumulate(t.grad(a), g);
    if (t.requires_grad(b)) accumulate(t.grad(b), g);
  });
}

NodeId mul(Tape& tape, NodeId a, NodeId b) {
  const Tensor& va = tape.value(a);
  const Tensor& vb = tape.value(b);
  require_same_shape("mul", va, vb);
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
    auto g = t.grad(self);
    if (t.requires_grad(a)) {
      auto ga = t.grad(a);
      const Tensor& vb = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad(b);
      const Tensor& va = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

NodeId scale(Tape& tape, NodeId a, double factor) {
  Tensor out = tape.value(a);
  for (auto& v : out.storage()) v *= factor;
  return tape.record("scale", std::move(out), {a}, [a, factor](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
  });
}

NodeId sum(Tape& tape, NodeId a) {
  double s = 0.0;
  for (double v : tape.value(a).data()) s += v;
  return tape.record("sum", Tensor::scalar(s), {a}, [a](Tape& t, NodeId self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(a)) v += g;
  });
}

NodeId reshape(Tape& tape, NodeId a, Shape shape) {
  Tensor out = tape.value(a).reshaped(std::move(shape));
  return tape.record("reshape", std::move(out), {a},
                     [a](Tape& t, NodeId self) { accumulate(t.grad(a), t.grad(self)); });
}

NodeId matmul(Tape& tape, NodeId a, NodeId b) {
  const Tensor& va = tape.value(a);
  const Tensor& vb = tape.value(b);
  require_rank("matmul", va, 2);
  require_rank("matmul", vb, 2);
  if (va.dim(1) != vb.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(va.shape()) + " and " +
                         shape_to_string(vb.shape()));
  }
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  MutMap(out.data().data(), m, n).noalias() = ConstMap(va.data().data(), m, k) * ConstMap(vb.data().data(), k, n);
  return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, NodeId self) {
    ConstMap g(t.grad(self).data(), m, n);
    if (t.requires_grad(a)) {
      MutMap(t.grad(a).data(), m, k).noalias() += g * ConstMap(t.value(b).data().data(), k, n).transpose();
    }
    if (t.requires_grad(b)) {
      MutMap(t.grad(b).data(), k, n).noalias() += ConstMap(t.value(a).data().data(), m, k).transpose() * g;
    }
  });
}

NodeId linear(Tape& tape, NodeId x, NodeId weight, NodeId bias) {
  const Tensor& vx = tape.value(x);
  const Tensor& vw = tape.value(weight);
  const Tensor& vb = tape.value(bias);
  require_rank("linear", vx, 2);
  require_rank("linear", vw, 2);
  const std::size_t batch = vx.dim(0), in = vx.dim(1), out_dim = vw.dim(0);
  if (vw.dim(1) != in || vb.size() != out_dim) {
    throw DimensionError("linear: input " + shape_to_string(vx.shape()) + " incompatible with weight " +
                         shape_to_string(vw.shape()) + " and bias " + shape_to_string(vb.shape()));
  }
  Tensor out({batch, out_dim});
  MutMap y(out.data().data(), batch, out_dim);
  y.noalias() = ConstMap(vx.data().data(), batch, in) * ConstMap(vw.data().data(), out_dim, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(vb.data().data(), out_dim);
  return tape.record("linear", std::move(out), {x, weight, bias},
                     [x, weight, bias, batch, in, out_dim](Tape& t, NodeId self) {
                       ConstMap g(t.grad(self).data(), batch, out_dim);
                       if (t.requires_grad(x)) {
                         MutMap(t.grad(x).data(), batch, in).noalias() +=
                             g * ConstMap(t.value(weight).data().data(), out_dim, in);
                       }
                       if (t.requires_grad(weight)) {
                         MutMap(t.grad(weight).data(), out_dim, in).noalias() +=
                             g.transpose() * ConstMap(t.value(x).data().data(), batch, in);
                       }
                       if (t.requires_grad(bias)) {
                         double* db = t.grad(bias).data();
                         const double* gp = t.grad(self).data();
                         for (std::size_t i = 0; i < batch; ++i) {
                           for (std::size_t j = 0; j < out_dim; ++j) db[j] += gp[i * out_dim + j];
                         }
                       }
                     });
}

NodeId conv2d(Tape& tape, NodeId x, NodeId kernel, std::optional<NodeId> bias, Conv2dOptions options) {
  const Tensor& vx = tape.value(x);
  const Tensor& vk = tape.value(kernel);
  require_rank("conv2d input", vx, 4);
  require_rank("conv2d kernel", vk, 4);
  if (options.stride == 0) throw ContractError("conv2d: stride must be positive");
  if (vk.dim(1) != vx.dim(1)) {
    throw DimensionError("conv2d: kernel " + shape_to_string(vk.shape()) + " does not match input channels of " +
                         shape_to_string(vx.shape()));
  }
  const std::size_t padded_h = vx.dim(2) + 2 * options.padding;
  const std::size_t padded_w = vx.dim(3) + 2 * options.padding;
  if (vk.dim(2) > padded_h || vk.dim(3) > padded_w) {
    throw DimensionError("conv2d: kernel " + shape_to_string(vk.shape()) + " larger than padded input " +
                         shape_to_string(vx.shape()) + " with padding " + std::to_string(options.padding));
  }
  ConvGeometry g{vx.dim(0),   vx.dim(1),      vx.dim(2),      vx.dim(3),
                 vk.dim(0),   vk.dim(2),      vk.dim(3),      options.stride,
                 options.padding, (padded_h - vk.dim(2)) / options.stride + 1,
                 (padded_w - vk.dim(3)) / options.stride + 1};
  if (bias && tape.value(*bias).size() != g.filters) {
    throw DimensionError("conv2d: bias " + shape_to_string(tape.value(*bias).shape()) + " for " +
                         std::to_string(g.filters) + " filters");
  }

  Tensor out({g.batch, g.filters, g.out_h, g.out_w});
  std::vector<double> cols(g.patch() * g.out_area());
  ConstMap w(vk.data().data(), g.filters, g.patch());
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(vx.data().data() + b * g.in_image(), g, cols.data());
    MutMap y(out.data().data() + b * g.filters * g.out_area(), g.filters, g.out_area());
    y.noalias() = w * ConstMap(cols.data(), g.patch(), g.out_area());
    if (bias) {
      const Tensor& vb = tape.value(*bias);
      for (std::size_t f = 0; f < g.filters; ++f) y.row(f).array() += vb[f];
    }
  }

  std::vector<NodeId> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  return tape.record("conv2d", std::move(out), std::move(inputs), [x, kernel, bias, g](Tape& t, NodeId self) {
    const bool want_x = t.requires_grad(x);
    const bool want_k = t.requires_grad(kernel);
    const bool want_b = bias && t.requires_grad(*bias);
    std::span<const double> gout = t.grad(self);
    const double* xin = t.value(x).data().data();
    ConstMap w(t.value(kernel).data().data(), g.filters, g.patch());
    std::vector<double> cols(g.patch() * g.out_area());
    std::vector<double> dcols(want_x ? cols.size() : 0);
    double* dx = want_x ? t.grad(x).data() : nullptr;
    double* dk = want_k ? t.grad(kernel).data() : nullptr;
    double* db = want_b ? t.grad(*bias).data() : nullptr;
    for (std::size_t b = 0; b < g.batch; ++b) {
      ConstMap gy(gout.data() + b * g.filters * g.out_area(), g.filters, g.out_area());
      if (want_k) {
        im2col(xin + b * g.in_image(), g, cols.data());
        MutMap(dk, g.filters, g.patch()).noalias() += gy * ConstMap(cols.data(), g.patch(), g.out_area()).transpose();
      }
      if (want_b) {
        const double* gp = gout.data() + b * g.filters * g.out_area();
        for (std::size_t f = 0; f < g.filters; ++f) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.out_area(); ++i) s += gp[f * g.out_area() + i];
          db[f] += s;
        }
      }
      if (want_x) {
        MutMap(dcols.data(), g.patch(), g.out_area()).noalias() = w.transpose() * gy;
        col2im_add(dcols.data(), g, dx + b * g.in_image());
      }
    }
  });
}

NodeId maxpool2d(Tape& tape, NodeId x, std::size_t window) {
  const Tensor& vx = tape.value(x);
  require_rank("maxpool2d", vx, 4);
  if (window == 0) throw ContractError("maxpool2d: window must be positive");
  const std::size_t batch = vx.dim(0), ch = vx.dim(1), h = vx.dim(2), w = vx.dim(3);
  if (h % window != 0 || w % window != 0) {
    throw DimensionError("maxpool2d: input " + shape_to_string(vx.shape()) + " not divisible by window " +
                         std::to_string(window));
  }
  const std::size_t oh = h / window, ow = w / window;
  Tensor out({batch, ch, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < batch * ch; ++plane) {
    const double* src = vx.data().data() + plane * h * w;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c, ++o) {
        std::size_t best = (r * window) * w + c * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (r * window + i) * w + c * window + j;
            if (src[idx] > src[best]) best = idx;
          }
        }
        argmax[o] = plane * h * w + best;
        out[o] = src[best];
      }
    }
  }
  return tape.record("maxpool2d", std::move(out), {x}, [x, argmax = std::move(argmax)](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
  });
}

NodeId global_avg_pool(Tape& tape, NodeId x) {
  const Tensor& vx = tape.value(x);
  require_rank("global_avg_pool", vx, 4);
  const std::size_t planes = vx.dim(0) * vx.dim(1), area = vx.dim(2) * vx.dim(3);
  Tensor out({vx.dim(0), vx.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += vx[p * area + i];
    out[p] = s / static_cast<double>(area);
  }
  return tape.record("global_avg_pool", std::move(out), {x}, [x, planes, area](Tape& t, NodeId self) {
    auto g = t.grad(self);
    auto gx = t.grad(x);
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += g[p] * inv;
    }
  });
}

NodeId batch_norm(Tape& tape, NodeId x, NodeId gamma, NodeId beta, BatchNormStats& stats, bool training) {
  const Tensor& vx = tape.value(x);
  require_rank("batch_norm", vx, 4);
  const std::size_t batch = vx.dim(0), ch = vx.dim(1), area = vx.dim(2) * vx.dim(3);
  if (tape.value(gamma).size() != ch || tape.value(beta).size() != ch || stats.mean.size() != ch) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(ch) + " channels");
  }
  const std::size_t count = batch * area;
  if (training && count < 2) throw ContractError("batch_norm: training needs more than one value per channel");

  std::vector<double> mean(ch), inv_std(ch);
  if (training) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = vx.data().data() + (b * ch + c) * area;
        for (std::size_t i = 0; i < area; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = vx.data().data() + (b * ch + c) * area;
        for (std::size_t i = 0; i < area; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + stats.eps);
      stats.mean[c] = (1.0 - stats.momentum) * stats.mean[c] + stats.momentum * mu;
      stats.var[c] = (1.0 - stats.momentum) * stats.var[c] +
                     stats.momentum * ss / static_cast<double>(count - 1);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + stats.eps);
    }
  }

  const Tensor& vg = tape.value(gamma);
  const Tensor& vb = tape.value(beta);
  Tensor out(vx.shape());
  std::vector<double> xhat(vx.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const double h = (vx[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        out[base + i] = vg[c] * h + vb[c];
      }
    }
  }
  return tape.record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, batch, ch, area, count, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, NodeId self) {
        auto g = t.grad(self);
        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              sum_g[c] += g[base + i];
              sum_gx[c] += g[base + i] * xhat[base + i];
            }
          }
        }
        if (t.requires_grad(gamma)) accumulate(t.grad(gamma), sum_gx);
        if (t.requires_grad(beta)) accumulate(t.grad(beta), sum_g);
        if (!t.requires_grad(x)) return;
        const Tensor& vg = t.value(gamma);
        auto gx = t.grad(x);
        const double n = static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (b * ch + c) * area;
            const double k = vg[c] * inv_std[c];
            for (std::size_t i = 0; i < area; ++i) {
              if (training) {
                gx[base + i] += k * (g[base + i] - sum_g[c] / n - xhat[base + i] * sum_gx[c] / n);
              } else {
                gx[base + i] += k * g[base + i];
              }
            }
          }
        }
      });
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor probs(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data().data() + r * k;
    double* p = probs.data().data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - mx);
      s += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= s;
  }
  return probs;
}

NodeId softmax_cross_entropy(Tape& tape, NodeId logits, const Labels& labels) {
  const Tensor& z = tape.value(logits);
  require_rank("softmax_cross_entropy", z, 2);
  const std::size_t rows = z.dim(0), k = z.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_to_string(z.shape()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " at index " +
                       std::to_string(r) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = z.data().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    total += mx + std::log(s) - row[labels[r]];
  }
  const double loss = total / static_cast<double>(rows);
  return tape.record("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                     [logits, labels, rows, k](Tape& t, NodeId self) {
                       const double g = t.grad(self)[0] / static_cast<double>(rows);
                       Tensor p = softmax(t.value(logits));
                       auto gz = t.grad(logits);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<std::size_t>(labels[r]) == j ? 1.0 : 0.0;
                           gz[r * k + j] += g * (p[r * k + j] - onehot);
                         }
                       }
                     });
}

}  // namespace actbench
