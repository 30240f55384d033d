#include "affect/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "affect/errors.hpp"
#include "affect/parallel.hpp"

namespace affect {

using detail::make_result;
using detail::Node;

namespace {

// Grad buffer of an input, or nullptr when that input is a constant.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

Shape strip_leading_ones(Shape s) {
  while (s.size() > 1 && s.front() == 1) s.erase(s.begin());
  return s;
}

// True when `small` tiles `big` by repetition over leading dims.
bool tiles(const Shape& small, const Shape& big) {
  if (shape_numel(small) == 1) return true;
  Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.rbegin(), s.rend(), big.rbegin());
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA dfa, DB dfb) {
  Shape out_shape;
  if (a.shape() == b.shape() || tiles(b.shape(), a.shape())) {
    out_shape = a.shape();
  } else if (tiles(a.shape(), b.shape())) {
    out_shape = b.shape();
  } else {
    throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t n = shape_numel(out_shape);
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i % na], bd[i % nb]);
  return make_result(std::move(out_shape), std::move(out), {a, b}, name,
                     [n, na, nb, dfa, dfb](Node& self) {
                       const auto& av = self.inputs[0]->data;
                       const auto& bv = self.inputs[1]->data;
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < n; ++i) {
                         double g = self.grad[i];
                         double x = av[i % na];
                         double y = bv[i % nb];
                         if (ga) (*ga)[i % na] += g * dfa(x, y);
                         if (gb) (*gb)[i % nb] += g * dfb(x, y);
                       }
                     });
}

template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_result(x.shape(), std::move(out), {x}, name, [df](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xv = self.inputs[0]->data;
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += self.grad[i] * df(xv[i], self.data[i]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  parallel_for(m, k * n, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* c = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        double av = ad[i * k + p];
        if (av == 0.0) continue;
        const double* brow = bd.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
      }
    }
  });
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    const auto& dc = self.grad;
    if (auto* ga = grad_of(self, 0)) {
      // dA = dC . B^T
      parallel_for(m, k * n, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dc[i * n + j] * bv[p * n + j];
            (*ga)[i * k + p] += acc;
          }
        }
      });
    }
    if (auto* gb = grad_of(self, 1)) {
      // dB = A^T . dC
      parallel_for(k, m * n, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t p = p0; p < p1; ++p) {
          double* row = gb->data() + p * n;
          for (std::size_t i = 0; i < m; ++i) {
            double av_ip = av[i * k + p];
            if (av_ip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) row[j] += av_ip * dc[i * n + j];
          }
        }
      });
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  return make_result({c, r}, std::move(out), {x}, "transpose", [r, c](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[i];
  });
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                     " of " + shape_str(x.shape()));
  }
  auto s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto xd = x.data();
  std::vector<double> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xd.data() + (o * s.len + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  return make_result(std::move(out_shape), std::move(out), {x}, "narrow",
                     [s, start, length](Node& self) {
                       auto* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = gx->data() + (o * s.len + start) * s.inner;
                         const double* src = self.grad.data() + o * length * s.inner;
                         for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " does not match " + shape_str(ref));
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  auto base = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::size_t len = p.dim(axis);
    auto pd = p.data();
    for (std::size_t o = 0; o < base.outer; ++o)
      std::copy_n(pd.data() + o * len * base.inner, len * base.inner,
                  out.data() + (o * total + off) * base.inner);
    off += len;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), std::move(inputs), "concat",
                     [base, total, offsets](Node& self) {
                       for (std::size_t idx = 0; idx < self.inputs.size(); ++idx) {
                         auto* g = grad_of(self, idx);
                         if (!g) continue;
                         std::size_t len = g->size() / (base.outer * base.inner);
                         for (std::size_t o = 0; o < base.outer; ++o) {
                           const double* src =
                               self.grad.data() + (o * total + offsets[idx]) * base.inner;
                           double* dst = g->data() + o * len * base.inner;
                           for (std::size_t i = 0; i < len * base.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather_rows with no indices");
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.numel() / rows;
  for (auto r : indices) {
    if (r >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                       shape_str(x.shape()));
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  auto xd = x.data();
  std::vector<double> out(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(xd.data() + indices[i] * width, width, out.data() + i * width);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out_shape), std::move(out), {x}, "gather_rows",
                     [idx = std::move(idx), width](Node& self) {
                       auto* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = gx->data() + idx[i] * width;
                         const double* src = self.grad.data() + i * width;
                         for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor softmax(const Tensor& x, int axis) {
  auto s = split_axis(x.shape(), normalize_axis(axis, x.rank()));
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto at = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xd[at(j)]);
      if (std::isinf(mx) && mx < 0) {
        // Every entry masked: emit zeros rather than NaN.
        for (std::size_t j = 0; j < s.len; ++j) out[at(j)] = 0.0;
        continue;
      }
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        double e = std::exp(xd[at(j)] - mx);
        out[at(j)] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[at(j)] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, "softmax", [s](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& y = self.data;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        auto at = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) dot += dy[at(j)] * y[at(j)];
        for (std::size_t j = 0; j < s.len; ++j) (*gx)[at(j)] += y[at(j)] * (dy[at(j)] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  auto s = split_axis(x.shape(), normalize_axis(axis, x.rank()));
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto at = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, xd[at(j)]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(xd[at(j)] - mx);
      double lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.len; ++j) out[at(j)] = xd[at(j)] - lse;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, "log_softmax", [s](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& y = self.data;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        auto at = [&](std::size_t j) { return (o * s.len + j) * s.inner + in; };
        double total = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) total += dy[at(j)];
        for (std::size_t j = 0; j < s.len; ++j)
          (*gx)[at(j)] += dy[at(j)] - std::exp(y[at(j)]) * total;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match last dim of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gain.data();
  auto bd = bias.data();
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      double h = (row[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gd[j] * h + bd[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias}, "layer_norm",
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& g = self.inputs[1]->data;
        const auto& dy = self.grad;
        auto* gx = grad_of(self, 0);
        auto* gg = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            double dh = dy[r * d + j] * g[j];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * d + j];
            if (gg) (*gg)[j] += dy[r * d + j] * xhat[r * d + j];
            if (gb) (*gb)[j] += dy[r * d + j];
          }
          if (!gx) continue;
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            double dh = dy[r * d + j] * g[j];
            (*gx)[r * d + j] += inv_std[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng* rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  if (!rng) throw ContractError("dropout in training mode needs a random source");
  std::bernoulli_distribution keep(1.0 - p);
  const double scale_kept = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(*rng) ? scale_kept : 0.0;
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, "dropout",
                     [mask = std::move(mask)](Node& self) {
                       auto* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t i = 0; i < mask.size(); ++i)
                         (*gx)[i] += self.grad[i] * mask[i];
                     });
}

Tensor conv1d_dilated(const Tensor& x, const Tensor& weights, const std::optional<Tensor>& bias,
                      std::size_t dilation) {
  if (x.rank() != 2 || weights.rank() != 3 || weights.dim(1) != x.dim(0)) {
    throw ShapeError("conv1d_dilated: input " + shape_str(x.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = weights.dim(0), k = weights.dim(2);
  if (k % 2 == 0) {
    throw ConfigError("conv1d_dilated: unsupported configuration, kernel size " +
                      std::to_string(k) + " is even");
  }
  if (dilation < 1) throw ConfigError("conv1d_dilated: dilation must be >= 1");
  if (bias && bias->numel() != c_out) {
    throw ShapeError("conv1d_dilated: bias " + shape_str(bias->shape()) + " for " +
                     std::to_string(c_out) + " output channels");
  }
  const auto pad = static_cast<std::ptrdiff_t>((k - 1) * dilation / 2);
  const auto slen = static_cast<std::ptrdiff_t>(len);
  auto xd = x.data();
  auto wd = weights.data();
  std::vector<double> out(c_out * len, 0.0);
  parallel_for(c_out, c_in * k * len, [&](std::size_t o0, std::size_t o1) {
    for (std::size_t o = o0; o < o1; ++o) {
      double* orow = out.data() + o * len;
      if (bias) std::fill_n(orow, len, bias->data()[o]);
      for (std::size_t i = 0; i < c_in; ++i) {
        const double* xrow = xd.data() + i * len;
        for (std::size_t j = 0; j < k; ++j) {
          double w = wd[(o * c_in + i) * k + j];
          if (w == 0.0) continue;
          auto off = static_cast<std::ptrdiff_t>(j * dilation) - pad;
          std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
          std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(slen, slen - off);
          for (std::ptrdiff_t t = t0; t < t1; ++t) orow[t] += w * xrow[t + off];
        }
      }
    }
  });
  std::vector<Tensor> inputs{x, weights};
  if (bias) inputs.push_back(*bias);
  return make_result(
      {c_out, len}, std::move(out), std::move(inputs), "conv1d_dilated",
      [c_in, c_out, k, len, pad, slen, dilation](Node& self) {
        const auto& xv = self.inputs[0]->data;
        const auto& wv = self.inputs[1]->data;
        const auto& dy = self.grad;
        auto range = [&](std::size_t j) {
          auto off = static_cast<std::ptrdiff_t>(j * dilation) - pad;
          return std::tuple{off, std::max<std::ptrdiff_t>(0, -off),
                            std::min<std::ptrdiff_t>(slen, slen - off)};
        };
        if (auto* gx = grad_of(self, 0)) {
          parallel_for(c_in, c_out * k * len, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
              double* gxrow = gx->data() + i * len;
              for (std::size_t o = 0; o < c_out; ++o) {
                const double* dyrow = dy.data() + o * len;
                for (std::size_t j = 0; j < k; ++j) {
                  double w = wv[(o * c_in + i) * k + j];
                  auto [off, t0, t1] = range(j);
                  for (std::ptrdiff_t t = t0; t < t1; ++t) gxrow[t + off] += w * dyrow[t];
                }
              }
            }
          });
        }
        if (auto* gw = grad_of(self, 1)) {
          parallel_for(c_out, c_in * k * len, [&](std::size_t o0, std::size_t o1) {
            for (std::size_t o = o0; o < o1; ++o) {
              const double* dyrow = dy.data() + o * len;
              for (std::size_t i = 0; i < c_in; ++i) {
                const double* xrow = xv.data() + i * len;
                for (std::size_t j = 0; j < k; ++j) {
                  auto [off, t0, t1] = range(j);
                  double acc = 0.0;
                  for (std::ptrdiff_t t = t0; t < t1; ++t) acc += dyrow[t] * xrow[t + off];
                  (*gw)[(o * c_in + i) * k + j] += acc;
                }
              }
            }
          });
        }
        if (self.inputs.size() > 2) {
          if (auto* gb = grad_of(self, 2)) {
            for (std::size_t o = 0; o < c_out; ++o) {
              double acc = 0.0;
              for (std::size_t t = 0; t < len; ++t) acc += dy[o * len + t];
              (*gb)[o] += acc;
            }
          }
        }
      });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x}, "sum", [](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (auto& g : *gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape()));
  auto s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  auto xd = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        out[o * s.inner + in] += xd[(o * s.len + j) * s.inner + in];
  return make_result(std::move(out_shape), std::move(out), {x}, "sum_axis", [s](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.len; ++j)
        for (std::size_t in = 0; in < s.inner; ++in)
          (*gx)[(o * s.len + j) * s.inner + in] += self.grad[o * s.inner + in];
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

}  // namespace affect
