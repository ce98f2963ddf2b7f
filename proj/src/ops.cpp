#include "mtsnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtsnn/op_counter.hpp"

namespace mtsnn {

namespace {

enum class Pairing { Same, Batch };

template <typename T>
Pairing pair_shapes(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return Pairing::Same;
  if (sa.size() == sb.size() + 1 && std::equal(sb.begin(), sb.end(), sa.begin() + 1)) return Pairing::Batch;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(sa) + " and " + to_string(sb));
}

template <typename T>
bool wants_grad(const Node<T>& n) {
  return n.requires_grad;
}

enum class Binary { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* tag) {
  Pairing pairing = pair_shapes(tag, a, b);
  auto av = a.values();
  auto bv = b.values();
  const std::size_t n = av.size();
  const std::size_t inner = bv.size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    T y = bv[pairing == Pairing::Same ? i : i % inner];
    switch (kind) {
      case Binary::Add: out[i] = av[i] + y; break;
      case Binary::Sub: out[i] = av[i] - y; break;
      case Binary::Mul: out[i] = av[i] * y; break;
      case Binary::Div: out[i] = av[i] / y; break;
    }
  }
  bool multiplicative = kind == Binary::Mul || kind == Binary::Div;
  record_ops(tag, multiplicative ? n : 0, multiplicative ? 0 : n);

  auto backward_fn = [kind, pairing, inner](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const auto& g = self.grad;
    const std::size_t count = g.size();
    auto b_index = [&](std::size_t i) { return pairing == Pairing::Same ? i : i % inner; };
    if (wants_grad(na)) {
      auto& ga = na.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) {
        switch (kind) {
          case Binary::Add:
          case Binary::Sub: ga[i] += g[i]; break;
          case Binary::Mul: ga[i] += g[i] * nb.value[b_index(i)]; break;
          case Binary::Div: ga[i] += g[i] / nb.value[b_index(i)]; break;
        }
      }
    }
    if (wants_grad(nb)) {
      auto& gb = nb.grad_buffer();
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = b_index(i);
        T bj = nb.value[j];
        switch (kind) {
          case Binary::Add: gb[j] += g[i]; break;
          case Binary::Sub: gb[j] -= g[i]; break;
          case Binary::Mul: gb[j] += g[i] * na.value[i]; break;
          case Binary::Div: gb[j] -= g[i] * na.value[i] / (bj * bj); break;
        }
      }
    }
  };
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, backward_fn, tag);
}

}  // namespace

std::size_t conv_padding(std::size_t kernel, Padding padding) {
  return padding == Padding::Same ? kernel / 2 : 0;
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride, Padding padding) {
  std::size_t padded = input + 2 * conv_padding(kernel, padding);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, Binary::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, Binary::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, Binary::Mul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, Binary::Div, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  record_ops("scale", av.size(), 0);
  return detail::make_result<T>(
      a.shape(), std::move(out), {a},
      [factor](Node<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
      },
      "scale");
}

namespace kernels {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template void gemm_nn(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace kernels

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T{0});
  kernels::gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  record_ops("matmul", m * n * k, m * n * (k - 1));
  return detail::make_result<T>(
      Shape{m, n}, std::move(out), {a, b},
      [m, n, k](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        if (na.requires_grad) kernels::gemm_nt(m, k, n, self.grad.data(), nb.value.data(), na.grad_buffer().data());
        if (nb.requires_grad) kernels::gemm_tn(k, n, m, na.value.data(), self.grad.data(), nb.grad_buffer().data());
      },
      "matmul");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1) || bias.rank() != 1 ||
      bias.dim(0) != weight.dim(0)) {
    throw ShapeError("linear: incompatible shapes x " + to_string(x.shape()) + ", weight " +
                     to_string(weight.shape()) + ", bias " + to_string(bias.shape()));
  }
  const std::size_t rows = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
  std::vector<T> out(rows * out_features, T{0});
  kernels::gemm_nt(rows, out_features, in, x.values().data(), weight.values().data(), out.data());
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_features; ++o) out[r * out_features + o] += bv[o];
  record_ops("linear", rows * out_features * in, rows * out_features * in);
  return detail::make_result<T>(
      Shape{rows, out_features}, std::move(out), {x, weight, bias},
      [rows, in, out_features](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const T* g = self.grad.data();
        if (nx.requires_grad) kernels::gemm_nn(rows, in, out_features, g, nw.value.data(), nx.grad_buffer().data());
        if (nw.requires_grad) kernels::gemm_tn(out_features, in, rows, g, nx.value.data(), nw.grad_buffer().data());
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_features; ++o) gb[o] += g[r * out_features + o];
        }
      },
      "linear");
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kernel, stride, pad;
  std::size_t out_h, out_w;
  std::size_t patch() const { return in_ch * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& kernel, const Conv2dOptions& options) {
  if (x.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != x.dim(1) || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: incompatible shapes input " + to_string(x.shape()) + " and kernel " +
                     to_string(kernel.shape()));
  }
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_ch = kernel.dim(0);
  g.kernel = kernel.dim(2);
  g.stride = options.stride;
  g.pad = conv_padding(g.kernel, options.padding);
  g.out_h = conv_output_size(g.height, g.kernel, g.stride, options.padding);
  g.out_w = conv_output_size(g.width, g.kernel, g.stride, options.padding);
  if (g.out_h == 0 || g.out_w == 0) {
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than input " + to_string(x.shape()));
  }
  return g;
}

// col[(c, ky, kx), (oy, ox)] for one image; padded taps are zero.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) && ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] = inside ? image[(c * g.height + iy) * g.width + ix] : T{0};
          }
        }
      }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* image) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = col + ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            image[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, Conv2dOptions options) {
  const ConvGeometry g = conv_geometry(x, kernel, options);
  const std::size_t patch = g.patch(), positions = g.positions();
  const std::size_t in_image = g.in_ch * g.height * g.width;
  const std::size_t out_image = g.out_ch * positions;
  std::vector<T> out(g.batch * out_image, T{0});
  std::vector<T> col(patch * positions);
  auto xv = x.values();
  auto wv = kernel.values();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, xv.data() + n * in_image, col.data());
    kernels::gemm_nn(g.out_ch, positions, patch, wv.data(), col.data(), out.data() + n * out_image);
  }
  record_ops("conv2d", g.batch * out_image * patch, g.batch * out_image * (patch - 1));

  return detail::make_result<T>(
      Shape{g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), {x, kernel},
      [g, in_image, out_image](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        const std::size_t patch = g.patch(), positions = g.positions();
        std::vector<T> col(patch * positions);
        std::vector<T> col_t(patch * positions);
        std::vector<T> dcol(patch * positions);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* dout = self.grad.data() + n * out_image;
          if (nw.requires_grad) {
            im2col(g, nx.value.data() + n * in_image, col.data());
            transpose(patch, positions, col.data(), col_t.data());
            kernels::gemm_nn(g.out_ch, patch, positions, dout, col_t.data(), nw.grad_buffer().data());
          }
          if (nx.requires_grad) {
            std::fill(dcol.begin(), dcol.end(), T{0});
            kernels::gemm_tn(patch, positions, g.out_ch, nw.value.data(), dout, dcol.data());
            col2im_add(g, dcol.data(), nx.grad_buffer().data() + n * in_image);
          }
        }
      },
      "conv2d");
}

namespace {

template <typename T>
void check_pool(const char* op, const Tensor<T>& x, std::size_t size) {
  if (x.rank() != 4 || size == 0 || x.dim(2) < size || x.dim(3) < size) {
    throw ShapeError(std::string(op) + ": cannot pool shape " + to_string(x.shape()) + " with window " +
                     std::to_string(size));
  }
}

}  // namespace

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t size) {
  check_pool("avg_pool2d", x, size);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / size, ow = w / size;
  const T inv = T{1} / static_cast<T>(size * size);
  auto xv = x.values();
  std::vector<T> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc{0};
        for (std::size_t dy = 0; dy < size; ++dy)
          for (std::size_t dx = 0; dx < size; ++dx) acc += xv[(p * h + oy * size + dy) * w + ox * size + dx];
        out[(p * oh + oy) * ow + ox] = acc * inv;
      }
  record_ops("avg_pool2d", out.size(), out.size() * (size * size - 1));
  return detail::make_result<T>(
      Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
      [planes, h, w, oh, ow, size, inv](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t p = 0; p < planes; ++p)
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const T g = self.grad[(p * oh + oy) * ow + ox] * inv;
              for (std::size_t dy = 0; dy < size; ++dy)
                for (std::size_t dx = 0; dx < size; ++dx) gx[(p * h + oy * size + dy) * w + ox * size + dx] += g;
            }
      },
      "avg_pool2d");
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t size) {
  check_pool("max_pool2d", x, size);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / size, ow = w / size;
  auto xv = x.values();
  std::vector<T> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (p * h + oy * size) * w + ox * size;
        for (std::size_t dy = 0; dy < size; ++dy)
          for (std::size_t dx = 0; dx < size; ++dx) {
            std::size_t idx = (p * h + oy * size + dy) * w + ox * size + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
  record_ops("max_pool2d", 0, 0, out.size() * (size * size - 1));
  return detail::make_result<T>(
      Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
      [argmax = std::move(argmax)](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
      },
      "max_pool2d");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto xv = x.values();
  return detail::make_result<T>(
      shape, std::vector<T>(xv.begin(), xv.end()), {x},
      [](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.values()) acc += v;
  record_ops("sum", 0, x.numel() - 1);
  return detail::make_result<T>(
      Shape{1}, {acc}, {x},
      [](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (auto& g : gx) g += self.grad[0];
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.values()) acc += v;
  const T count = static_cast<T>(x.numel());
  record_ops("mean", 1, x.numel() - 1);
  return detail::make_result<T>(
      Shape{1}, {acc / count}, {x},
      [count](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        const T g = self.grad[0] / count;
        for (auto& v : gx) v += g;
      },
      "mean");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  record_ops("relu", 0, 0, xv.size());
  return detail::make_result<T>(
      x.shape(), std::move(out), {x},
      [](Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& gx = in.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (in.value[i] > T{0}) gx[i] += self.grad[i];
      },
      "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T{1} / (T{1} + std::exp(-xv[i]));
  record_ops("sigmoid", xv.size(), xv.size());
  return detail::make_result<T>(
      x.shape(), out, {x},
      [out](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * out[i] * (T{1} - out[i]);
      },
      "sigmoid");
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("log_softmax: expected [rows, classes], got " + to_string(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto xv = logits.values();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    T peak = *std::max_element(row, row + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(row[c] - peak);
    const T log_total = std::log(total) + peak;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - log_total;
  }
  return detail::make_result<T>(
      logits.shape(), out, {logits},
      [out, rows, cols](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          T gsum{0};
          for (std::size_t c = 0; c < cols; ++c) gsum += self.grad[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            gx[i] += self.grad[i] - std::exp(out[i]) * gsum;
          }
        }
      },
      "log_softmax");
}

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& log_probs, std::span<const int> labels) {
  if (log_probs.rank() != 2 || log_probs.dim(0) != labels.size()) {
    throw ShapeError("nll_loss: log-probabilities " + to_string(log_probs.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = log_probs.dim(0), cols = log_probs.dim(1);
  std::vector<int> label_copy(labels.begin(), labels.end());
  for (int label : label_copy) {
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw std::out_of_range("nll_loss: label " + std::to_string(label) + " outside [0, " + std::to_string(cols) + ")");
    }
  }
  auto lp = log_probs.values();
  T acc{0};
  for (std::size_t r = 0; r < rows; ++r) acc -= lp[r * cols + static_cast<std::size_t>(label_copy[r])];
  const T count = static_cast<T>(rows);
  return detail::make_result<T>(
      Shape{1}, {acc / count}, {log_probs},
      [label_copy, cols, count](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        const T g = self.grad[0] / count;
        for (std::size_t r = 0; r < label_copy.size(); ++r) gx[r * cols + static_cast<std::size_t>(label_copy[r])] -= g;
      },
      "nll_loss");
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || count == 0 || begin + count > x.dim(0)) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for shape " + to_string(x.shape()));
  }
  Shape shape = x.shape();
  const std::size_t row = x.numel() / shape[0];
  shape[0] = count;
  auto xv = x.values();
  std::vector<T> out(xv.begin() + begin * row, xv.begin() + (begin + count) * row);
  return detail::make_result<T>(
      shape, std::move(out), {x},
      [offset = begin * row](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gx[offset + i] += self.grad[i];
      },
      "slice_rows");
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: nothing to concatenate");
  Shape shape = parts[0].shape();
  Shape tail(shape.begin() + 1, shape.end());
  std::size_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    Shape ptail(p.shape().begin() + 1, p.shape().end());
    if (ptail != tail) {
      throw ShapeError("concat_rows: incompatible shapes " + to_string(parts[0].shape()) + " and " + to_string(p.shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  shape[0] = rows;
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return detail::make_result<T>(
      shape, std::move(out), inputs,
      [](Node<T>& self) {
        std::size_t offset = 0;
        for (auto& in : self.inputs) {
          const std::size_t n = in->value.size();
          if (in->requires_grad) {
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
          }
          offset += n;
        }
      },
      "concat_rows");
}

template <typename T>
Tensor<T> mean_over_steps(const Tensor<T>& x, std::size_t steps) {
  if (steps == 0 || x.rank() == 0 || x.dim(0) % steps != 0) {
    throw ShapeError("mean_over_steps: leading dimension of " + to_string(x.shape()) + " is not divisible by " +
                     std::to_string(steps) + " steps");
  }
  Shape shape = x.shape();
  shape[0] /= steps;
  const std::size_t per_step = x.numel() / steps;
  auto xv = x.values();
  std::vector<T> out(per_step, T{0});
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < per_step; ++i) out[i] += xv[t * per_step + i];
  const T denom = static_cast<T>(steps);
  for (auto& v : out) v /= denom;
  record_ops("mean_over_steps", per_step, per_step * (steps - 1));
  return detail::make_result<T>(
      shape, std::move(out), {x},
      [steps, per_step, denom](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t t = 0; t < steps; ++t)
          for (std::size_t i = 0; i < per_step; ++i) gx[t * per_step + i] += self.grad[i] / denom;
      },
      "mean_over_steps");
}

template <typename T>
Tensor<T> group_mean(const Tensor<T>& x, std::size_t group_size) {
  if (x.rank() != 2 || group_size == 0 || x.dim(1) % group_size != 0) {
    throw ShapeError("group_mean: width of " + to_string(x.shape()) + " is not divisible by group size " +
                     std::to_string(group_size));
  }
  const std::size_t rows = x.dim(0), width = x.dim(1), groups = width / group_size;
  auto xv = x.values();
  std::vector<T> out(rows * groups);
  const T denom = static_cast<T>(group_size);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < groups; ++j) {
      T acc{0};
      for (std::size_t i = 0; i < group_size; ++i) acc += xv[r * width + j * group_size + i];
      out[r * groups + j] = acc / denom;
    }
  record_ops("group_mean", out.size(), out.size() * (group_size - 1));
  return detail::make_result<T>(
      Shape{rows, groups}, std::move(out), {x},
      [rows, width, groups, group_size, denom](Node<T>& self) {
        auto& gx = self.inputs[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < groups; ++j) {
            const T g = self.grad[r * groups + j] / denom;
            for (std::size_t i = 0; i < group_size; ++i) gx[r * width + j * group_size + i] += g;
          }
      },
      "group_mean");
}

namespace {

struct ChannelLayout {
  std::size_t outer, channels, inner;
};

template <typename T>
ChannelLayout channel_layout(const char* op, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (x.rank() < 2 || gamma.shape() != Shape{x.dim(1)} || beta.shape() != Shape{x.dim(1)}) {
    throw ShapeError(std::string(op) + ": input " + to_string(x.shape()) + " does not match gamma " +
                     to_string(gamma.shape()) + " / beta " + to_string(beta.shape()));
  }
  return ChannelLayout{x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
}

}  // namespace

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T epsilon,
                           BatchStats<T>* stats_out) {
  const ChannelLayout L = channel_layout("batch_norm_train", x, gamma, beta);
  const std::size_t count = L.outer * L.inner;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> mean_c(L.channels, T{0}), var_c(L.channels, T{0}), inv_std(L.channels);
  for (std::size_t n = 0; n < L.outer; ++n)
    for (std::size_t c = 0; c < L.channels; ++c) {
      const T* p = xv.data() + (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) mean_c[c] += p[i];
    }
  for (auto& m : mean_c) m /= static_cast<T>(count);
  for (std::size_t n = 0; n < L.outer; ++n)
    for (std::size_t c = 0; c < L.channels; ++c) {
      const T* p = xv.data() + (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        const T d = p[i] - mean_c[c];
        var_c[c] += d * d;
      }
    }
  for (std::size_t c = 0; c < L.channels; ++c) {
    var_c[c] /= static_cast<T>(count);
    inv_std[c] = T{1} / std::sqrt(var_c[c] + epsilon);
  }
  std::vector<T> normalized(xv.size()), out(xv.size());
  for (std::size_t n = 0; n < L.outer; ++n)
    for (std::size_t c = 0; c < L.channels; ++c) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i) {
        normalized[base + i] = (xv[base + i] - mean_c[c]) * inv_std[c];
        out[base + i] = normalized[base + i] * gv[c] + bv[c];
      }
    }
  record_ops("batch_norm", 2 * xv.size(), 2 * xv.size());
  if (stats_out) *stats_out = BatchStats<T>{mean_c, var_c};

  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [L, count, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        std::vector<T> sum_g(L.channels, T{0}), sum_gx(L.channels, T{0});
        for (std::size_t n = 0; n < L.outer; ++n)
          for (std::size_t c = 0; c < L.channels; ++c) {
            const std::size_t base = (n * L.channels + c) * L.inner;
            for (std::size_t i = 0; i < L.inner; ++i) {
              sum_g[c] += self.grad[base + i];
              sum_gx[c] += self.grad[base + i] * normalized[base + i];
            }
          }
        if (ng.requires_grad) {
          auto& gg = ng.grad_buffer();
          for (std::size_t c = 0; c < L.channels; ++c) gg[c] += sum_gx[c];
        }
        if (nb.requires_grad) {
          auto& gb = nb.grad_buffer();
          for (std::size_t c = 0; c < L.channels; ++c) gb[c] += sum_g[c];
        }
        if (nx.requires_grad) {
          auto& gx = nx.grad_buffer();
          const T m = static_cast<T>(count);
          for (std::size_t n = 0; n < L.outer; ++n)
            for (std::size_t c = 0; c < L.channels; ++c) {
              const T k = ng.value[c] * inv_std[c] / m;
              const std::size_t base = (n * L.channels + c) * L.inner;
              for (std::size_t i = 0; i < L.inner; ++i) {
                gx[base + i] += k * (m * self.grad[base + i] - sum_g[c] - normalized[base + i] * sum_gx[c]);
              }
            }
        }
      },
      "batch_norm");
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          std::span<const T> running_mean, std::span<const T> running_var, T epsilon) {
  const ChannelLayout L = channel_layout("batch_norm_eval", x, gamma, beta);
  if (running_mean.size() != L.channels || running_var.size() != L.channels) {
    throw ShapeError("batch_norm_eval: running statistics do not match " + std::to_string(L.channels) + " channels");
  }
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<T> inv_std(L.channels);
  for (std::size_t c = 0; c < L.channels; ++c) inv_std[c] = T{1} / std::sqrt(running_var[c] + epsilon);
  std::vector<T> out(xv.size());
  for (std::size_t n = 0; n < L.outer; ++n)
    for (std::size_t c = 0; c < L.channels; ++c) {
      const std::size_t base = (n * L.channels + c) * L.inner;
      for (std::size_t i = 0; i < L.inner; ++i)
        out[base + i] = (xv[base + i] - running_mean[c]) * inv_std[c] * gv[c] + bv[c];
    }
  record_ops("batch_norm", 2 * xv.size(), 2 * xv.size());
  std::vector<T> mean_copy(running_mean.begin(), running_mean.end());
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [L, inv_std = std::move(inv_std), mean_copy = std::move(mean_copy)](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        for (std::size_t n = 0; n < L.outer; ++n)
          for (std::size_t c = 0; c < L.channels; ++c) {
            const std::size_t base = (n * L.channels + c) * L.inner;
            for (std::size_t i = 0; i < L.inner; ++i) {
              const T g = self.grad[base + i];
              if (nx.requires_grad) nx.grad_buffer()[base + i] += g * inv_std[c] * ng.value[c];
              if (ng.requires_grad) ng.grad_buffer()[c] += g * (nx.value[base + i] - mean_copy[c]) * inv_std[c];
              if (nb.requires_grad) nb.grad_buffer()[c] += g;
            }
          }
      },
      "batch_norm");
}

#define MTSNN_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, Conv2dOptions);                          \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                      \
  template Tensor<T> nll_loss(const Tensor<T>&, std::span<const int>);                                   \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                            \
  template Tensor<T> mean_over_steps(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> group_mean(const Tensor<T>&, std::size_t);                                          \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,           \
                                      BatchStats<T>*);                                                   \
  template Tensor<T> batch_norm_eval(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                     std::span<const T>, std::span<const T>, T);

MTSNN_INSTANTIATE_OPS(float)
MTSNN_INSTANTIATE_OPS(double)

}  // namespace mtsnn
