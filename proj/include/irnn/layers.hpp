#pragma once

// Differentiable building blocks with hand-derived backward passes.
//
// Gradient objects have the same type as the parameters they mirror; a
// backward call accumulates (+=) into them.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "irnn/math.hpp"

namespace irnn {

enum class ParamKind { Weight, Bias, Embedding };

// Lookup table. `touched` is only used on gradient objects: it lists the rows
// a backward pass wrote to, so clearing and sparse updates stay O(touched).
struct Embedding {
  Matrix table;
  std::vector<int> touched;

  std::size_t dim() const { return table.cols(); }
  std::size_t entries() const { return table.rows(); }

  void gather(std::span<const int> ids, std::span<double> out) const {
    const std::size_t d = dim();
    if (out.size() != ids.size() * d) throw ShapeError("Embedding::gather: output length mismatch");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto row = table.row(std::size_t(ids[k]));
      std::copy(row.begin(), row.end(), out.begin() + std::ptrdiff_t(k * d));
    }
  }

  void scatter_add(std::span<const int> ids, std::span<const double> grad) {
    const std::size_t d = dim();
    if (grad.size() != ids.size() * d) throw ShapeError("Embedding::scatter_add: gradient length mismatch");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      auto row = table.row(std::size_t(ids[k]));
      for (std::size_t j = 0; j < d; ++j) row[j] += grad[k * d + j];
      touched.push_back(ids[k]);
    }
  }

  void clear_touched() {
    for (int r : touched) {
      auto row = table.row(std::size_t(r));
      std::fill(row.begin(), row.end(), 0.0);
    }
    touched.clear();
  }
};

// Affine map y = W x + b.
struct Dense {
  Matrix w;
  Matrix b;  // out x 1

  static Dense xavier(std::size_t out, std::size_t in, Rng& rng) {
    return {xavier_init(out, in, rng), Matrix(out, 1)};
  }
  static Dense zeros(std::size_t out, std::size_t in) { return {Matrix(out, in), Matrix(out, 1)}; }

  std::size_t out_dim() const { return w.rows(); }
  std::size_t in_dim() const { return w.cols(); }
  bool empty() const { return w.empty(); }

  void forward(std::span<const double> x, std::span<double> y) const {
    gemv(w, x, y);
    axpy(1.0, b.flat(), y);
  }

  // grad.w += g x^T, grad.b += g, dx += W^T g (dx may be empty).
  void backward(std::span<const double> x, std::span<const double> g, Dense& grad,
                std::span<double> dx) const {
    outer_add(grad.w, g, x);
    axpy(1.0, g, grad.b.flat());
    if (!dx.empty()) gemv_t_add(w, g, dx);
  }
};

// Window indices: positions t-d .. t+d, left to right, BOS/EOS outside the
// sequence.
inline std::vector<int> window_ids(std::span<const int> ids, std::size_t t, std::size_t d, int bos,
                                   int eos) {
  std::vector<int> out;
  out.reserve(2 * d + 1);
  const long n = long(ids.size());
  for (long k = long(t) - long(d); k <= long(t) + long(d); ++k) {
    if (k < 0) out.push_back(bos);
    else if (k >= n) out.push_back(eos);
    else out.push_back(ids[std::size_t(k)]);
  }
  return out;
}

// Label context at step `step` (0-based, = number of labels already emitted):
// slot k in [0, d_l) holds history[step - d_l + k], or `bol` before the start.
inline std::vector<int> label_window_ids(std::span<const int> history, std::size_t step,
                                         std::size_t d_l, int bol) {
  std::vector<int> out(d_l, bol);
  for (std::size_t k = 0; k < d_l; ++k) {
    long idx = long(step) - long(d_l) + long(k);
    if (idx >= 0) out[k] = history[std::size_t(idx)];
  }
  return out;
}

inline Vec word_window(std::span<const int> words, std::size_t t, std::size_t d_w, const Embedding& e,
                       int bos, int eos) {
  auto ids = window_ids(words, t, d_w, bos, eos);
  Vec out(ids.size() * e.dim());
  e.gather(ids, out);
  return out;
}

inline Vec label_window(std::span<const int> history, std::size_t step, std::size_t d_l,
                        const Embedding& e, int bol) {
  auto ids = label_window_ids(history, step, d_l, bol);
  Vec out(ids.size() * e.dim());
  e.gather(ids, out);
  return out;
}

// ReLU hidden layer h = relu(H x + b).
struct ReluCache {
  Vec pre;
  Vec h;
};

inline void relu_hidden_forward(const Dense& layer, std::span<const double> x, ReluCache& cache) {
  cache.pre.assign(layer.out_dim(), 0.0);
  layer.forward(x, cache.pre);
  cache.h.resize(cache.pre.size());
  for (std::size_t i = 0; i < cache.pre.size(); ++i) cache.h[i] = relu(cache.pre[i]);
}

inline void relu_hidden_backward(const Dense& layer, std::span<const double> x, const ReluCache& cache,
                                 std::span<const double> dh, Dense& grad, std::span<double> dx) {
  Vec g(dh.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = dh[i] * relu_grad(cache.pre[i]);
  layer.backward(x, g, grad, dx);
}

// GRU hidden layer:
//   z = sigmoid(Wz h_prev + Uz x + bz)
//   r = sigmoid(Wr h_prev + Ur x + br)
//   c = tanh(W (r * h_prev) + U x + b)
//   h = (1 - z) * h_prev + z * c
struct Gru {
  Dense uz, ur, uh;       // input maps (with biases)
  Matrix wz, wr, wh;      // recurrent maps

  static Gru xavier(std::size_t hidden, std::size_t in, Rng& rng) {
    Gru g;
    g.uz = Dense::xavier(hidden, in, rng);
    g.wz = xavier_init(hidden, hidden, rng);
    g.ur = Dense::xavier(hidden, in, rng);
    g.wr = xavier_init(hidden, hidden, rng);
    g.uh = Dense::xavier(hidden, in, rng);
    g.wh = xavier_init(hidden, hidden, rng);
    return g;
  }
  static Gru zeros(std::size_t hidden, std::size_t in) {
    return {Dense::zeros(hidden, in), Dense::zeros(hidden, in), Dense::zeros(hidden, in),
            Matrix(hidden, hidden), Matrix(hidden, hidden), Matrix(hidden, hidden)};
  }

  std::size_t hidden() const { return wz.rows(); }
  bool empty() const { return wz.empty(); }
};

struct GruCache {
  Vec h_prev, z, r, rh, c, h;
};

inline void gru_forward(const Gru& p, std::span<const double> x, std::span<const double> h_prev,
                        GruCache& cache) {
  const std::size_t n = p.hidden();
  if (h_prev.size() != n) throw ShapeError("gru_forward: h_prev length mismatch");
  cache.h_prev.assign(h_prev.begin(), h_prev.end());
  Vec tmp(n);
  cache.z.assign(n, 0.0);
  p.uz.forward(x, cache.z);
  gemv(p.wz, h_prev, tmp);
  for (std::size_t i = 0; i < n; ++i) cache.z[i] = sigmoid(cache.z[i] + tmp[i]);
  cache.r.assign(n, 0.0);
  p.ur.forward(x, cache.r);
  gemv(p.wr, h_prev, tmp);
  for (std::size_t i = 0; i < n; ++i) cache.r[i] = sigmoid(cache.r[i] + tmp[i]);
  cache.rh.resize(n);
  for (std::size_t i = 0; i < n; ++i) cache.rh[i] = cache.r[i] * h_prev[i];
  cache.c.assign(n, 0.0);
  p.uh.forward(x, cache.c);
  gemv(p.wh, cache.rh, tmp);
  for (std::size_t i = 0; i < n; ++i) cache.c[i] = std::tanh(cache.c[i] + tmp[i]);
  cache.h.resize(n);
  for (std::size_t i = 0; i < n; ++i) cache.h[i] = (1.0 - cache.z[i]) * h_prev[i] + cache.z[i] * cache.c[i];
}

// Accumulates parameter gradients into `grad`, input gradient into `dx` (if
// non-empty) and the gradient w.r.t. h_prev into `dh_prev` (if non-empty).
inline void gru_backward(const Gru& p, std::span<const double> x, const GruCache& cache,
                         std::span<const double> dh, Gru& grad, std::span<double> dx,
                         std::span<double> dh_prev) {
  const std::size_t n = p.hidden();
  Vec dz(n), dc_pre(n), dz_pre(n), dr_pre(n), drh(n, 0.0), dhp(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    dz[i] = dh[i] * (cache.c[i] - cache.h_prev[i]);
    double dc = dh[i] * cache.z[i];
    dc_pre[i] = dc * tanh_grad_from_output(cache.c[i]);
    dhp[i] = dh[i] * (1.0 - cache.z[i]);
    dz_pre[i] = dz[i] * sigmoid_grad_from_output(cache.z[i]);
  }
  // candidate
  p.uh.backward(x, dc_pre, grad.uh, dx);
  outer_add(grad.wh, dc_pre, cache.rh);
  gemv_t_add(p.wh, dc_pre, drh);
  for (std::size_t i = 0; i < n; ++i) {
    dr_pre[i] = drh[i] * cache.h_prev[i] * sigmoid_grad_from_output(cache.r[i]);
    dhp[i] += drh[i] * cache.r[i];
  }
  // gates
  p.uz.backward(x, dz_pre, grad.uz, dx);
  outer_add(grad.wz, dz_pre, cache.h_prev);
  gemv_t_add(p.wz, dz_pre, dhp);
  p.ur.backward(x, dr_pre, grad.ur, dx);
  outer_add(grad.wr, dr_pre, cache.h_prev);
  gemv_t_add(p.wr, dr_pre, dhp);
  if (!dh_prev.empty()) axpy(1.0, dhp, dh_prev);
}

// Character convolution with max-pooling over the word length.
struct CharConvCache {
  std::vector<std::vector<int>> window_ids;  // per character position
  std::vector<Vec> windows;                  // gathered embeddings per position
  std::vector<std::size_t> argmax;           // per output row
  Vec out;
};

inline void char_conv_forward(std::span<const int> chars, const Embedding& table, const Dense& conv,
                              std::size_t d_c, int pad, CharConvCache& cache) {
  if (chars.empty()) throw DataError("char_conv: empty word");
  const std::size_t len = chars.size(), rows = conv.out_dim();
  if (conv.in_dim() != (2 * d_c + 1) * table.dim()) throw ShapeError("char_conv: convolution width mismatch");
  cache.window_ids.resize(len);
  cache.windows.resize(len);
  cache.argmax.assign(rows, 0);
  cache.out.assign(rows, 0.0);
  Vec col(rows);
  for (std::size_t i = 0; i < len; ++i) {
    cache.window_ids[i] = window_ids(chars, i, d_c, pad, pad);
    cache.windows[i].resize(conv.in_dim());
    table.gather(cache.window_ids[i], cache.windows[i]);
    conv.forward(cache.windows[i], col);
    for (std::size_t c = 0; c < rows; ++c) {
      // strict comparison keeps the leftmost maximum
      if (i == 0 || col[c] > cache.out[c]) {
        cache.out[c] = col[c];
        cache.argmax[c] = i;
      }
    }
  }
}

// Routes each row's gradient to its argmax position only.
inline void char_conv_backward(const Embedding& table, const Dense& conv, const CharConvCache& cache,
                               std::span<const double> g, Embedding& table_grad, Dense& conv_grad) {
  const std::size_t len = cache.windows.size(), rows = conv.out_dim();
  Vec gi(rows), dx(conv.in_dim());
  for (std::size_t i = 0; i < len; ++i) {
    bool any = false;
    for (std::size_t c = 0; c < rows; ++c) {
      gi[c] = cache.argmax[c] == i ? g[c] : 0.0;
      any = any || cache.argmax[c] == i;
    }
    if (!any) continue;
    std::fill(dx.begin(), dx.end(), 0.0);
    conv.backward(cache.windows[i], gi, conv_grad, dx);
    table_grad.scatter_add(cache.window_ids[i], dx);
  }
  (void)table;
}

// Softmax output layer.
inline Vec output_forward(const Dense& out, std::span<const double> h) {
  Vec y(out.out_dim());
  out.forward(h, y);
  softmax_inplace(y);
  return y;
}

// Gradient of -log y[gold] at the pre-softmax layer: y - onehot(gold).
inline Vec output_backward(std::span<const double> y, int gold) {
  Vec g(y.begin(), y.end());
  g[std::size_t(gold)] -= 1.0;
  return g;
}

}  // namespace irnn
