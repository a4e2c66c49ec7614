#pragma once

// Small deterministic CNN/MLP engine: forward pass, softmax cross-entropy,
// exact backprop to parameters and inputs, plain SGD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "rcti/rng.hpp"
#include "rcti/tensor.hpp"

namespace rcti {

struct Conv2D {
  std::size_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1;
  Tensor weight;  // [out_ch, in_ch, kernel, kernel]
  Tensor bias;    // [out_ch]
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

/// Non-overlapping max pooling (stride == window); trailing rows/cols are dropped.
struct MaxPool2D {
  std::size_t window = 2;
  friend bool operator==(const MaxPool2D&, const MaxPool2D&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct Dense {
  std::size_t in_dim = 0, out_dim = 0;
  Tensor weight;  // [out_dim, in_dim]
  Tensor bias;    // [out_dim]
  friend bool operator==(const Dense&, const Dense&) = default;
};

using Layer = std::variant<Conv2D, ReLU, MaxPool2D, Flatten, Dense>;

inline Conv2D make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                        std::size_t stride = 1) {
  return Conv2D{in_ch, out_ch, kernel, stride, Tensor({out_ch, in_ch, kernel, kernel}),
                Tensor({out_ch})};
}

inline Dense make_dense(std::size_t in_dim, std::size_t out_dim) {
  return Dense{in_dim, out_dim, Tensor({out_dim, in_dim}), Tensor({out_dim})};
}

inline std::string layer_name(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>)
          return "Conv2D(" + std::to_string(l.in_ch) + "->" + std::to_string(l.out_ch) + ", " +
                 std::to_string(l.kernel) + "x" + std::to_string(l.kernel) + ", stride " +
                 std::to_string(l.stride) + ")";
        else if constexpr (std::is_same_v<L, ReLU>)
          return "ReLU";
        else if constexpr (std::is_same_v<L, MaxPool2D>)
          return "MaxPool2D(" + std::to_string(l.window) + ")";
        else if constexpr (std::is_same_v<L, Flatten>)
          return "Flatten";
        else
          return "Dense(" + std::to_string(l.in_dim) + "->" + std::to_string(l.out_dim) + ")";
      },
      layer);
}

inline bool has_params(const Layer& layer) {
  return std::holds_alternative<Conv2D>(layer) || std::holds_alternative<Dense>(layer);
}

struct Network {
  std::string architecture = "custom";
  Shape input_shape{1, 28, 28};
  std::size_t num_classes = 10;
  std::vector<Layer> layers;

  friend bool operator==(const Network&, const Network&) = default;
};

struct Batch {
  Tensor images;  // [n, ...input_shape]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

namespace detail {

[[noreturn]] inline void layer_shape_error(std::size_t index, const Layer& layer,
                                           const std::string& what) {
  throw ShapeError("layer " + std::to_string(index) + " (" + layer_name(layer) + "): " + what);
}

}  // namespace detail

/// Per-sample output shape of `layer` given per-sample input shape `in`.
inline Shape output_shape(const Layer& layer, const Shape& in, std::size_t index = 0) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) {
          if (in.size() != 3 || in[0] != l.in_ch)
            detail::layer_shape_error(index, layer,
                                      "expected [" + std::to_string(l.in_ch) + ",H,W], got " +
                                          shape_string(in));
          if (l.stride == 0 || l.kernel == 0 || in[1] < l.kernel || in[2] < l.kernel)
            detail::layer_shape_error(index, layer, "kernel does not fit " + shape_string(in));
          if (l.weight.shape != Shape{l.out_ch, l.in_ch, l.kernel, l.kernel} ||
              l.bias.shape != Shape{l.out_ch})
            detail::layer_shape_error(index, layer, "parameter shapes inconsistent");
          return {l.out_ch, (in[1] - l.kernel) / l.stride + 1, (in[2] - l.kernel) / l.stride + 1};
        } else if constexpr (std::is_same_v<L, ReLU>) {
          return in;
        } else if constexpr (std::is_same_v<L, MaxPool2D>) {
          if (in.size() != 3 || l.window == 0 || in[1] < l.window || in[2] < l.window)
            detail::layer_shape_error(index, layer, "cannot pool " + shape_string(in));
          return {in[0], in[1] / l.window, in[2] / l.window};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {shape_size(in)};
        } else {
          if (in.size() != 1 || in[0] != l.in_dim)
            detail::layer_shape_error(index, layer,
                                      "expected [" + std::to_string(l.in_dim) + "], got " +
                                          shape_string(in));
          if (l.weight.shape != Shape{l.out_dim, l.in_dim} || l.bias.shape != Shape{l.out_dim})
            detail::layer_shape_error(index, layer, "parameter shapes inconsistent");
          return {l.out_dim};
        }
      },
      layer);
}

/// Per-sample activation shapes: entry 0 is the input, entry i+1 the output of layer i.
inline std::vector<Shape> layer_shapes(const Network& net) {
  std::vector<Shape> shapes{net.input_shape};
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    shapes.push_back(output_shape(net.layers[i], shapes.back(), i));
  if (shapes.back() != Shape{net.num_classes})
    throw ShapeError("network output " + shape_string(shapes.back()) + " does not match " +
                     std::to_string(net.num_classes) + " classes");
  return shapes;
}

inline std::size_t param_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& layer : net.layers) {
    if (auto* c = std::get_if<Conv2D>(&layer)) n += c->weight.size() + c->bias.size();
    if (auto* d = std::get_if<Dense>(&layer)) n += d->weight.size() + d->bias.size();
  }
  return n;
}

/// He-style uniform init: U(-b, b), b = sqrt(6 / fan_in); biases zero.
inline void init_he_uniform(Network& net, Rng& rng) {
  auto fill = [&](Tensor& w, Tensor& b, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    std::fill(b.data.begin(), b.data.end(), 0.0);
  };
  for (auto& layer : net.layers) {
    if (auto* c = std::get_if<Conv2D>(&layer)) fill(c->weight, c->bias, c->in_ch * c->kernel * c->kernel);
    if (auto* d = std::get_if<Dense>(&layer)) fill(d->weight, d->bias, d->in_dim);
  }
}

inline const std::vector<std::string>& architecture_presets() {
  static const std::vector<std::string> names{"mlp", "cnn-small"};
  return names;
}

/// Build a preset architecture for 1x28x28 inputs and initialize it from `seed`.
///   mlp:       Flatten -> Dense(784->128) -> ReLU -> Dense(128->10)
///   cnn-small: Conv2D(1->8, 3x3) -> ReLU -> MaxPool 2x2 -> Flatten
///              -> Dense(1352->64) -> ReLU -> Dense(64->10)
inline Network make_network(const std::string& architecture, std::uint64_t seed,
                            std::size_t num_classes = 10) {
  Network net;
  net.architecture = architecture;
  net.num_classes = num_classes;
  if (architecture == "mlp") {
    net.layers = {Flatten{}, make_dense(784, 128), ReLU{}, make_dense(128, num_classes)};
  } else if (architecture == "cnn-small") {
    net.layers = {make_conv(1, 8, 3), ReLU{},          MaxPool2D{2},
                  Flatten{},          make_dense(8 * 13 * 13, 64), ReLU{},
                  make_dense(64, num_classes)};
  } else {
    throw std::invalid_argument("unknown architecture preset '" + architecture + "'");
  }
  layer_shapes(net);
  Rng rng(derive_seed(seed, 0x1417));
  init_he_uniform(net, rng);
  return net;
}

namespace detail {

inline Shape batch_shape(std::size_t n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

inline Tensor conv_forward(const Conv2D& l, const Tensor& x, const Shape& out) {
  const std::size_t n = x.dim(0), C = l.in_ch, H = x.dim(2), W = x.dim(3);
  const std::size_t O = out[0], Ho = out[1], Wo = out[2], K = l.kernel, S = l.stride;
  Tensor y(batch_shape(n, out));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      double* yo = &y.data[((b * O + o) * Ho) * Wo];
      for (std::size_t i = 0; i < Ho * Wo; ++i) yo[i] = l.bias[o];
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = &x.data[(b * C + c) * H * W];
        for (std::size_t p = 0; p < K; ++p)
          for (std::size_t q = 0; q < K; ++q) {
            const double w = l.weight[((o * C + c) * K + p) * K + q];
            for (std::size_t i = 0; i < Ho; ++i) {
              const double* xr = xc + (i * S + p) * W + q;
              double* yr = yo + i * Wo;
              for (std::size_t j = 0; j < Wo; ++j) yr[j] += w * xr[j * S];
            }
          }
      }
    }
  return y;
}

inline Tensor conv_backward(const Conv2D& l, const Tensor& x, const Tensor& dy, Tensor* dw,
                            Tensor* db) {
  const std::size_t n = x.dim(0), C = l.in_ch, H = x.dim(2), W = x.dim(3);
  const std::size_t O = dy.dim(1), Ho = dy.dim(2), Wo = dy.dim(3), K = l.kernel, S = l.stride;
  Tensor dx(x.shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < O; ++o) {
      const double* dyo = &dy.data[((b * O + o) * Ho) * Wo];
      if (db)
        for (std::size_t i = 0; i < Ho * Wo; ++i) db->data[o] += dyo[i];
      for (std::size_t c = 0; c < C; ++c) {
        const double* xc = &x.data[(b * C + c) * H * W];
        double* dxc = &dx.data[(b * C + c) * H * W];
        for (std::size_t p = 0; p < K; ++p)
          for (std::size_t q = 0; q < K; ++q) {
            const std::size_t widx = ((o * C + c) * K + p) * K + q;
            const double w = l.weight[widx];
            double acc = 0.0;
            for (std::size_t i = 0; i < Ho; ++i) {
              const std::size_t row = (i * S + p) * W + q;
              const double* dyr = dyo + i * Wo;
              for (std::size_t j = 0; j < Wo; ++j) {
                acc += dyr[j] * xc[row + j * S];
                dxc[row + j * S] += w * dyr[j];
              }
            }
            if (dw) dw->data[widx] += acc;
          }
      }
    }
  return dx;
}

inline Tensor pool_forward(const MaxPool2D& l, const Tensor& x, const Shape& out) {
  const std::size_t n = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = out[1], Wo = out[2], P = l.window;
  Tensor y(batch_shape(n, out));
  for (std::size_t bc = 0; bc < n * C; ++bc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t q = 0; q < P; ++q)
            m = std::max(m, x.data[(bc * H + i * P + p) * W + j * P + q]);
        y.data[(bc * Ho + i) * Wo + j] = m;
      }
  return y;
}

// Gradient goes to the first maximal element of each window.
inline Tensor pool_backward(const MaxPool2D& l, const Tensor& x, const Tensor& dy) {
  const std::size_t n = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = dy.dim(2), Wo = dy.dim(3), P = l.window;
  Tensor dx(x.shape);
  for (std::size_t bc = 0; bc < n * C; ++bc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (bc * H + i * P) * W + j * P;
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t q = 0; q < P; ++q) {
            const std::size_t idx = (bc * H + i * P + p) * W + j * P + q;
            if (x.data[idx] > x.data[best]) best = idx;
          }
        dx.data[best] += dy.data[(bc * Ho + i) * Wo + j];
      }
  return dx;
}

inline Tensor dense_forward(const Dense& l, const Tensor& x) {
  const std::size_t n = x.dim(0), I = l.in_dim, O = l.out_dim;
  Tensor y({n, O});
  for (std::size_t b = 0; b < n; ++b) {
    const double* xb = &x.data[b * I];
    for (std::size_t o = 0; o < O; ++o) {
      const double* wo = &l.weight.data[o * I];
      double acc = l.bias[o];
      for (std::size_t k = 0; k < I; ++k) acc += wo[k] * xb[k];
      y.data[b * O + o] = acc;
    }
  }
  return y;
}

inline Tensor dense_backward(const Dense& l, const Tensor& x, const Tensor& dy, Tensor* dw,
                             Tensor* db) {
  const std::size_t n = x.dim(0), I = l.in_dim, O = l.out_dim;
  Tensor dx(x.shape);
  for (std::size_t b = 0; b < n; ++b) {
    const double* xb = &x.data[b * I];
    double* dxb = &dx.data[b * I];
    for (std::size_t o = 0; o < O; ++o) {
      const double g = dy.data[b * O + o];
      if (g == 0.0) continue;
      const double* wo = &l.weight.data[o * I];
      if (dw) {
        double* dwo = &dw->data[o * I];
        for (std::size_t k = 0; k < I; ++k) dwo[k] += g * xb[k];
      }
      if (db) db->data[o] += g;
      for (std::size_t k = 0; k < I; ++k) dxb[k] += g * wo[k];
    }
  }
  return dx;
}

inline Tensor layer_forward(const Layer& layer, const Tensor& x, const Shape& out) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2D>) {
          return conv_forward(l, x, out);
        } else if constexpr (std::is_same_v<L, ReLU>) {
          Tensor y = x;
          for (double& v : y.data) v = v > 0.0 ? v : 0.0;
          return y;
        } else if constexpr (std::is_same_v<L, MaxPool2D>) {
          return pool_forward(l, x, out);
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return Tensor(batch_shape(x.dim(0), out), x.data);
        } else {
          return dense_forward(l, x);
        }
      },
      layer);
}

/// Forward pass keeping every activation; acts[0] is the input.
inline std::vector<Tensor> forward_all(const Network& net, const Tensor& images) {
  const auto shapes = layer_shapes(net);
  if (images.shape.empty() || Shape(images.shape.begin() + 1, images.shape.end()) != shapes[0])
    throw ShapeError("input batch " + shape_string(images.shape) + " does not match model input " +
                     shape_string(shapes[0]));
  std::vector<Tensor> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(images);
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    acts.push_back(layer_forward(net.layers[i], acts.back(), shapes[i + 1]));
  return acts;
}

}  // namespace detail

/// Logits of shape [n, num_classes].
inline Tensor forward(const Network& net, const Tensor& images) {
  auto acts = detail::forward_all(net, images);
  if (!acts.back().all_finite()) throw NumericError("forward pass produced non-finite logits");
  return std::move(acts.back());
}

inline Tensor forward(const Network& net, const Batch& batch) { return forward(net, batch.images); }

/// Gradient of one layer's parameters; empty tensors for parameter-free layers.
struct LayerGrad {
  Tensor weight;
  Tensor bias;
  friend bool operator==(const LayerGrad&, const LayerGrad&) = default;
};

using ParamGrads = std::vector<LayerGrad>;

struct LossGrads {
  double loss = 0.0;
  ParamGrads param_grads;  // empty when only input gradients were requested
  Tensor input_grads;      // same shape as the batch images
};

/// Mean softmax cross-entropy of `logits` against `labels`, and d(loss)/d(logits).
inline double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    Tensor* dlogits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("label count " + std::to_string(labels.size()) + " != batch size " +
                     std::to_string(n));
  if (n == 0) throw std::invalid_argument("empty batch");
  if (dlogits) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(k) + ")");
    const double* z = &logits.data[b * k];
    const double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[c] - m);
    const double lse = m + std::log(sum);
    total += lse - z[y];
    if (dlogits) {
      double* g = &dlogits->data[b * k];
      for (std::size_t c = 0; c < k; ++c)
        g[c] = (std::exp(z[c] - lse) - (static_cast<int>(c) == y ? 1.0 : 0.0)) /
               static_cast<double>(n);
    }
  }
  const double loss = total / static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss (numeric overflow)");
  return loss;
}

inline double loss(const Network& net, const Batch& batch) {
  return softmax_cross_entropy(forward(net, batch), batch.labels, nullptr);
}

/// Mean cross-entropy and its exact gradients. With `with_param_grads` false
/// only the input gradient is produced (what the attacks need).
inline LossGrads loss_and_grads(const Network& net, const Batch& batch,
                                bool with_param_grads = true) {
  auto acts = detail::forward_all(net, batch.images);
  LossGrads out;
  Tensor grad;
  out.loss = softmax_cross_entropy(acts.back(), batch.labels, &grad);
  if (with_param_grads) out.param_grads.resize(net.layers.size());

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Tensor& x = acts[li];
    LayerGrad* lg = with_param_grads ? &out.param_grads[li] : nullptr;
    grad = std::visit(
        [&](const auto& l) -> Tensor {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D> || std::is_same_v<L, Dense>) {
            if (lg) {
              lg->weight = Tensor(l.weight.shape);
              lg->bias = Tensor(l.bias.shape);
            }
            if constexpr (std::is_same_v<L, Conv2D>)
              return detail::conv_backward(l, x, grad, lg ? &lg->weight : nullptr,
                                           lg ? &lg->bias : nullptr);
            else
              return detail::dense_backward(l, x, grad, lg ? &lg->weight : nullptr,
                                            lg ? &lg->bias : nullptr);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            Tensor dx = grad;
            for (std::size_t i = 0; i < dx.size(); ++i)
              if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
            return dx;
          } else if constexpr (std::is_same_v<L, MaxPool2D>) {
            return detail::pool_backward(l, x, grad);
          } else {
            return Tensor(x.shape, std::move(grad.data));
          }
        },
        net.layers[li]);
  }
  out.input_grads = std::move(grad);
  if (!out.input_grads.all_finite()) throw NumericError("non-finite input gradient");
  return out;
}

/// p <- p - lr * g for every parameter.
inline Network sgd_step(Network net, const ParamGrads& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be >= 0");
  if (grads.size() != net.layers.size())
    throw ShapeError("gradient list has " + std::to_string(grads.size()) + " entries for " +
                     std::to_string(net.layers.size()) + " layers");
  auto apply = [&](Tensor& p, const Tensor& g, std::size_t li) {
    if (p.shape != g.shape)
      throw ShapeError("layer " + std::to_string(li) + " (" + layer_name(net.layers[li]) +
                       "): gradient " + shape_string(g.shape) + " vs parameter " +
                       shape_string(p.shape));
    for (std::size_t i = 0; i < p.size(); ++i) p.data[i] -= lr * g.data[i];
  };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& layer = net.layers[li];
    if (auto* c = std::get_if<Conv2D>(&layer)) {
      apply(c->weight, grads[li].weight, li);
      apply(c->bias, grads[li].bias, li);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      apply(d->weight, grads[li].weight, li);
      apply(d->bias, grads[li].bias, li);
    } else if (!grads[li].weight.empty() || !grads[li].bias.empty()) {
      throw ShapeError("layer " + std::to_string(li) + " (" + layer_name(layer) +
                       ") has no parameters but received a gradient");
    }
  }
  return net;
}

/// Index of the largest entry in each row; ties go to the lowest index.
inline std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> out(n, 0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 1; c < k; ++c)
      if (logits.data[b * k + c] > logits.data[b * k + out[b]]) out[b] = c;
  return out;
}

inline std::size_t count_correct(const Network& net, const Batch& batch) {
  const auto pred = argmax_rows(forward(net, batch));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    hits += static_cast<int>(pred[i]) == batch.labels[i];
  return hits;
}

/// Fraction of samples whose argmax logit equals the label.
inline double evaluate_accuracy(const Network& net, std::span<const Batch> data) {
  std::size_t hits = 0, total = 0;
  for (const auto& batch : data) {
    hits += count_correct(net, batch);
    total += batch.size();
  }
  if (total == 0) throw std::invalid_argument("cannot evaluate accuracy on an empty dataset");
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace rcti
