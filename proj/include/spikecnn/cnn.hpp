#pragma once

// Float reference CNN: layer kernels, forward pass, backpropagation and
// mini-batch SGD on softmax cross-entropy.
//
// Kernels are templates over the scalar type. Weights on disk are float; the
// gradient check instantiates everything with double.
//
// Counting convention for the instrumented kernels: an output of fan-in n
// costs n MULs and n ADDs (n - 1 accumulations plus the bias); the first
// product is moved into the accumulator, not added. Max-pool comparisons are
// counted as ADDs, window - 1 per output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spikecnn/errors.hpp"
#include "spikecnn/label.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/op_counter.hpp"
#include "spikecnn/random.hpp"
#include "spikecnn/tensor.hpp"
#include "spikecnn/weights.hpp"

namespace spikecnn {

namespace detail {

// Flat-index geometry of a single-dimension convolution.
struct ConvGeometry {
  Shape3 in;
  Shape3 out;
  std::size_t kernel = 1;
  std::size_t fan_in = 1;
  std::size_t step_h = 1;   // input row advance per output row
  std::size_t step_w = 1;   // input column advance per output column
  std::size_t kstep = 1;    // input advance per kernel tap

  ConvGeometry(const Conv1D& conv, const Shape3& input) : in(input), out(output_shape(Layer{conv}, input)) {
    kernel = conv.length();
    fan_in = kernel * conv.c_in;
    const bool along_width = conv.axis() == Axis::width;
    step_h = along_width ? 1 : conv.stride;
    step_w = along_width ? conv.stride : 1;
    kstep = along_width ? 1 : in.w;
  }

  [[nodiscard]] std::size_t input_base(std::size_t ci, std::size_t oh, std::size_t ow) const noexcept {
    return (ci * in.h + oh * step_h) * in.w + ow * step_w;
  }
};

template <typename T>
void check_conv_params(const Conv1D& conv, const Tensor<T>& w, const Tensor<T>& b) {
  const std::vector<std::size_t> wd{conv.c_out, conv.c_in, conv.kernel_h, conv.kernel_w};
  if (w.dims() != wd) throw StructuralError("conv weights do not match layer shape");
  if (b.size() != conv.c_out) throw StructuralError("conv bias length does not match c_out");
}

template <typename T>
void check_fc_params(std::size_t in_size, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rank() != 2) throw StructuralError("fc weights must be rank 2");
  if (w.dims()[1] != in_size) {
    throw StructuralError("fc input size " + std::to_string(in_size) + " does not match weights in_dim " +
                          std::to_string(w.dims()[1]));
  }
  if (b.size() != w.dims()[0]) throw StructuralError("fc bias length does not match out_dim");
}

}  // namespace detail

// Valid-mode cross-correlation along the kernel's non-unit axis, plus per-channel bias.
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Conv1D& conv, const Tensor<T>& weights, const Tensor<T>& bias,
                         OpTally* ops = nullptr) {
  detail::check_conv_params(conv, weights, bias);
  const detail::ConvGeometry g(conv, input.shape3());
  Tensor<T> out(g.out);
  const T* x = input.values().data();
  const T* w = weights.values().data();
  T* y = out.values().data();
  for (std::size_t co = 0; co < g.out.c; ++co) {
    for (std::size_t oh = 0; oh < g.out.h; ++oh) {
      for (std::size_t ow = 0; ow < g.out.w; ++ow) {
        T acc = T(0);
        for (std::size_t ci = 0; ci < conv.c_in; ++ci) {
          const T* xp = x + g.input_base(ci, oh, ow);
          const T* wp = w + (co * conv.c_in + ci) * g.kernel;
          for (std::size_t k = 0; k < g.kernel; ++k) acc += xp[k * g.kstep] * wp[k];
        }
        *y++ = acc + bias[co];
      }
    }
  }
  if (ops != nullptr) {
    ops->muls += g.out.size() * g.fan_in;
    ops->adds += g.out.size() * g.fan_in;
  }
  return out;
}

// Non-overlapping max over `pool.window` along the pooled axis; a trailing
// remainder shorter than the window is dropped. `argmax`, when given, receives
// the flat input index chosen for each output (first maximum wins).
template <typename T>
Tensor<T> maxpool1d_forward(const Tensor<T>& input, const MaxPool1D& pool, std::vector<std::size_t>* argmax = nullptr,
                            OpTally* ops = nullptr) {
  const Shape3 in = input.shape3();
  const Shape3 os = output_shape(Layer{pool}, in);
  Tensor<T> out(os);
  if (argmax != nullptr) argmax->assign(os.size(), 0);
  const bool along_width = pool.orientation == Axis::width;
  const std::size_t step = along_width ? 1 : in.w;
  std::size_t o = 0;
  for (std::size_t c = 0; c < os.c; ++c) {
    for (std::size_t h = 0; h < os.h; ++h) {
      for (std::size_t w = 0; w < os.w; ++w, ++o) {
        const std::size_t base =
            along_width ? (c * in.h + h) * in.w + w * pool.window : (c * in.h + h * pool.window) * in.w + w;
        std::size_t best = base;
        for (std::size_t k = 1; k < pool.window; ++k) {
          const std::size_t idx = base + k * step;
          if (input[idx] > input[best]) best = idx;
        }
        out[o] = input[best];
        if (argmax != nullptr) (*argmax)[o] = best;
      }
    }
  }
  if (ops != nullptr) ops->adds += os.size() * (pool.window - 1);
  return out;
}

template <typename T>
Tensor<T> maxpool1d_forward(const Tensor<T>& input, std::size_t window) {
  if (window < 1) throw StructuralError("max-pool window must be >= 1");
  return maxpool1d_forward(input, MaxPool1D{window, Axis::width});
}

template <typename T>
Tensor<T> relu(Tensor<T> input) {
  for (auto& v : input.values()) v = std::max(v, T(0));
  return input;
}

template <typename T>
T relu(T x) {
  return std::max(x, T(0));
}

// Affine map W x + b over the flattened input; output shape [out, 1, 1].
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, OpTally* ops = nullptr) {
  detail::check_fc_params(input.size(), weights, bias);
  const std::size_t out_dim = weights.dims()[0];
  const std::size_t in_dim = weights.dims()[1];
  Tensor<T> out(Shape3{out_dim, 1, 1});
  const T* x = input.values().data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const T* wr = weights.values().data() + o * in_dim;
    T acc = T(0);
    for (std::size_t i = 0; i < in_dim; ++i) acc += x[i] * wr[i];
    out[o] = acc + bias[o];
  }
  if (ops != nullptr) {
    ops->muls += out_dim * in_dim;
    ops->adds += out_dim * in_dim;
  }
  return out;
}

template <typename T>
Tensor<T> as_shape3(Tensor<T> t) {
  if (t.rank() == 3) return t;
  const std::size_t n = t.size();
  return Tensor<T>(std::vector<std::size_t>{n, 1, 1}, std::move(t.storage()));
}

template <typename T>
struct ForwardTrace {
  // activations[0] is the input, activations[i + 1] the output of layer i.
  std::vector<Tensor<T>> activations;
  // Per layer; non-empty only for max-pool layers.
  std::vector<std::vector<std::size_t>> pool_argmax;

  [[nodiscard]] const Tensor<T>& output() const { return activations.back(); }
};

template <typename T>
Tensor<T> apply_layer(const Layer& layer, std::size_t index, const Tensor<T>& in, const NetworkWeights<T>& weights,
                      std::vector<std::size_t>* argmax, OpCounter* counter) {
  OpTally* ops = counter != nullptr ? &counter->layer(index) : nullptr;
  return std::visit(overloaded{[&](const Conv1D& conv) {
                                 const auto& p = weights.at(index);
                                 return conv1d_forward(in, conv, p.weights, p.bias, ops);
                               },
                               [&](const MaxPool1D& pool) { return maxpool1d_forward(in, pool, argmax, ops); },
                               [&](const Relu&) {
                                 if (ops != nullptr) ops->compares += in.size();
                                 return relu(in);
                               },
                               [&](const FullyConnected&) {
                                 const auto& p = weights.at(index);
                                 return fc_forward(in, p.weights, p.bias, ops);
                               }},
                    layer);
}

template <typename T>
ForwardTrace<T> forward_trace(const NetworkSpec& spec, const NetworkWeights<T>& weights, const Tensor<T>& sample,
                              OpCounter* counter = nullptr) {
  if (sample.rank() != 3 || sample.shape3() != spec.input) {
    throw StructuralError("sample shape does not match network input " + to_string(spec.input));
  }
  ForwardTrace<T> trace;
  trace.activations.reserve(spec.layers.size() + 1);
  trace.activations.push_back(sample);
  trace.pool_argmax.resize(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    auto* argmax = std::holds_alternative<MaxPool1D>(spec.layers[i]) ? &trace.pool_argmax[i] : nullptr;
    trace.activations.push_back(apply_layer(spec.layers[i], i, trace.activations.back(), weights, argmax, counter));
  }
  return trace;
}

// Logits of the network for one sample (the final layer's output, flattened).
template <typename T>
std::vector<T> forward(const NetworkSpec& spec, const NetworkWeights<T>& weights, const Tensor<T>& sample,
                       OpCounter* counter = nullptr) {
  validate_weights(spec, weights);
  if (sample.rank() != 3 || sample.shape3() != spec.input) {
    throw StructuralError("sample shape does not match network input " + to_string(spec.input));
  }
  Tensor<T> x = sample;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) x = apply_layer(spec.layers[i], i, x, weights, nullptr, counter);
  return x.storage();
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

template <typename T>
std::size_t argmax(const std::vector<T>& values) {
  return argmax(std::span<const T>(values));
}

// ---------------------------------------------------------------------------
// Backpropagation

// Softmax cross-entropy of `logits` against class `target`; writes dL/dlogits.
template <typename T>
T softmax_cross_entropy(std::span<const T> logits, std::size_t target, std::span<T> grad) {
  const T peak = *std::max_element(logits.begin(), logits.end());
  T denom = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = std::exp(logits[i] - peak);
    denom += grad[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) grad[i] /= denom;
  const T loss = -std::log(std::max(grad[target], std::numeric_limits<T>::min()));
  grad[target] -= T(1);
  return loss;
}

// Sum over outputs of the logistic loss, target output labelled 1 and every
// other output 0; writes dL/dlogits. Each output becomes a detector whose
// logit is positive only for its own class, which is what a spike count can
// express (a neuron with negative drive stays silent).
template <typename T>
T one_vs_rest_logistic(std::span<const T> logits, std::size_t target, std::span<T> grad) {
  T loss = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T z = logits[i];
    const T y = i == target ? T(1) : T(0);
    // log(1 + exp(-|z|)) + max(z, 0) - y z, stable for large |z|
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, T(0)) - y * z;
    grad[i] = T(1) / (T(1) + std::exp(-z)) - y;
  }
  return loss;
}

enum class LossKind : std::uint8_t { softmax_cross_entropy, one_vs_rest_logistic };

template <typename T>
T output_loss(LossKind kind, std::span<const T> logits, std::size_t target, std::span<T> grad) {
  return kind == LossKind::softmax_cross_entropy ? softmax_cross_entropy<T>(logits, target, grad)
                                                 : one_vs_rest_logistic<T>(logits, target, grad);
}

// Accumulates dL/dparams for one sample into `grads` and returns the loss.
template <typename T>
T accumulate_gradient(const NetworkSpec& spec, const NetworkWeights<T>& weights, const Tensor<T>& sample,
                      std::size_t target, NetworkWeights<T>& grads,
                      LossKind loss_kind = LossKind::softmax_cross_entropy) {
  const auto trace = forward_trace(spec, weights, sample);
  const auto& logits = trace.output();
  if (target >= logits.size()) throw InputError("training target out of range");
  Tensor<T> delta(logits.dims());
  const T loss = output_loss<T>(loss_kind, logits.values(), target, delta.values());

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const Tensor<T>& in = trace.activations[li];
    Tensor<T> din(in.dims());
    std::visit(
        overloaded{
            [&](const Conv1D& conv) {
              const auto& p = weights.at(li);
              auto& gp = *grads.find(li);
              const detail::ConvGeometry g(conv, in.shape3());
              std::size_t o = 0;
              for (std::size_t co = 0; co < g.out.c; ++co) {
                for (std::size_t oh = 0; oh < g.out.h; ++oh) {
                  for (std::size_t ow = 0; ow < g.out.w; ++ow, ++o) {
                    const T d = delta[o];
                    if (d == T(0)) continue;
                    gp.bias[co] += d;
                    for (std::size_t ci = 0; ci < conv.c_in; ++ci) {
                      const std::size_t base = g.input_base(ci, oh, ow);
                      const std::size_t wbase = (co * conv.c_in + ci) * g.kernel;
                      for (std::size_t k = 0; k < g.kernel; ++k) {
                        const std::size_t xi = base + k * g.kstep;
                        gp.weights[wbase + k] += d * in[xi];
                        din[xi] += d * p.weights[wbase + k];
                      }
                    }
                  }
                }
              }
            },
            [&](const MaxPool1D&) {
              const auto& routes = trace.pool_argmax[li];
              for (std::size_t o = 0; o < routes.size(); ++o) din[routes[o]] += delta[o];
            },
            [&](const Relu&) {
              for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > T(0) ? delta[i] : T(0);
            },
            [&](const FullyConnected&) {
              const auto& p = weights.at(li);
              auto& gp = *grads.find(li);
              const std::size_t out_dim = p.weights.dims()[0];
              const std::size_t in_dim = p.weights.dims()[1];
              for (std::size_t o = 0; o < out_dim; ++o) {
                const T d = delta[o];
                gp.bias[o] += d;
                for (std::size_t i = 0; i < in_dim; ++i) {
                  gp.weights[o * in_dim + i] += d * in[i];
                  din[i] += d * p.weights[o * in_dim + i];
                }
              }
            }},
        spec.layers[li]);
    delta = std::move(din);
  }
  return loss;
}

template <typename T>
T sample_loss(const NetworkSpec& spec, const NetworkWeights<T>& weights, const Tensor<T>& sample, std::size_t target,
              LossKind loss_kind = LossKind::softmax_cross_entropy) {
  const auto logits = forward(spec, weights, sample);
  std::vector<T> grad(logits.size());
  return output_loss<T>(loss_kind, std::span<const T>(logits), target, std::span<T>(grad));
}

// ---------------------------------------------------------------------------
// Training

struct LabeledSample {
  Tensor<double> input;
  Label label = Label::interictal;
};

struct SgdHyper {
  double lr = 0.01;
  int epochs = 30;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  // When false, biases keep their initial values (zero unless `initial` says
  // otherwise). A bias-free network converts to IF neurons without per-layer
  // bias rescaling.
  bool train_bias = true;
  LossKind loss = LossKind::softmax_cross_entropy;
};

struct TrainResult {
  WeightContainer weights;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

// Plain mini-batch SGD, parameters in scalar type T. Batch order comes from a
// per-epoch seeded shuffle, so results depend only on (spec, data, hyper).
// `initial`, when given, replaces the seeded He initialisation.
template <typename T = float>
TrainResult train_sgd(const NetworkSpec& spec, std::span<const LabeledSample> dataset, const SgdHyper& hyper,
                      const NetworkWeights<T>* initial = nullptr,
                      const std::function<void(int, double)>& on_epoch = {}) {
  if (dataset.empty()) throw InputError("train_sgd: dataset is empty");
  bool has_p = false;
  bool has_i = false;
  for (const auto& s : dataset) (s.label == Label::preictal ? has_p : has_i) = true;
  if (!has_p || !has_i) throw InputError("train_sgd: dataset must contain both classes");
  if (hyper.batch == 0) throw ConfigError("train_sgd: batch must be >= 1");
  if (hyper.epochs < 0) throw ConfigError("train_sgd: epochs must be >= 0");
  if (output_shape(spec).size() != 2) throw StructuralError("train_sgd: network must have 2 outputs");

  NetworkWeights<T> weights = initial != nullptr ? *initial : init_weights<T>(spec, hyper.seed);
  validate_weights(spec, weights);

  std::vector<Tensor<T>> inputs;
  inputs.reserve(dataset.size());
  for (const auto& s : dataset) inputs.push_back(s.input.template cast<T>());

  std::vector<std::size_t> order(dataset.size());
  TrainResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(hyper.seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      const std::size_t end = std::min(order.size(), start + hyper.batch);
      auto grads = zero_weights<T>(spec);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = dataset[order[i]];
        epoch_loss += static_cast<double>(accumulate_gradient(spec, weights, inputs[order[i]], neuron_index(s.label), grads,
                                                                hyper.loss));
      }
      const T scale = static_cast<T>(hyper.lr / static_cast<double>(end - start));
      for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        auto& p = weights.layers[l];
        const auto& g = grads.layers[l];
        for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] -= scale * g.weights[k];
        if (!hyper.train_bias) continue;
        for (std::size_t k = 0; k < p.bias.size(); ++k) p.bias[k] -= scale * g.bias[k];
      }
    }
    epoch_loss /= static_cast<double>(dataset.size());
    if (!std::isfinite(epoch_loss)) throw DivergenceError("training loss became non-finite", epoch + 1);
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }
  result.weights = weights.template cast<float>();
  return result;
}

// Fraction of samples whose logit argmax equals the label.
inline double cnn_accuracy(const NetworkSpec& spec, const WeightContainer& weights,
                           std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto logits = forward(spec, weights, s.input.cast<float>());
    if (label_of_neuron(argmax<float>(logits)) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace spikecnn
