// SPDX-License-Identifier: Apache-2.0
//
// Temporal blocks and the assembled network: a stack of residual blocks
// of two dilated weight-normalized convolutions, whose output features
// are concatenated with the raw input trace and mapped to the target by
// a 1x1 linear head.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seistcn/nn.hpp"
#include "seistcn/tensor.hpp"

namespace seistcn {

struct TcnConfig {
  int n_blocks = 6;
  int kernel = 5;
  double dropout_p = 0.2;
  int input_channels = 1;
  std::vector<int> channels;   // per-block output width; defaults to all 8
  std::vector<int> dilations;  // defaults to 1, 2, 4, ... (doubling)
  Padding padding = Padding::kSymmetric;

  // Fills channels/dilations from the defaults where they were left empty.
  void finalize() {
    if (channels.empty()) channels.assign(static_cast<std::size_t>(n_blocks), 8);
    if (dilations.empty()) {
      dilations.resize(static_cast<std::size_t>(n_blocks));
      int d = 1;
      for (auto& v : dilations) {
        v = d;
        d *= 2;
      }
    }
    validate();
  }

  void validate() const {
    if (n_blocks < 1) throw std::invalid_argument("tcn: n_blocks must be >= 1");
    if (kernel < 1) throw std::invalid_argument("tcn: kernel must be >= 1");
    if (input_channels < 1)
      throw std::invalid_argument("tcn: input_channels must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw std::invalid_argument("tcn: dropout_p must be in [0, 1)");
    if (channels.size() != static_cast<std::size_t>(n_blocks) ||
        dilations.size() != static_cast<std::size_t>(n_blocks))
      throw std::invalid_argument(
          "tcn: channels/dilations must have one entry per block");
    for (int c : channels)
      if (c < 1) throw std::invalid_argument("tcn: channel width must be >= 1");
    for (int d : dilations)
      if (d < 1) throw std::invalid_argument("tcn: dilation must be >= 1");
  }
};

// One residual unit: conv -> relu -> dropout, twice, plus a skip path
// that is the identity when widths match and a 1x1 convolution otherwise.
struct BlockParams {
  ConvParams conv1;
  ConvParams conv2;
  std::optional<ConvParams> skip;
};

struct ModelParams {
  std::vector<BlockParams> blocks;
  ConvParams head;  // 1x1, (last_width + input_channels) -> input-channel-many outputs
};

struct BlockGrads {
  ConvGrads conv1;
  ConvGrads conv2;
  std::optional<ConvGrads> skip;
};

struct ModelGrads {
  std::vector<BlockGrads> blocks;
  ConvGrads head;
};

namespace detail {

inline ConvParams init_conv(std::size_t cout, std::size_t cin, std::size_t k,
                            int dilation, Rng& rng) {
  ConvParams p;
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k));
  p.v = randn({cout, cin, k}, rng, 0.0, stddev);
  p.g = Tensor({cout});
  p.bias = Tensor({cout});
  p.dilation = dilation;
  // g starts at |v[c]| so the initial effective weight equals v.
  const std::size_t slice = cin * k;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* base = p.v.data() + co * slice;
    double sq = 0.0;
    for (std::size_t i = 0; i < slice; ++i) sq += base[i] * base[i];
    p.g[co] = std::sqrt(sq);
  }
  return p;
}

inline std::size_t conv_param_count(std::size_t cout, std::size_t cin,
                                    std::size_t k) {
  return cout * cin * k + 2 * cout;  // v + g + bias
}

}  // namespace detail

inline ModelParams init_params(const TcnConfig& config, Rng& rng) {
  config.validate();
  ModelParams params;
  std::size_t cin = static_cast<std::size_t>(config.input_channels);
  const std::size_t k = static_cast<std::size_t>(config.kernel);
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::size_t cout = static_cast<std::size_t>(config.channels[b]);
    const int d = config.dilations[b];
    BlockParams block;
    block.conv1 = detail::init_conv(cout, cin, k, d, rng);
    block.conv2 = detail::init_conv(cout, cout, k, d, rng);
    if (cin != cout) block.skip = detail::init_conv(cout, cin, 1, 1, rng);
    params.blocks.push_back(std::move(block));
    cin = cout;
  }
  params.head = detail::init_conv(
      static_cast<std::size_t>(config.input_channels),
      cin + static_cast<std::size_t>(config.input_channels), 1, 1, rng);
  return params;
}

inline std::size_t param_count(const TcnConfig& config) {
  config.validate();
  std::size_t total = 0;
  std::size_t cin = static_cast<std::size_t>(config.input_channels);
  const std::size_t k = static_cast<std::size_t>(config.kernel);
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::size_t cout = static_cast<std::size_t>(config.channels[b]);
    total += detail::conv_param_count(cout, cin, k);
    total += detail::conv_param_count(cout, cout, k);
    if (cin != cout) total += detail::conv_param_count(cout, cin, 1);
    cin = cout;
  }
  total += detail::conv_param_count(
      static_cast<std::size_t>(config.input_channels),
      cin + static_cast<std::size_t>(config.input_channels), 1);
  return total;
}

// Number of input samples contributing to one output sample:
// 1 + 2*(K-1) * sum of dilations, two convolutions per block. The 1x1
// skip and head convolutions do not widen it.
inline int receptive_field(const TcnConfig& config) {
  config.validate();
  long span = 0;
  for (int d : config.dilations)
    span += 2L * (config.kernel - 1) * d;
  return static_cast<int>(1 + span);
}

// Parameter traversal in checkpoint order: per block conv1, conv2, then
// the skip if present; the head last. Within a conv: v, g, bias.

namespace detail {

template <class ConvT, class Fn>
void visit_conv(ConvT& c, Fn&& fn) {
  fn(c.v);
  fn(c.g);
  fn(c.bias);
}

template <class ModelT, class Fn>
void visit_tensors(ModelT& m, Fn&& fn) {
  for (auto& block : m.blocks) {
    visit_conv(block.conv1, fn);
    visit_conv(block.conv2, fn);
    if (block.skip) visit_conv(*block.skip, fn);
  }
  visit_conv(m.head, fn);
}

}  // namespace detail

inline std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> out;
  detail::visit_tensors(params, [&](const Tensor& t) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  });
  return out;
}

inline std::vector<double> flatten(const ModelGrads& grads) {
  std::vector<double> out;
  detail::visit_tensors(grads, [&](const Tensor& t) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  });
  return out;
}

inline void unflatten(std::span<const double> theta, ModelParams& params) {
  std::size_t pos = 0;
  detail::visit_tensors(params, [&](Tensor& t) {
    if (pos + t.size() > theta.size())
      throw std::invalid_argument("unflatten: parameter vector too short");
    std::copy(theta.begin() + pos, theta.begin() + pos + t.size(), t.data());
    pos += t.size();
  });
  if (pos != theta.size())
    throw std::invalid_argument("unflatten: parameter vector too long");
}

inline ModelGrads zero_grads(const ModelParams& params) {
  ModelGrads grads;
  auto zero_conv = [](const ConvParams& c) {
    return ConvGrads{Tensor(c.v.shape()), Tensor(c.g.shape()),
                     Tensor(c.bias.shape())};
  };
  for (const auto& block : params.blocks) {
    BlockGrads bg;
    bg.conv1 = zero_conv(block.conv1);
    bg.conv2 = zero_conv(block.conv2);
    if (block.skip) bg.skip = zero_conv(*block.skip);
    grads.blocks.push_back(std::move(bg));
  }
  grads.head = zero_conv(params.head);
  return grads;
}

inline void accumulate(ModelGrads& acc, const ModelGrads& delta, double scale) {
  auto add = [scale](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  auto add_conv = [&](ConvGrads& dst, const ConvGrads& src) {
    add(dst.v, src.v);
    add(dst.g, src.g);
    add(dst.bias, src.bias);
  };
  if (acc.blocks.size() != delta.blocks.size())
    throw std::invalid_argument("accumulate: block count mismatch");
  for (std::size_t b = 0; b < acc.blocks.size(); ++b) {
    add_conv(acc.blocks[b].conv1, delta.blocks[b].conv1);
    add_conv(acc.blocks[b].conv2, delta.blocks[b].conv2);
    if (acc.blocks[b].skip.has_value() != delta.blocks[b].skip.has_value())
      throw std::invalid_argument("accumulate: skip presence mismatch");
    if (acc.blocks[b].skip) add_conv(*acc.blocks[b].skip, *delta.blocks[b].skip);
  }
  add_conv(acc.head, delta.head);
}

// Forward activations kept for the backward pass.
struct BlockActs {
  Tensor input;
  Tensor conv1_out;
  Tensor drop1_out;
  Tensor drop1_mask;
  Tensor conv2_out;
  Tensor drop2_mask;
  Tensor sum_out;  // main + skip, before the final relu
};

struct ModelActs {
  std::vector<BlockActs> blocks;
  Tensor concat_out;  // features with the raw trace appended
};

inline Tensor temporal_block_forward(const Tensor& input,
                                     const BlockParams& block,
                                     double dropout_p, Rng* rng, bool training,
                                     Padding padding,
                                     BlockActs* acts = nullptr) {
  if (training && dropout_p > 0.0 && rng == nullptr)
    throw std::invalid_argument("block: training dropout needs an rng");
  Rng unused(0);
  Rng& r = rng ? *rng : unused;

  Tensor conv1_out = conv1d_forward(input, block.conv1, padding);
  Tensor relu1 = relu(conv1_out);
  DropoutResult drop1 = dropout(relu1, dropout_p, r, training);
  Tensor conv2_out = conv1d_forward(drop1.output, block.conv2, padding);
  Tensor relu2 = relu(conv2_out);
  DropoutResult drop2 = dropout(relu2, dropout_p, r, training);

  Tensor sum = block.skip
                   ? conv1d_forward(input, *block.skip, padding)
                   : input;
  if (!sum.same_shape(drop2.output))
    throw std::invalid_argument("block: channel mismatch on the skip path");
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += drop2.output[i];
  Tensor out = relu(sum);

  if (acts) {
    acts->input = input;
    acts->conv1_out = std::move(conv1_out);
    acts->drop1_out = drop1.output;
    acts->drop1_mask = std::move(drop1.mask);
    acts->conv2_out = std::move(conv2_out);
    acts->drop2_mask = std::move(drop2.mask);
    acts->sum_out = std::move(sum);
  }
  return out;
}

// dL/d(block input) from dL/d(block output), accumulating parameter grads.
inline Tensor temporal_block_backward(const BlockActs& acts,
                                      const BlockParams& block,
                                      Padding padding, const Tensor& upstream,
                                      BlockGrads* grads) {
  Tensor d_sum = relu_backward(acts.sum_out, upstream);

  Tensor d_input;
  if (block.skip) {
    ConvBackward skip_back =
        conv1d_backward(acts.input, *block.skip, padding, d_sum);
    d_input = std::move(skip_back.input_grad);
    if (grads) grads->skip = std::move(skip_back.grads);
  } else {
    d_input = d_sum;
  }

  Tensor d_relu2 = dropout_backward(acts.drop2_mask, d_sum);
  Tensor d_conv2 = relu_backward(acts.conv2_out, d_relu2);
  ConvBackward back2 =
      conv1d_backward(acts.drop1_out, block.conv2, padding, d_conv2);
  if (grads) grads->conv2 = std::move(back2.grads);

  Tensor d_relu1 = dropout_backward(acts.drop1_mask, back2.input_grad);
  Tensor d_conv1 = relu_backward(acts.conv1_out, d_relu1);
  ConvBackward back1 =
      conv1d_backward(acts.input, block.conv1, padding, d_conv1);
  if (grads) grads->conv1 = std::move(back1.grads);

  for (std::size_t i = 0; i < d_input.size(); ++i)
    d_input[i] += back1.input_grad[i];
  return d_input;
}

// Full forward pass: blocks in sequence, features concatenated with the
// raw input, then the 1x1 head. Output has the input's shape.
inline Tensor model_forward(const Tensor& input, const ModelParams& params,
                            const TcnConfig& config, Rng* rng, bool training,
                            ModelActs* acts = nullptr) {
  config.validate();
  if (input.rank() != 2 ||
      input.extent(0) != static_cast<std::size_t>(config.input_channels))
    throw std::invalid_argument("model: input must be [" +
                                std::to_string(config.input_channels) +
                                ", L]");
  if (params.blocks.size() != static_cast<std::size_t>(config.n_blocks))
    throw std::invalid_argument("model: config/params block count mismatch");

  if (acts) acts->blocks.resize(params.blocks.size());
  Tensor features = input;
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    features = temporal_block_forward(features, params.blocks[b],
                                      config.dropout_p, rng, training,
                                      config.padding,
                                      acts ? &acts->blocks[b] : nullptr);
  }
  Tensor concat = concat_channels(features, input);
  Tensor pred = conv1d_forward(concat, params.head, config.padding);
  if (acts) acts->concat_out = std::move(concat);
  return pred;
}

// Inference-mode convenience: deterministic, no rng required.
inline Tensor model_forward(const Tensor& input, const ModelParams& params,
                            const TcnConfig& config) {
  return model_forward(input, params, config, nullptr, /*training=*/false);
}

// Backward through the whole model. `upstream` is dL/d(prediction);
// returns parameter gradients and optionally dL/d(input trace).
inline ModelGrads model_backward(const ModelActs& acts,
                                 const ModelParams& params,
                                 const TcnConfig& config,
                                 const Tensor& upstream,
                                 Tensor* input_grad = nullptr) {
  ModelGrads grads;
  grads.blocks.resize(params.blocks.size());

  ConvBackward head_back =
      conv1d_backward(acts.concat_out, params.head, config.padding, upstream);
  grads.head = std::move(head_back.grads);

  const std::size_t c_in = static_cast<std::size_t>(config.input_channels);
  const std::size_t c_features = acts.concat_out.extent(0) - c_in;
  auto [d_features, d_direct] =
      concat_channels_backward(c_features, c_in, head_back.input_grad);

  Tensor d = std::move(d_features);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    d = temporal_block_backward(acts.blocks[b], params.blocks[b],
                                config.padding, d, &grads.blocks[b]);
  }

  if (input_grad) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += d_direct[i];
    *input_grad = std::move(d);
  }
  return grads;
}

}  // namespace seistcn
