#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "compcate/core/random.hpp"

namespace compcate::learner {

// Per-call buffers for a forward/backward pass. values[0] holds the input,
// values[l] the post-activation output of layer l.
struct Activations {
  std::vector<std::vector<double>> values;
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

// Layout of a fully connected ReLU network with a linear output layer. The
// network owns no parameters; callers pass a flat span laid out per layer as
// W (out x in, row-major) followed by b (out).
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<std::size_t> layer_sizes);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const { return parameter_count_; }
  std::size_t layer_count() const { return sizes_.size() - 1; }

  // Weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero.
  void initialize(std::span<double> params, Rng& rng) const;

  void forward(std::span<const double> params, std::span<const double> input,
               Activations& acts) const;

  // Accumulates parameter gradients into dparams and, when dinput is
  // non-empty, writes the input gradient.
  void backward(std::span<const double> params, Activations& acts, std::span<const double> dout,
                std::span<double> dparams, std::span<double> dinput) const;

 private:
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<std::size_t> sizes_{1, 1};
  std::vector<std::size_t> offsets_{0};
  std::size_t parameter_count_ = 2;
};

}  // namespace compcate::learner
