#include "compcate/learner/dense_net.hpp"

#include <algorithm>
#include <cmath>

#include "compcate/core/error.hpp"

namespace compcate::learner {

DenseNet::DenseNet(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ConfigError("a network needs at least input and output sizes");
  if (std::find(sizes_.begin(), sizes_.end(), 0u) != sizes_.end()) {
    throw ConfigError("layer sizes must be positive");
  }
  offsets_.clear();
  parameter_count_ = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(parameter_count_);
    parameter_count_ += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
}

void DenseNet::initialize(std::span<double> params, Rng& rng) const {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    double* p = params.data() + layer_offset(l);
    for (std::size_t i = 0; i < in * out; ++i) p[i] = dist(rng);
    std::fill(p + in * out, p + in * out + out, 0.0);
  }
}

void DenseNet::forward(std::span<const double> params, std::span<const double> input,
                       Activations& acts) const {
  const std::size_t layers = layer_count();
  acts.values.resize(layers + 1);
  acts.values[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + layer_offset(l);
    const double* b = w + in * out;
    const std::vector<double>& x = acts.values[l];
    std::vector<double>& y = acts.values[l + 1];
    y.resize(out);
    const bool hidden = l + 1 < layers;
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double z = b[o];
      for (std::size_t i = 0; i < in; ++i) z += row[i] * x[i];
      y[o] = hidden ? std::max(z, 0.0) : z;
    }
  }
}

void DenseNet::backward(std::span<const double> params, Activations& acts,
                        std::span<const double> dout, std::span<double> dparams,
                        std::span<double> dinput) const {
  const std::size_t layers = layer_count();
  acts.delta.assign(dout.begin(), dout.end());
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params.data() + layer_offset(l);
    double* dw = dparams.data() + layer_offset(l);
    double* db = dw + in * out;
    const std::vector<double>& x = acts.values[l];
    const bool need_prev = l > 0 || !dinput.empty();
    if (need_prev) acts.delta_prev.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = acts.delta[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      double* drow = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) drow[i] += d * x[i];
      db[o] += d;
      if (need_prev) {
        for (std::size_t i = 0; i < in; ++i) acts.delta_prev[i] += row[i] * d;
      }
    }
    if (l > 0) {
      // ReLU derivative on the hidden layer feeding this one.
      for (std::size_t i = 0; i < in; ++i) {
        if (x[i] <= 0.0) acts.delta_prev[i] = 0.0;
      }
      acts.delta.swap(acts.delta_prev);
    } else if (!dinput.empty()) {
      std::copy(acts.delta_prev.begin(), acts.delta_prev.end(), dinput.begin());
    }
  }
}

}  // namespace compcate::learner
