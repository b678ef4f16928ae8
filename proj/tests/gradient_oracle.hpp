#pragma once

// Independent scalar re-implementation of the regressor forward pass, used to
// check analytic gradients by central differences.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "compcate/learner/regressor.hpp"

namespace compcate::learner::testing {

inline double scalar_nll(double mean, double var, double y) {
  return 0.5 * std::log(2.0 * std::numbers::pi * var) + (y - mean) * (y - mean) / (2.0 * var);
}

struct OracleForward {
  double mean = 0.0;
  double variance = 0.0;
  std::vector<bool> active;  // ReLU pattern over every hidden unit
};

// Plain dense layers: per layer W (out x in, row-major) then b.
inline std::vector<double> dense_forward(const std::vector<double>& params, std::size_t& cursor,
                                         std::vector<double> x,
                                         const std::vector<std::size_t>& sizes,
                                         std::vector<bool>& active) {
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<double> y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = params[cursor + in * out + o];
      for (std::size_t i = 0; i < in; ++i) s += params[cursor + o * in + i] * x[i];
      y[o] = s;
    }
    cursor += in * out + out;
    if (l + 2 < sizes.size()) {
      for (double& v : y) {
        active.push_back(v > 0.0);
        v = std::max(v, 0.0);
      }
    }
    x = std::move(y);
  }
  return x;
}

inline OracleForward oracle_forward(const GaussianRegressor& model,
                                    const std::vector<double>& params,
                                    const std::vector<double>& input) {
  const auto& spec = model.spec();
  OracleForward out;
  std::vector<double> z(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    z[i] = (input[i] - model.input_shift()[i]) / model.input_scale()[i];
  }
  std::size_t cursor = 0;
  std::vector<double> net_in;
  if (spec.projected_inputs > 0) {
    std::vector<double> head(z.begin(), z.begin() + spec.projected_inputs);
    net_in = dense_forward(params, cursor, head, {spec.projected_inputs, spec.projection_dim},
                           out.active);
    net_in.insert(net_in.end(), z.begin() + spec.projected_inputs, z.end());
  } else {
    net_in = z;
  }
  std::vector<std::size_t> sizes{net_in.size()};
  sizes.insert(sizes.end(), spec.hidden.begin(), spec.hidden.end());
  sizes.push_back(1);
  const double raw_mean = dense_forward(params, cursor, net_in, sizes, out.active)[0];
  out.mean = model.output_shift() + model.output_scale() * raw_mean;
  if (spec.variance_head) {
    const double v = dense_forward(params, cursor, net_in, sizes, out.active)[0];
    const double s = model.output_scale();
    out.variance = s * s * std::log1p(std::exp(v)) + kVarianceFloor;
  } else {
    out.variance = kVarianceFloor;
  }
  return out;
}

struct OracleResult {
  double max_relative_error = 0.0;
  double max_forward_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Random architectures, inputs and targets; compares backprop_gradients with
// central differences of the oracle loss, skipping parameters whose
// perturbation flips a ReLU.
inline OracleResult run_gradient_oracle(int cases, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> small(1, 4);
  OracleResult result;
  constexpr double h = 1e-4;
  for (int c = 0; c < cases; ++c) {
    RegressorSpec spec;
    spec.input_size = small(rng) + 1;
    for (int l = std::uniform_int_distribution<int>(0, 2)(rng); l > 0; --l) {
      spec.hidden.push_back(small(rng) + 1);
    }
    spec.variance_head = c % 3 != 0;
    if (c % 4 == 1) {
      spec.projected_inputs = std::min<std::size_t>(2, spec.input_size);
      spec.projection_dim = small(rng);
    }
    const LossKind loss = spec.variance_head && c % 2 == 0 ? LossKind::kNll : LossKind::kMse;
    GaussianRegressor model(spec);
    model.initialize(seed + c);
    std::vector<double> shift(spec.input_size), scale(spec.input_size);
    for (std::size_t i = 0; i < spec.input_size; ++i) {
      shift[i] = normal(rng);
      scale[i] = 0.5 + std::abs(normal(rng));
    }
    model.set_input_normalization(shift, scale);
    model.set_output_normalization(normal(rng), 0.5 + std::abs(normal(rng)));

    std::vector<double> input(spec.input_size);
    for (double& v : input) v = normal(rng);
    const double target = model.output_shift() + normal(rng);

    std::vector<double> params(model.parameters().begin(), model.parameters().end());
    const auto base = oracle_forward(model, params, input);
    const auto pred = model.predict(input);
    result.max_forward_error = std::max(
        {result.max_forward_error, std::abs(base.mean - pred.mean),
         std::abs(base.variance - pred.variance)});

    auto loss_at = [&](const OracleForward& f) {
      return loss == LossKind::kNll ? scalar_nll(f.mean, f.variance, target)
                                    : (f.mean - target) * (f.mean - target);
    };
    const auto analytic = backprop_gradients(model, input, std::vector<double>{target}, loss);
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto plus = params, minus = params;
      plus[p] += h;
      minus[p] -= h;
      const auto fp = oracle_forward(model, plus, input);
      const auto fm = oracle_forward(model, minus, input);
      if (fp.active != base.active || fm.active != base.active) {
        ++result.skipped;
        continue;
      }
      const double numeric = (loss_at(fp) - loss_at(fm)) / (2.0 * h);
      const double a = analytic[p];
      const double denom = std::max(std::abs(a), std::abs(numeric));
      const double rel = denom < 1e-7 ? 0.0 : std::abs(a - numeric) / denom;
      result.max_relative_error = std::max(result.max_relative_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace compcate::learner::testing
