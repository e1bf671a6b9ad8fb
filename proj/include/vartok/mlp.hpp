#pragma once

// Minimal dense multi-layer perceptron with ReLU hidden activations.
// Forward passes can record the per-layer inputs and pre-activations needed
// to backpropagate; gradients are accumulated into a mirror structure so a
// batch can sum contributions before an optimizer step.

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace vartok::mlp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Hidden layers apply ReLU; the output layer is linear.  Callers that need
// a probability (the quantizer's gate) apply the sigmoid themselves.
struct Mlp {
  std::vector<Mat> weights;  // weights[i] is (out_i x in_i)
  std::vector<Vec> biases;   // biases[i] is out_i

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }

  // Layer widths including input and output, e.g. {64, 128, 32}.
  std::vector<int> widths() const;

  // Throws std::invalid_argument on inconsistent shapes.
  void validate() const;
};

// He-initialized MLP for the given widths (at least {in, out}).
Mlp make_mlp(const std::vector<int>& widths, std::mt19937& rng);

// Plain forward pass.  Throws std::invalid_argument on dimension mismatch.
Vec forward(const Mlp& net, const Vec& x);

// Per-layer values recorded by forward_cached, consumed by backward.
struct MlpCache {
  std::vector<Vec> inputs;   // input to each layer (post-activation of previous)
  std::vector<Vec> preacts;  // W x + b per layer
};

Vec forward_cached(const Mlp& net, const Vec& x, MlpCache& cache);

// Gradient accumulator shaped like an Mlp.
struct MlpGrad {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  void set_zero();
  void add_scaled(const MlpGrad& other, double scale);
};

MlpGrad zero_grad_like(const Mlp& net);

// Backpropagates grad_out (d loss / d output) through the cached pass,
// accumulating parameter gradients into grad and returning d loss / d input.
Vec backward(const Mlp& net, const MlpCache& cache, const Vec& grad_out, MlpGrad& grad);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace vartok::mlp
