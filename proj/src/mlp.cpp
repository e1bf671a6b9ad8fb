#include "vartok/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace vartok::mlp {

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  w.reserve(weights.size() + 1);
  w.push_back(input_dim());
  for (const Mat& m : weights) w.push_back(static_cast<int>(m.rows()));
  return w;
}

void Mlp::validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    throw std::invalid_argument("mlp: empty or mismatched layer lists");
  }
  for (size_t i = 0; i < weights.size(); ++i) {
    if (biases[i].size() != weights[i].rows()) {
      throw std::invalid_argument("mlp: bias length does not match weight rows");
    }
    if (i > 0 && weights[i].cols() != weights[i - 1].rows()) {
      throw std::invalid_argument("mlp: layer widths do not chain");
    }
  }
}

Mlp make_mlp(const std::vector<int>& widths, std::mt19937& rng) {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("mlp: widths must be positive");
  }
  Mlp net;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    Mat w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = scale * gauss(rng);
    }
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vec::Zero(out));
  }
  return net;
}

Vec forward(const Mlp& net, const Vec& x) {
  MlpCache scratch;
  return forward_cached(net, x, scratch);
}

Vec forward_cached(const Mlp& net, const Vec& x, MlpCache& cache) {
  net.validate();
  if (x.size() != net.input_dim()) throw std::invalid_argument("mlp: input dimension mismatch");
  const int layers = net.num_layers();
  cache.inputs.assign(layers, Vec());
  cache.preacts.assign(layers, Vec());
  Vec h = x;
  for (int i = 0; i < layers; ++i) {
    cache.inputs[i] = h;
    Vec z = net.weights[i] * h + net.biases[i];
    cache.preacts[i] = z;
    h = (i + 1 < layers) ? z.cwiseMax(0.0).eval() : z;
  }
  return h;
}

void MlpGrad::set_zero() {
  for (Mat& m : weights) m.setZero();
  for (Vec& v : biases) v.setZero();
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
  for (size_t i = 0; i < weights.size(); ++i) {
    weights[i] += scale * other.weights[i];
    biases[i] += scale * other.biases[i];
  }
}

MlpGrad zero_grad_like(const Mlp& net) {
  MlpGrad g;
  for (size_t i = 0; i < net.weights.size(); ++i) {
    g.weights.push_back(Mat::Zero(net.weights[i].rows(), net.weights[i].cols()));
    g.biases.push_back(Vec::Zero(net.biases[i].size()));
  }
  return g;
}

Vec backward(const Mlp& net, const MlpCache& cache, const Vec& grad_out, MlpGrad& grad) {
  const int layers = net.num_layers();
  if (static_cast<int>(cache.inputs.size()) != layers) {
    throw std::invalid_argument("mlp: cache does not match network");
  }
  if (grad_out.size() != net.output_dim()) {
    throw std::invalid_argument("mlp: output gradient dimension mismatch");
  }
  Vec delta = grad_out;
  for (int i = layers - 1; i >= 0; --i) {
    if (i + 1 < layers) {
      // ReLU gate: zero where the pre-activation was non-positive.
      for (int k = 0; k < delta.size(); ++k) {
        if (cache.preacts[i][k] <= 0.0) delta[k] = 0.0;
      }
    }
    grad.weights[i] += delta * cache.inputs[i].transpose();
    grad.biases[i] += delta;
    if (i > 0) delta = (net.weights[i].transpose() * delta).eval();
  }
  return net.weights[0].transpose() * delta;
}

}  // namespace vartok::mlp
