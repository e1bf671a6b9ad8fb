#pragma once

// Hyperbolic residual quantizer forward pass.
//
// An item's feature vector is encoded to a point in the Poincare ball and
// peeled layer by layer: each layer picks the nearest codeword, a gate
// decides how much of the remaining budget that layer deserves, and the
// residual is what the codeword failed to explain.  The decoder walks the
// chosen codewords back up, damped by the cumulative gate mass, and maps
// the result to feature space.  Cumulative gate masses double as soft
// token-length indicators: thresholding them yields a discrete code length.

#include "vartok/geometry.hpp"
#include "vartok/mlp.hpp"

#include <Eigen/Core>

#include <random>
#include <vector>

namespace vartok::harq {

using Vec = Eigen::VectorXd;
using mlp::Mlp;

// Per-layer codeword table.  All codewords live strictly inside the ball
// for the configured curvature.
struct Codebook {
  std::vector<std::vector<Vec>> layers;  // layers[l][m], each of latent dim
  double curvature = 1.0;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int codes_per_layer() const { return layers.empty() ? 0 : static_cast<int>(layers[0].size()); }
  int latent_dim() const {
    return (layers.empty() || layers[0].empty()) ? 0 : static_cast<int>(layers[0][0].size());
  }

  // Throws std::invalid_argument unless there is at least one layer, at
  // least two codewords per layer, every codeword has the same dimension,
  // and every codeword lies inside the safe ball.
  void validate() const;
};

struct HarqConfig {
  int feature_dim = 64;
  int latent_dim = 32;
  int num_layers = 10;       // maximum code length K
  int codes_per_layer = 256; // vocabulary M per layer
  double curvature = 1.0;
  double length_threshold = 0.5;
  int encoder_hidden = 128;
  int gate_hidden = 64;
  int decoder_hidden = 128;

  void validate() const;
};

struct HarqModel {
  HarqConfig config;
  Mlp encoder;  // feature_dim -> encoder_hidden -> latent_dim
  Mlp gate;     // 2*latent_dim -> gate_hidden -> 1 (logit)
  Mlp decoder;  // latent_dim -> decoder_hidden -> feature_dim
  Codebook codebook;

  void validate() const;
};

// Fresh model with He-initialized MLPs and small random codewords.
HarqModel make_model(const HarqConfig& config, uint64_t seed);

// Everything the forward pass committed to, layer by layer.
struct ForwardTrace {
  Vec z0;                      // encoded point in the ball
  std::vector<int> indices;    // chosen codeword per layer
  std::vector<Vec> residuals;  // residual after each layer (in the ball)
  std::vector<double> gates;   // gate probability per layer
  std::vector<double> masks;   // cumulative product of gates
  Vec z_decoded;               // accumulated decoder point in the ball
  Vec reconstruction;          // decoded feature vector
};

// Feature vector -> point in the ball (safe-ball projected).
Vec encode(const Vec& features, const Mlp& encoder, double curvature);

// Index of the codeword hyperbolically nearest to r; ties break toward the
// lowest index.
int nearest_code(const Vec& r, const std::vector<Vec>& layer_codes, double curvature);

// Residual left after explaining r_prev with the codeword e_sel.
Vec residual_step(const Vec& r_prev, const Vec& e_sel, double curvature);

// Soft keep probability for a layer, from the tangent images of the
// incoming residual and the selected codeword.
double gate_probability(const Vec& r_prev, const Vec& e_sel, const Mlp& gate, double curvature);

ForwardTrace forward(const Vec& features, const HarqModel& model);

// Longest prefix of layers whose cumulative mask clears the threshold.
// Every item keeps at least one token.
int discretize_length(const std::vector<double>& masks, double threshold);
int discretize_length(const ForwardTrace& trace, double threshold);

}  // namespace vartok::harq
