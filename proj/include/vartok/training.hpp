#pragma once

// Training for the hyperbolic residual quantizer: the four-part objective,
// hand-written reverse-mode gradients, and Riemannian Adam.
//
// Gradient semantics across the non-differentiable codeword selection:
// the selection index is treated as a constant, and on the decoder
// accumulation path the gradient arriving at the quantized codeword's
// tangent image is rerouted to the residual's tangent image (the usual
// straight-through bridge, expressed through log/exp at the origin).  The
// codebook still learns through the quantization loss, the gate inputs,
// and the residual update, all of which are differentiated exactly.  The
// stop-gradient markers inside the quantization loss are honored exactly:
// its first term moves only codewords, its commitment term only the
// encoder side.
//
// Batch gradients are accumulated in fixed item order so a run is
// reproducible under a fixed seed.

#include "vartok/harq.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace vartok::training {

using Vec = Eigen::VectorXd;
using harq::Codebook;
using harq::ForwardTrace;
using harq::HarqConfig;
using harq::HarqModel;

struct LossWeights {
  double lambda_cost = 0.1;
  double lambda_len = 0.01;
  double beta_commit = 0.25;

  void validate() const;  // beta_commit > 0, lambdas >= 0
};

struct LossBreakdown {
  double recon = 0.0;
  double quant = 0.0;
  double cost = 0.0;
  double len = 0.0;
  double total = 0.0;
};

// Squared Euclidean reconstruction error.
double loss_recon(const Vec& x, const Vec& x_hat);

// Sum over layers of (1 + beta) * d(r_in, selected code)^2.  The two
// stop-gradient variants share this value and differ only in backward.
double loss_quant(const ForwardTrace& trace, const Codebook& cb, double beta_commit);

// Sum of cumulative gate masses.
double loss_cost(const ForwardTrace& trace);

// Binary cross-entropy between cumulative masses and a prefix-shaped
// 0/1 target of length K; masses are clamped to [1e-7, 1 - 1e-7].
double loss_len(const ForwardTrace& trace, const std::vector<std::uint8_t>& target_mask);

LossBreakdown combine_losses(double recon, double quant, double cost, double len,
                             const LossWeights& weights);

// Forward pass annotated with everything backward needs.  Values are
// bit-identical to harq::forward on the same model and input.  With
// pin_gates_open the gate network is bypassed and every gate reads 1
// (the plain residual-quantizer ablation).
struct TrainForward {
  ForwardTrace trace;
  mlp::MlpCache enc_cache;
  mlp::MlpCache dec_cache;
  std::vector<mlp::MlpCache> gate_caches;
  Vec enc_tangent;             // encoder output before exp map
  Vec z0_pre;                  // encoded point before safe-ball projection
  std::vector<Vec> res_in;     // residual entering each layer (res_in[0] = z0)
  std::vector<Vec> step_pre;   // residual after each layer, before projection
  std::vector<Vec> acc_pre;    // decoder accumulation before projection
  std::vector<Vec> acc;        // decoder accumulation after projection
  Vec dec_tangent;             // log0 of the final accumulation
  bool gates_pinned = false;
};

TrainForward forward_training(const Vec& x, const HarqModel& model, bool pin_gates_open = false);

// Gradient (or moment) container shaped exactly like a model's parameters.
struct ModelGrad {
  mlp::MlpGrad encoder;
  mlp::MlpGrad gate;
  mlp::MlpGrad decoder;
  std::vector<std::vector<Vec>> codebook;

  void set_zero();
  bool all_finite() const;
};

ModelGrad zero_grad_like(const HarqModel& model);

// Accumulates scale * d(total loss) / d(parameters) for one item into
// grads and returns the item's loss breakdown.
LossBreakdown backward_item(const Vec& x, const TrainForward& fwd, const HarqModel& model,
                            const std::vector<std::uint8_t>& target_mask,
                            const LossWeights& weights, double scale, ModelGrad& grads);

// Per-layer selection counts and a reservoir of residuals entering each
// layer, gathered while training so dead codes can be re-seeded.
struct EpochStats {
  std::vector<std::vector<long>> counts;     // [layer][code]
  std::vector<std::vector<Vec>> reservoir;   // [layer][<= capacity]
  std::vector<long> seen;                    // residuals observed per layer
  std::size_t capacity = 64;
  std::mt19937* rng = nullptr;

  void observe(int layer, int code, const Vec& res_in);
};

EpochStats make_epoch_stats(const HarqModel& model, std::size_t capacity, std::mt19937* rng);

// Mean-loss gradients over a batch (fixed item order).  Throws
// std::runtime_error naming the problem if any gradient is non-finite.
LossBreakdown backward_batch(const std::vector<Vec>& xs,
                             const std::vector<const std::vector<std::uint8_t>*>& target_masks,
                             const HarqModel& model, const LossWeights& weights,
                             bool pin_gates_open, ModelGrad& grads, EpochStats* stats);

// Forward-only mean losses over a dataset.
LossBreakdown evaluate(const std::vector<Vec>& xs,
                       const std::vector<std::vector<std::uint8_t>>& target_masks,
                       const HarqModel& model, const LossWeights& weights,
                       bool pin_gates_open = false);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Euclidean Adam moments for every parameter; codebook entries are flagged
// as manifold parameters at step time.
struct AdamState {
  ModelGrad first_moment;
  ModelGrad second_moment;
  long step = 0;
};

AdamState make_adam_state(const HarqModel& model);

// MLP weights take a standard Adam step.  Codebook vectors accumulate the
// same moments, then the normalized direction is rescaled by
// (1 - c * |w|^2)^2 / 4 and applied through the exponential map at w,
// followed by safe-ball projection.
void riemannian_adam_step(HarqModel& model, const ModelGrad& grads, AdamState& state,
                          const AdamConfig& config);

// Re-seeds every code with a zero selection count to a random reservoir
// residual (plus a tiny tangent jitter so simultaneous resets split)
// and zeroes its moments.  Returns the number of codes reset.
int reset_dead_codes(HarqModel& model, AdamState& state, const EpochStats& stats,
                     std::mt19937& rng);

// Layer 0: tangent-space k-means over the encoded points (20 Lloyd
// iterations).  Deeper layers: random residual samples propagated through
// the layers initialized so far.
void init_codebook(HarqModel& model, const std::vector<Vec>& features, std::mt19937& rng,
                   int kmeans_iters = 20);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 256;
  AdamConfig adam;
  LossWeights weights;
  std::uint64_t seed = 0;
  bool use_kmeans_init = true;
  bool reset_dead = true;
  bool pin_gates_open = false;

  void validate() const;
};

struct TrainResult {
  HarqModel model;
  std::vector<LossBreakdown> history;  // full-dataset evaluation after each epoch
};

// Trains a fresh model (He init + optional codebook init) on the feature
// set; target_masks are the per-item prefix targets for the length loss.
// Deterministic per seed.  Throws std::runtime_error naming the epoch and
// batch if the loss goes non-finite.
TrainResult train(const std::vector<Vec>& features,
                  const std::vector<std::vector<std::uint8_t>>& target_masks,
                  const HarqConfig& model_config, const TrainConfig& config);

// Same loop starting from a caller-supplied model (no re-initialization).
TrainResult train_from(HarqModel model, const std::vector<Vec>& features,
                       const std::vector<std::vector<std::uint8_t>>& target_masks,
                       const TrainConfig& config);

}  // namespace vartok::training
