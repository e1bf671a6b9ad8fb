#include "vartok/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace vartok::training {

namespace geo = vartok::geometry;

namespace {

constexpr double kProbClamp = 1e-7;

double clamp_prob(double m) { return std::min(std::max(m, kProbClamp), 1.0 - kProbClamp); }

void check_prefix_mask(const std::vector<std::uint8_t>& mask, int num_layers) {
  if (static_cast<int>(mask.size()) != num_layers) {
    throw std::invalid_argument("length target: wrong length");
  }
  bool seen_zero = false;
  for (std::uint8_t t : mask) {
    if (t > 1) throw std::invalid_argument("length target: entries must be 0 or 1");
    if (t == 1 && seen_zero) throw std::invalid_argument("length target: must be prefix-shaped");
    if (t == 0) seen_zero = true;
  }
}

const Vec& selected_code(const Codebook& cb, const ForwardTrace& trace, int l) {
  return cb.layers[l][trace.indices[l]];
}

}  // namespace

void LossWeights::validate() const {
  if (!(beta_commit > 0.0)) throw std::invalid_argument("loss weights: commitment beta must be positive");
  if (lambda_cost < 0.0 || lambda_len < 0.0) {
    throw std::invalid_argument("loss weights: lambdas must be nonnegative");
  }
}

double loss_recon(const Vec& x, const Vec& x_hat) {
  if (x.size() != x_hat.size()) throw std::invalid_argument("recon loss: dimension mismatch");
  return (x - x_hat).squaredNorm();
}

double loss_quant(const ForwardTrace& trace, const Codebook& cb, double beta_commit) {
  if (!(beta_commit > 0.0)) throw std::invalid_argument("quant loss: commitment beta must be positive");
  const int K = static_cast<int>(trace.indices.size());
  if (cb.num_layers() != K) throw std::invalid_argument("quant loss: trace and codebook disagree on layers");
  const double c = cb.curvature;
  double sum = 0.0;
  for (int l = 0; l < K; ++l) {
    const Vec& r_in = (l == 0) ? trace.z0 : trace.residuals[l - 1];
    sum += geo::hyp_distance_sq(r_in, selected_code(cb, trace, l), c);
  }
  return (1.0 + beta_commit) * sum;
}

double loss_cost(const ForwardTrace& trace) {
  double sum = 0.0;
  for (double m : trace.masks) sum += m;
  return sum;
}

double loss_len(const ForwardTrace& trace, const std::vector<std::uint8_t>& target_mask) {
  const int K = static_cast<int>(trace.masks.size());
  check_prefix_mask(target_mask, K);
  double sum = 0.0;
  for (int l = 0; l < K; ++l) {
    const double m = clamp_prob(trace.masks[l]);
    sum -= target_mask[l] ? std::log(m) : std::log1p(-m);
  }
  return sum;
}

LossBreakdown combine_losses(double recon, double quant, double cost, double len,
                             const LossWeights& weights) {
  weights.validate();
  LossBreakdown b;
  b.recon = recon;
  b.quant = quant;
  b.cost = cost;
  b.len = len;
  b.total = recon + quant + weights.lambda_cost * cost + weights.lambda_len * len;
  return b;
}

TrainForward forward_training(const Vec& x, const HarqModel& model, bool pin_gates_open) {
  const double c = model.config.curvature;
  const int K = model.codebook.num_layers();
  if (K < 1) throw std::invalid_argument("forward: codebook has no layers");
  if (!x.allFinite()) throw std::invalid_argument("forward: non-finite features");

  TrainForward f;
  f.gates_pinned = pin_gates_open;
  f.enc_tangent = mlp::forward_cached(model.encoder, x, f.enc_cache);
  f.z0_pre = geo::exp_map_origin(f.enc_tangent, c);
  f.trace.z0 = geo::project_to_safe_ball(f.z0_pre, c);

  f.res_in.reserve(K);
  f.step_pre.reserve(K);
  f.acc_pre.reserve(K);
  f.acc.reserve(K);
  if (!pin_gates_open) f.gate_caches.resize(K);

  Vec r = f.trace.z0;
  Vec acc = Vec::Zero(r.size());
  double mask = 1.0;
  for (int l = 0; l < K; ++l) {
    f.res_in.push_back(r);
    const auto& layer = model.codebook.layers[l];
    const int idx = harq::nearest_code(r, layer, c);
    const Vec& e = layer[idx];

    double alpha = 1.0;
    if (!pin_gates_open) {
      const Vec u = geo::log_map_origin(r, c);
      const Vec v = geo::log_map_origin(e, c);
      Vec gate_in(u.size() + v.size());
      gate_in << u, v;
      const Vec logit = mlp::forward_cached(model.gate, gate_in, f.gate_caches[l]);
      alpha = mlp::sigmoid(logit[0]);
    }
    mask *= alpha;

    const Vec scaled = geo::hyp_scale(mask, e, c);
    const Vec acc_pre = geo::mobius_add(acc, scaled, c);
    acc = geo::project_to_safe_ball(acc_pre, c);
    const Vec step_pre = geo::mobius_add(geo::mobius_neg(e), r, c);
    r = geo::project_to_safe_ball(step_pre, c);

    f.acc_pre.push_back(acc_pre);
    f.acc.push_back(acc);
    f.step_pre.push_back(step_pre);
    f.trace.indices.push_back(idx);
    f.trace.gates.push_back(alpha);
    f.trace.masks.push_back(mask);
    f.trace.residuals.push_back(r);
  }

  f.dec_tangent = geo::log_map_origin(acc, c);
  f.trace.z_decoded = acc;
  f.trace.reconstruction = mlp::forward_cached(model.decoder, f.dec_tangent, f.dec_cache);
  return f;
}

void ModelGrad::set_zero() {
  encoder.set_zero();
  gate.set_zero();
  decoder.set_zero();
  for (auto& layer : codebook) {
    for (Vec& g : layer) g.setZero();
  }
}

bool ModelGrad::all_finite() const {
  const auto mlp_ok = [](const mlp::MlpGrad& g) {
    for (const auto& w : g.weights) {
      if (!w.allFinite()) return false;
    }
    for (const auto& b : g.biases) {
      if (!b.allFinite()) return false;
    }
    return true;
  };
  if (!mlp_ok(encoder) || !mlp_ok(gate) || !mlp_ok(decoder)) return false;
  for (const auto& layer : codebook) {
    for (const Vec& g : layer) {
      if (!g.allFinite()) return false;
    }
  }
  return true;
}

ModelGrad zero_grad_like(const HarqModel& model) {
  ModelGrad g;
  g.encoder = mlp::zero_grad_like(model.encoder);
  g.gate = mlp::zero_grad_like(model.gate);
  g.decoder = mlp::zero_grad_like(model.decoder);
  g.codebook.resize(model.codebook.num_layers());
  for (int l = 0; l < model.codebook.num_layers(); ++l) {
    g.codebook[l].assign(model.codebook.layers[l].size(),
                         Vec::Zero(model.codebook.latent_dim()));
  }
  return g;
}

LossBreakdown backward_item(const Vec& x, const TrainForward& f, const HarqModel& model,
                            const std::vector<std::uint8_t>& target_mask,
                            const LossWeights& weights, double scale, ModelGrad& grads) {
  weights.validate();
  const double c = model.config.curvature;
  const int K = model.codebook.num_layers();
  const ForwardTrace& tr = f.trace;
  const int dim = static_cast<int>(tr.z0.size());

  const double recon = loss_recon(x, tr.reconstruction);
  const double quant = loss_quant(tr, model.codebook, weights.beta_commit);
  const double cost = loss_cost(tr);
  const double len = loss_len(tr, target_mask);
  const LossBreakdown out = combine_losses(recon, quant, cost, len, weights);

  // Reconstruction error into the decoder, then into the final accumulation.
  const Vec g_xhat = scale * 2.0 * (tr.reconstruction - x);
  const Vec g_dec_tan = mlp::backward(model.decoder, f.dec_cache, g_xhat, grads.decoder);
  Vec g_acc = geo::log_map_origin_vjp(tr.z_decoded, c, g_dec_tan);

  // Unwind the decoder accumulation, collecting per-layer gradients on the
  // cumulative masks and on the quantized codewords (the latter feed the
  // straight-through bridge below, never the codebook directly).
  std::vector<double> g_mask(K, 0.0);
  std::vector<Vec> g_bridge(K);
  for (int l = K - 1; l >= 0; --l) {
    const Vec g_pre = geo::project_to_safe_ball_vjp(f.acc_pre[l], c, g_acc);
    const Vec prev_acc = (l == 0) ? Vec(Vec::Zero(dim)) : f.acc[l - 1];
    const Vec& e = selected_code(model.codebook, tr, l);
    const Vec scaled = geo::hyp_scale(tr.masks[l], e, c);
    auto [g_prev, g_scaled] = geo::mobius_add_vjp(prev_acc, scaled, c, g_pre);
    auto [g_m, g_code] = geo::hyp_scale_vjp(tr.masks[l], e, c, g_scaled);
    g_mask[l] += g_m;
    g_bridge[l] = g_code;
    g_acc = g_prev;
  }

  // Direct mask terms from the cost and length losses.
  for (int l = 0; l < K; ++l) {
    g_mask[l] += scale * weights.lambda_cost;
    const double m = tr.masks[l];
    if (m > kProbClamp && m < 1.0 - kProbClamp) {
      const double t = target_mask[l] ? 1.0 : 0.0;
      g_mask[l] += scale * weights.lambda_len * ((1.0 - t) / (1.0 - m) - t / m);
    }
  }

  // Cumulative masks to per-layer gate outputs: m_l = m_{l-1} * alpha_l.
  std::vector<double> g_alpha(K, 0.0);
  if (!f.gates_pinned) {
    double carry = 0.0;
    for (int l = K - 1; l >= 0; --l) {
      const double total_m = g_mask[l] + carry;
      const double m_prev = (l == 0) ? 1.0 : tr.masks[l - 1];
      g_alpha[l] = total_m * m_prev;
      carry = total_m * tr.gates[l];
    }
  }

  // Walk the residual chain backwards.  Each layer consumes its incoming
  // residual through the residual update, the gate input, the bridge, and
  // the commitment term.
  Vec g_r = Vec::Zero(dim);  // gradient at the residual leaving layer l
  for (int l = K - 1; l >= 0; --l) {
    const Vec& r_in = f.res_in[l];
    const Vec& e = selected_code(model.codebook, tr, l);
    Vec g_rin = Vec::Zero(dim);
    Vec g_e = Vec::Zero(dim);

    {
      const Vec g_step = geo::project_to_safe_ball_vjp(f.step_pre[l], c, g_r);
      auto [g_neg_e, g_rin_step] = geo::mobius_add_vjp(geo::mobius_neg(e), r_in, c, g_step);
      g_e -= g_neg_e;
      g_rin += g_rin_step;
    }

    if (!f.gates_pinned) {
      const double a = tr.gates[l];
      Vec g_logit(1);
      g_logit[0] = g_alpha[l] * a * (1.0 - a);
      const Vec g_gate_in = mlp::backward(model.gate, f.gate_caches[l], g_logit, grads.gate);
      g_rin += geo::log_map_origin_vjp(r_in, c, g_gate_in.head(dim));
      g_e += geo::log_map_origin_vjp(e, c, g_gate_in.tail(dim));
    }

    {
      // Straight-through: the decoder-path gradient at the quantized point,
      // expressed in the tangent space, lands on the residual instead.
      const Vec v_e = geo::log_map_origin(e, c);
      const Vec g_v = geo::exp_map_origin_vjp(v_e, c, g_bridge[l]);
      g_rin += geo::log_map_origin_vjp(r_in, c, g_v);
    }

    {
      auto code_term = geo::hyp_distance_sq_grad(e, r_in, c);
      g_e += scale * code_term.first;
      auto commit_term = geo::hyp_distance_sq_grad(r_in, e, c);
      g_rin += scale * weights.beta_commit * commit_term.first;
    }

    grads.codebook[l][tr.indices[l]] += g_e;
    g_r = g_rin;
  }

  // Encoder path: residual entering layer 0 is the encoded point.
  const Vec g_z0_pre = geo::project_to_safe_ball_vjp(f.z0_pre, c, g_r);
  const Vec g_tangent = geo::exp_map_origin_vjp(f.enc_tangent, c, g_z0_pre);
  mlp::backward(model.encoder, f.enc_cache, g_tangent, grads.encoder);

  return out;
}

EpochStats make_epoch_stats(const HarqModel& model, std::size_t capacity, std::mt19937* rng) {
  EpochStats s;
  s.capacity = capacity;
  s.rng = rng;
  s.counts.assign(model.codebook.num_layers(),
                  std::vector<long>(model.codebook.codes_per_layer(), 0));
  s.reservoir.assign(model.codebook.num_layers(), {});
  s.seen.assign(model.codebook.num_layers(), 0);
  return s;
}

void EpochStats::observe(int layer, int code, const Vec& res_in) {
  counts[layer][code] += 1;
  auto& pool = reservoir[layer];
  seen[layer] += 1;
  if (pool.size() < capacity) {
    pool.push_back(res_in);
  } else if (rng != nullptr) {
    std::uniform_int_distribution<long> pick(0, seen[layer] - 1);
    const long j = pick(*rng);
    if (j < static_cast<long>(capacity)) pool[static_cast<std::size_t>(j)] = res_in;
  }
}

LossBreakdown backward_batch(const std::vector<Vec>& xs,
                             const std::vector<const std::vector<std::uint8_t>*>& target_masks,
                             const HarqModel& model, const LossWeights& weights,
                             bool pin_gates_open, ModelGrad& grads, EpochStats* stats) {
  if (xs.empty()) throw std::invalid_argument("batch: empty");
  if (xs.size() != target_masks.size()) throw std::invalid_argument("batch: targets mismatch");
  const double scale = 1.0 / static_cast<double>(xs.size());
  LossBreakdown mean;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    TrainForward f = forward_training(xs[i], model, pin_gates_open);
    if (stats != nullptr) {
      for (int l = 0; l < static_cast<int>(f.trace.indices.size()); ++l) {
        stats->observe(l, f.trace.indices[l], f.res_in[l]);
      }
    }
    const LossBreakdown li =
        backward_item(xs[i], f, model, *target_masks[i], weights, scale, grads);
    if (!std::isfinite(li.total)) {
      throw std::runtime_error("total loss is non-finite (batch item " + std::to_string(i) + ")");
    }
    mean.recon += scale * li.recon;
    mean.quant += scale * li.quant;
    mean.cost += scale * li.cost;
    mean.len += scale * li.len;
    mean.total += scale * li.total;
  }
  if (!grads.all_finite()) {
    throw std::runtime_error("gradient is non-finite after batch accumulation");
  }
  return mean;
}

LossBreakdown evaluate(const std::vector<Vec>& xs,
                       const std::vector<std::vector<std::uint8_t>>& target_masks,
                       const HarqModel& model, const LossWeights& weights,
                       bool pin_gates_open) {
  if (xs.empty() || xs.size() != target_masks.size()) {
    throw std::invalid_argument("evaluate: empty or mismatched dataset");
  }
  const double scale = 1.0 / static_cast<double>(xs.size());
  LossBreakdown mean;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const TrainForward f = forward_training(xs[i], model, pin_gates_open);
    const double recon = loss_recon(xs[i], f.trace.reconstruction);
    const double quant = loss_quant(f.trace, model.codebook, weights.beta_commit);
    const double cost = loss_cost(f.trace);
    const double len = loss_len(f.trace, target_masks[i]);
    const LossBreakdown li = combine_losses(recon, quant, cost, len, weights);
    mean.recon += scale * li.recon;
    mean.quant += scale * li.quant;
    mean.cost += scale * li.cost;
    mean.len += scale * li.len;
    mean.total += scale * li.total;
  }
  return mean;
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("adam: moment decays must lie in [0,1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
}

AdamState make_adam_state(const HarqModel& model) {
  AdamState s;
  s.first_moment = zero_grad_like(model);
  s.second_moment = zero_grad_like(model);
  return s;
}

namespace {

template <typename Tensor>
Tensor adam_direction(Tensor& m, Tensor& v, const Tensor& g, const AdamConfig& cfg,
                      double bias1, double bias2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const Tensor m_hat = m / bias1;
  const Tensor v_hat = v / bias2;
  return (m_hat.array() / (v_hat.array().sqrt() + cfg.epsilon)).matrix();
}

}  // namespace

void riemannian_adam_step(HarqModel& model, const ModelGrad& grads, AdamState& state,
                          const AdamConfig& config) {
  config.validate();
  state.step += 1;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const double c = model.config.curvature;

  const auto step_mlp = [&](mlp::Mlp& net, const mlp::MlpGrad& g, mlp::MlpGrad& m, mlp::MlpGrad& v) {
    for (std::size_t i = 0; i < net.weights.size(); ++i) {
      net.weights[i] -= config.learning_rate *
                        adam_direction(m.weights[i], v.weights[i], g.weights[i], config, bias1, bias2);
      net.biases[i] -= config.learning_rate *
                       adam_direction(m.biases[i], v.biases[i], g.biases[i], config, bias1, bias2);
    }
  };
  step_mlp(model.encoder, grads.encoder, state.first_moment.encoder, state.second_moment.encoder);
  step_mlp(model.gate, grads.gate, state.first_moment.gate, state.second_moment.gate);
  step_mlp(model.decoder, grads.decoder, state.first_moment.decoder, state.second_moment.decoder);

  for (int l = 0; l < model.codebook.num_layers(); ++l) {
    for (int j = 0; j < model.codebook.codes_per_layer(); ++j) {
      Vec& w = model.codebook.layers[l][j];
      const Vec dir = adam_direction(state.first_moment.codebook[l][j],
                                     state.second_moment.codebook[l][j],
                                     grads.codebook[l][j], config, bias1, bias2);
      const double inv_metric = (1.0 - c * w.squaredNorm());
      const double rescale = 0.25 * inv_metric * inv_metric;
      const Vec update = -config.learning_rate * rescale * dir;
      w = geo::project_to_safe_ball(geo::exp_map(w, update, c), c);
      assert(w.norm() <= (1.0 - geo::kSafeBallMargin) / std::sqrt(c) + 1e-12);
    }
  }
}

int reset_dead_codes(HarqModel& model, AdamState& state, const EpochStats& stats,
                     std::mt19937& rng) {
  const double c = model.config.curvature;
  std::normal_distribution<double> jitter(0.0, 1e-3);
  int resets = 0;
  for (int l = 0; l < model.codebook.num_layers(); ++l) {
    const auto& pool = stats.reservoir[l];
    if (pool.empty()) continue;
    for (int j = 0; j < model.codebook.codes_per_layer(); ++j) {
      if (stats.counts[l][j] != 0) continue;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      Vec tangent = geo::log_map_origin(pool[pick(rng)], c);
      for (int k = 0; k < tangent.size(); ++k) tangent[k] += jitter(rng);
      model.codebook.layers[l][j] =
          geo::project_to_safe_ball(geo::exp_map_origin(tangent, c), c);
      state.first_moment.codebook[l][j].setZero();
      state.second_moment.codebook[l][j].setZero();
      ++resets;
    }
  }
  return resets;
}

namespace {

// Euclidean k-means in the tangent space at the origin.
std::vector<Vec> kmeans_tangent(const std::vector<Vec>& pts, int num_centers, int iters,
                                std::mt19937& rng) {
  std::normal_distribution<double> jitter(0.0, 1e-3);
  const auto jittered_pick = [&](std::size_t i) {
    Vec v = pts[i];
    for (int k = 0; k < v.size(); ++k) v[k] += jitter(rng);
    return v;
  };

  std::vector<Vec> centers;
  centers.reserve(num_centers);
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> any(0, pts.size() - 1);
  for (int m = 0; m < num_centers; ++m) {
    if (m < static_cast<int>(pts.size())) {
      centers.push_back(pts[order[m]]);
    } else {
      centers.push_back(jittered_pick(any(rng)));
    }
  }

  std::vector<int> assign(pts.size(), 0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      double best_d = (pts[i] - centers[0]).squaredNorm();
      for (int m = 1; m < num_centers; ++m) {
        const double d = (pts[i] - centers[m]).squaredNorm();
        if (d < best_d) {
          best = m;
          best_d = d;
        }
      }
      assign[i] = best;
    }
    std::vector<Vec> sums(num_centers, Vec::Zero(pts[0].size()));
    std::vector<long> counts(num_centers, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sums[assign[i]] += pts[i];
      counts[assign[i]] += 1;
    }
    for (int m = 0; m < num_centers; ++m) {
      if (counts[m] > 0) {
        centers[m] = sums[m] / static_cast<double>(counts[m]);
      } else {
        centers[m] = jittered_pick(any(rng));
      }
    }
  }
  return centers;
}

}  // namespace

void init_codebook(HarqModel& model, const std::vector<Vec>& features, std::mt19937& rng,
                   int kmeans_iters) {
  if (features.empty()) throw std::invalid_argument("codebook init: no features");
  if (kmeans_iters < 1) throw std::invalid_argument("codebook init: need at least one iteration");
  const double c = model.config.curvature;
  const int M = model.config.codes_per_layer;

  std::vector<Vec> points;
  points.reserve(features.size());
  for (const Vec& x : features) points.push_back(harq::encode(x, model.encoder, c));

  const int K = model.codebook.num_layers();
  for (int l = 0; l < K; ++l) {
    std::vector<Vec> tangents;
    tangents.reserve(points.size());
    for (const Vec& p : points) tangents.push_back(geo::log_map_origin(p, c));

    std::vector<Vec> centers;
    if (l == 0) {
      centers = kmeans_tangent(tangents, M, kmeans_iters, rng);
    } else {
      // Residual spread shrinks with depth; random samples of the incoming
      // residuals are the standard seeding.
      std::vector<std::size_t> order(tangents.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::uniform_int_distribution<std::size_t> any(0, tangents.size() - 1);
      std::normal_distribution<double> jitter(0.0, 1e-3);
      for (int m = 0; m < M; ++m) {
        Vec t = (m < static_cast<int>(tangents.size())) ? tangents[order[m]]
                                                        : tangents[any(rng)];
        if (m >= static_cast<int>(tangents.size())) {
          for (int k = 0; k < t.size(); ++k) t[k] += jitter(rng);
        }
        centers.push_back(std::move(t));
      }
    }
    for (int m = 0; m < M; ++m) {
      model.codebook.layers[l][m] =
          geo::project_to_safe_ball(geo::exp_map_origin(centers[m], c), c);
    }
    if (l + 1 < K) {
      for (Vec& p : points) {
        const int idx = harq::nearest_code(p, model.codebook.layers[l], c);
        p = harq::residual_step(p, model.codebook.layers[l][idx], c);
      }
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: need at least one epoch");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
  adam.validate();
  weights.validate();
}

TrainResult train(const std::vector<Vec>& features,
                  const std::vector<std::vector<std::uint8_t>>& target_masks,
                  const HarqConfig& model_config, const TrainConfig& config) {
  config.validate();
  HarqModel model = harq::make_model(model_config, config.seed);
  if (config.use_kmeans_init) {
    std::mt19937 rng(static_cast<std::uint32_t>(config.seed) * 2654435761u + 17u);
    init_codebook(model, features, rng);
  }
  return train_from(std::move(model), features, target_masks, config);
}

TrainResult train_from(HarqModel model, const std::vector<Vec>& features,
                       const std::vector<std::vector<std::uint8_t>>& target_masks,
                       const TrainConfig& config) {
  config.validate();
  if (features.empty()) throw std::invalid_argument("train: empty dataset");
  if (features.size() != target_masks.size()) {
    throw std::invalid_argument("train: feature/target count mismatch");
  }
  const int K = model.codebook.num_layers();
  for (const auto& t : target_masks) check_prefix_mask(t, K);

  std::mt19937 rng(static_cast<std::uint32_t>(config.seed) ^ 0x9e3779b9u);
  AdamState adam = make_adam_state(model);
  const std::size_t n = features.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.history.reserve(config.epochs);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats = make_epoch_stats(model, 64, &rng);
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_id) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::vector<Vec> xs;
      std::vector<const std::vector<std::uint8_t>*> ts;
      xs.reserve(stop - start);
      ts.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        xs.push_back(features[order[i]]);
        ts.push_back(&target_masks[order[i]]);
      }
      ModelGrad grads = zero_grad_like(model);
      try {
        backward_batch(xs, ts, model, config.weights, config.pin_gates_open, grads, &stats);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + " batch " +
                                 std::to_string(batch_id) + ": " + e.what());
      }
      riemannian_adam_step(model, grads, adam, config.adam);
    }
    if (config.reset_dead) reset_dead_codes(model, adam, stats, rng);
    result.history.push_back(
        evaluate(features, target_masks, model, config.weights, config.pin_gates_open));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace vartok::training
