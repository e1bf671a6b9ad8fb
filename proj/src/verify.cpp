#include "vartok/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

#include "vartok/decoder.hpp"
#include "vartok/geometry.hpp"
#include "vartok/id_registry.hpp"
#include "vartok/piba.hpp"
#include "vartok/training.hpp"

namespace vartok::verify {

namespace {

namespace geo = vartok::geometry;
using Vec = Eigen::VectorXd;

std::string fmt(double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", value);
  return buf;
}

void require(bool condition, const std::string& message) {
  if (!condition) throw std::runtime_error(message);
}

// A check body returns its success detail and throws on failure.
VerifyCheck run_check(const std::string& name, const std::function<std::string()>& body) {
  try {
    return {name, true, body()};
  } catch (const std::exception& e) {
    return {name, false, e.what()};
  }
}

Vec randn_vec(int dim, std::mt19937& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v;
}

// Strictly interior point: exp of a bounded tangent never reaches the rim.
Vec random_point(int dim, double c, std::mt19937& rng, double max_tangent = 2.0) {
  std::uniform_real_distribution<double> u(0.05, max_tangent);
  Vec v = randn_vec(dim, rng);
  v *= u(rng) / v.norm();
  return geo::exp_map_origin(v, c);
}

double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// ---- geometry ----

std::string check_exp_log_inverse(std::mt19937& rng) {
  double worst = 0.0;
  for (double c : {1.0, 0.5}) {
    for (int i = 0; i < 1500; ++i) {
      Vec v = randn_vec(8, rng);
      v *= std::uniform_real_distribution<double>(0.01, 4.0)(rng) / v.norm();
      const Vec back = geo::log_map_origin(geo::exp_map_origin(v, c), c);
      worst = std::max(worst, (back - v).norm());
    }
  }
  require(worst <= 1e-9, "exp/log inverse error " + fmt(worst));
  return "max error " + fmt(worst);
}

std::string check_mobius_cancellation(std::mt19937& rng) {
  double worst = 0.0;
  for (double c : {1.0, 0.5}) {
    for (int i = 0; i < 1500; ++i) {
      const Vec x = random_point(8, c, rng);
      const Vec y = random_point(8, c, rng);
      const Vec back = geo::mobius_add(geo::mobius_neg(x), geo::mobius_add(x, y, c), c);
      worst = std::max(worst, (back - y).norm());
    }
  }
  require(worst <= 1e-9, "cancellation error " + fmt(worst));
  return "max error " + fmt(worst);
}

std::string check_mobius_identity(std::mt19937& rng) {
  double worst = 0.0;
  for (double c : {1.0, 0.5}) {
    const Vec zero = Vec::Zero(8);
    for (int i = 0; i < 1500; ++i) {
      const Vec y = random_point(8, c, rng);
      worst = std::max(worst, (geo::mobius_add(zero, y, c) - y).norm());
      worst = std::max(worst, (geo::mobius_add(y, zero, c) - y).norm());
    }
  }
  require(worst <= 1e-12, "identity error " + fmt(worst));
  return "max error " + fmt(worst);
}

std::string check_distance_axioms(std::mt19937& rng) {
  double worst_sym = 0.0;
  double worst_tri = 0.0;
  for (double c : {1.0, 0.5}) {
    for (int i = 0; i < 1500; ++i) {
      const Vec x = random_point(8, c, rng);
      const Vec y = random_point(8, c, rng);
      const Vec z = random_point(8, c, rng);
      worst_sym = std::max(worst_sym,
                           std::abs(geo::hyp_distance(x, y, c) - geo::hyp_distance(y, x, c)));
      const double slack =
          geo::hyp_distance(x, z, c) - geo::hyp_distance(x, y, c) - geo::hyp_distance(y, z, c);
      worst_tri = std::max(worst_tri, slack);
    }
  }
  require(worst_sym <= 1e-12, "symmetry error " + fmt(worst_sym));
  require(worst_tri <= 1e-9, "triangle violation " + fmt(worst_tri));
  return "symmetry " + fmt(worst_sym) + ", triangle slack " + fmt(worst_tri);
}

std::string check_radial_distance(std::mt19937& rng) {
  double worst = 0.0;
  for (double c : {1.0, 0.5}) {
    const Vec origin = Vec::Zero(8);
    for (int i = 0; i < 1500; ++i) {
      Vec v = randn_vec(8, rng);
      v *= std::uniform_real_distribution<double>(0.01, 4.0)(rng) / v.norm();
      const double d = geo::hyp_distance(origin, geo::exp_map_origin(v, c), c);
      worst = std::max(worst, std::abs(d - 2.0 * v.norm()));
    }
  }
  require(worst <= 1e-9, "radial law error " + fmt(worst));
  return "max error " + fmt(worst);
}

std::string check_projection_safety(std::mt19937& rng) {
  double worst_excess = -1.0;
  for (double c : {1.0, 0.5}) {
    const double cap = 1.0 / std::sqrt(c) - geo::kSafeBallMargin;
    for (int i = 0; i < 1500; ++i) {
      Vec x = randn_vec(8, rng);
      x *= std::uniform_real_distribution<double>(0.0, 5.0)(rng) / (std::sqrt(c) * x.norm());
      const Vec p = geo::project_to_safe_ball(x, c);
      require(geo::in_ball(p, c), "projected point left the ball");
      worst_excess = std::max(worst_excess, p.norm() - cap);
    }
  }
  require(worst_excess <= 1e-15, "norm exceeds the safe cap by " + fmt(worst_excess));
  return "max excess over cap " + fmt(worst_excess);
}

double fd_dir(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& dir,
              double eps) {
  return (f(x + eps * dir) - f(x - eps * dir)) / (2.0 * eps);
}

std::string check_mobius_vjp(std::mt19937& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double c = (trial % 2 == 0) ? 1.0 : 0.5;
    const Vec x = random_point(5, c, rng, 1.2);
    const Vec y = random_point(5, c, rng, 1.2);
    const Vec g = randn_vec(5, rng);
    const auto [gx, gy] = geo::mobius_add_vjp(x, y, c, g);
    for (int k = 0; k < 5; ++k) {
      Vec dir = Vec::Zero(5);
      dir[k] = 1.0;
      const double fx = fd_dir(
          [&](const Vec& p) { return g.dot(geo::mobius_add(p, y, c)); }, x, dir, 1e-6);
      const double fy = fd_dir(
          [&](const Vec& p) { return g.dot(geo::mobius_add(x, p, c)); }, y, dir, 1e-6);
      worst = std::max({worst, rel_gap(fx, gx[k]), rel_gap(fy, gy[k])});
    }
  }
  require(worst <= 1e-4, "addition pullback vs finite differences: " + fmt(worst));
  return "max rel gap " + fmt(worst);
}

std::string check_map_vjps(std::mt19937& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double c = (trial % 2 == 0) ? 1.0 : 0.5;
    Vec v = randn_vec(5, rng);
    v *= std::uniform_real_distribution<double>(0.1, 1.5)(rng) / v.norm();
    const Vec x = random_point(5, c, rng, 1.2);
    const Vec g = randn_vec(5, rng);
    const Vec gv = geo::exp_map_origin_vjp(v, c, g);
    const Vec gx = geo::log_map_origin_vjp(x, c, g);
    for (int k = 0; k < 5; ++k) {
      Vec dir = Vec::Zero(5);
      dir[k] = 1.0;
      const double fe = fd_dir(
          [&](const Vec& p) { return g.dot(geo::exp_map_origin(p, c)); }, v, dir, 1e-6);
      const double fl = fd_dir(
          [&](const Vec& p) { return g.dot(geo::log_map_origin(p, c)); }, x, dir, 1e-6);
      worst = std::max({worst, rel_gap(fe, gv[k]), rel_gap(fl, gx[k])});
    }
  }
  require(worst <= 1e-4, "map pullbacks vs finite differences: " + fmt(worst));
  return "max rel gap " + fmt(worst);
}

std::string check_distance_grad(std::mt19937& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const double c = (trial % 2 == 0) ? 1.0 : 0.5;
    const Vec x = random_point(5, c, rng, 1.2);
    const Vec y = random_point(5, c, rng, 1.2);
    if (geo::hyp_distance(x, y, c) < 0.2) continue;  // avoid the kink at zero
    const auto [gx, gy] = geo::hyp_distance_grad(x, y, c);
    for (int k = 0; k < 5; ++k) {
      Vec dir = Vec::Zero(5);
      dir[k] = 1.0;
      const double fx =
          fd_dir([&](const Vec& p) { return geo::hyp_distance(p, y, c); }, x, dir, 1e-6);
      const double fy =
          fd_dir([&](const Vec& p) { return geo::hyp_distance(x, p, c); }, y, dir, 1e-6);
      worst = std::max({worst, rel_gap(fx, gx[k]), rel_gap(fy, gy[k])});
    }
  }
  require(worst <= 1e-4, "distance gradient vs finite differences: " + fmt(worst));
  return "max rel gap " + fmt(worst);
}

// ---- training ----

harq::HarqConfig tiny_config() {
  harq::HarqConfig cfg;
  cfg.feature_dim = 4;
  cfg.latent_dim = 3;
  cfg.num_layers = 2;
  cfg.codes_per_layer = 3;
  cfg.encoder_hidden = 8;
  cfg.gate_hidden = 6;
  cfg.decoder_hidden = 8;
  return cfg;
}

// The analytic backward pass treats codeword selection as a constant,
// reroutes the decoder-path codeword gradient through the residual tangent,
// and honors the stop-gradients inside the quantization loss. Finite
// differences must be taken on a value function with those choices frozen,
// or the comparison tests the wrong thing.
struct FrozenPlan {
  std::vector<int> indices;
  std::vector<Vec> r_in_base;
  std::vector<Vec> e_base;
  std::vector<Vec> bridge_add;  // log0(e) - log0(r_in) at the base point
};

FrozenPlan freeze_plan(const Vec& x, const harq::HarqModel& model) {
  const double c = model.config.curvature;
  const training::TrainForward f = training::forward_training(x, model);
  FrozenPlan plan;
  plan.indices = f.trace.indices;
  plan.r_in_base = f.res_in;
  for (std::size_t l = 0; l < plan.indices.size(); ++l) {
    const Vec& e = model.codebook.layers[l][plan.indices[l]];
    plan.e_base.push_back(e);
    plan.bridge_add.push_back(geo::log_map_origin(e, c) -
                              geo::log_map_origin(plan.r_in_base[l], c));
  }
  return plan;
}

double frozen_loss(const Vec& x, const FrozenPlan& plan, const harq::HarqModel& theta,
                   const std::vector<std::uint8_t>& target,
                   const training::LossWeights& w) {
  const double c = theta.config.curvature;
  const Vec tangent = mlp::forward(theta.encoder, x);
  Vec r = geo::project_to_safe_ball(geo::exp_map_origin(tangent, c), c);
  Vec acc = Vec::Zero(r.size());
  double mask = 1.0;
  double quant = 0.0;
  double cost = 0.0;
  double len = 0.0;
  for (std::size_t l = 0; l < plan.indices.size(); ++l) {
    const Vec& e = theta.codebook.layers[l][plan.indices[l]];
    const Vec u = geo::log_map_origin(r, c);
    Vec gate_in(2 * u.size());
    gate_in << u, geo::log_map_origin(e, c);
    mask *= mlp::sigmoid(mlp::forward(theta.gate, gate_in)[0]);

    const Vec e_bridge = geo::exp_map_origin(u + plan.bridge_add[l], c);
    acc = geo::project_to_safe_ball(
        geo::mobius_add(acc, geo::hyp_scale(mask, e_bridge, c), c), c);

    quant += geo::hyp_distance_sq(plan.r_in_base[l], e, c);
    quant += w.beta_commit * geo::hyp_distance_sq(r, plan.e_base[l], c);
    cost += mask;
    const double mc = std::min(std::max(mask, 1e-7), 1.0 - 1e-7);
    const double t = target[l] ? 1.0 : 0.0;
    len += -(t * std::log(mc) + (1.0 - t) * std::log1p(-mc));

    r = geo::project_to_safe_ball(geo::mobius_add(geo::mobius_neg(e), r, c), c);
  }
  const double recon =
      (x - mlp::forward(theta.decoder, geo::log_map_origin(acc, c))).squaredNorm();
  return recon + quant + w.lambda_cost * cost + w.lambda_len * len;
}

std::string check_loss_gradients(std::mt19937& rng, std::uint64_t seed) {
  harq::HarqModel model = harq::make_model(tiny_config(), seed + 11);
  std::vector<Vec> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(randn_vec(4, rng));
  const std::vector<std::vector<std::uint8_t>> masks = {{1, 1}, {1, 0}, {1, 1}, {1, 0}};
  std::vector<const std::vector<std::uint8_t>*> mask_ptrs;
  for (const auto& m : masks) mask_ptrs.push_back(&m);
  const training::LossWeights weights;

  training::ModelGrad grads = training::zero_grad_like(model);
  training::backward_batch(xs, mask_ptrs, model, weights, false, grads, nullptr);
  std::vector<FrozenPlan> plans;
  for (const Vec& x : xs) plans.push_back(freeze_plan(x, model));
  const auto loss_at = [&](const harq::HarqModel& m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sum += frozen_loss(xs[i], plans[i], m, masks[i], weights);
    }
    return sum / static_cast<double>(xs.size());
  };

  struct Probe {
    const char* name;
    std::function<double&(harq::HarqModel&)> param;
    double analytic;
  };
  const std::vector<Probe> probes = {
      {"enc_w", [](harq::HarqModel& m) -> double& { return m.encoder.weights[0](0, 0); },
       grads.encoder.weights[0](0, 0)},
      {"enc_b", [](harq::HarqModel& m) -> double& { return m.encoder.biases[0][1]; },
       grads.encoder.biases[0][1]},
      {"gate_w", [](harq::HarqModel& m) -> double& { return m.gate.weights[0](0, 1); },
       grads.gate.weights[0](0, 1)},
      {"gate_b", [](harq::HarqModel& m) -> double& { return m.gate.biases[1][0]; },
       grads.gate.biases[1][0]},
      {"dec_w", [](harq::HarqModel& m) -> double& { return m.decoder.weights[1](0, 0); },
       grads.decoder.weights[1](0, 0)},
      {"code00", [](harq::HarqModel& m) -> double& { return m.codebook.layers[0][0][0]; },
       grads.codebook[0][0][0]},
      {"code12", [](harq::HarqModel& m) -> double& { return m.codebook.layers[1][2][1]; },
       grads.codebook[1][2][1]},
  };

  double worst = 0.0;
  const double eps = 1e-6;
  for (const Probe& probe : probes) {
    harq::HarqModel plus = model;
    probe.param(plus) += eps;
    harq::HarqModel minus = model;
    probe.param(minus) -= eps;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * eps);
    worst = std::max(worst, rel_gap(fd, probe.analytic));
  }
  require(worst <= 2e-3, "loss gradient vs finite differences: " + fmt(worst));
  return "max rel gap " + fmt(worst) + " over " + std::to_string(probes.size()) + " probes";
}

std::string check_pinned_gates(std::mt19937& rng, std::uint64_t seed) {
  const harq::HarqModel model = harq::make_model(tiny_config(), seed + 13);
  for (int i = 0; i < 5; ++i) {
    const training::TrainForward fwd = training::forward_training(randn_vec(4, rng), model, true);
    for (double m : fwd.trace.masks) {
      require(m == 1.0, "pinned gate produced mask " + fmt(m));
    }
  }
  return "all cumulative masses exactly 1";
}

std::string check_adam_safety(std::mt19937& rng, std::uint64_t seed) {
  harq::HarqModel model = harq::make_model(tiny_config(), seed + 17);
  training::AdamState state = training::make_adam_state(model);
  training::AdamConfig adam;
  adam.learning_rate = 0.05;
  std::normal_distribution<double> big(0.0, 10.0);
  const double cap =
      1.0 / std::sqrt(model.config.curvature) - geo::kSafeBallMargin + 1e-15;
  double worst = 0.0;
  for (int step = 0; step < 2000; ++step) {
    training::ModelGrad grads = training::zero_grad_like(model);
    for (auto& layer : grads.codebook) {
      for (Vec& g : layer) {
        for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = big(rng);
      }
    }
    training::riemannian_adam_step(model, grads, state, adam);
    for (const auto& layer : model.codebook.layers) {
      for (const Vec& w : layer) {
        worst = std::max(worst, w.norm());
        require(w.norm() <= cap, "codeword norm " + fmt(w.norm()) + " left the safe ball");
      }
    }
  }
  const VerifyCheck safety = check_model_safety(model);
  require(safety.passed, safety.detail);
  return "2000 hostile steps, max norm " + fmt(worst) + " (cap " + fmt(cap) + ")";
}

// ---- length allocation ----

std::vector<double> zipf_popularity(int n, double exponent) {
  std::vector<double> p(n);
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    p[i] = std::pow(static_cast<double>(i + 1), -exponent);
    mass += p[i];
  }
  for (double& v : p) v /= mass;
  return p;
}

int minimal_length_scan(double gap, double gamma, int cap) {
  for (int l = 1; l <= cap; ++l) {
    if (piba::semantic_info(l, gamma) >= gap) return l;
  }
  return cap;
}

std::string check_length_closed_form(std::mt19937& rng) {
  std::uniform_real_distribution<double> ua(0.5, 2.0);
  std::uniform_real_distribution<double> ut(10.0, 2000.0);
  std::uniform_real_distribution<double> ug(2.0, 8.0);
  std::uniform_real_distribution<double> ui(1.0, 12.0);
  std::uniform_real_distribution<double> up(1e-4, 1.0);
  int worst = 0;
  for (int it = 0; it < 300; ++it) {
    piba::PibaParams params;
    params.alpha = ua(rng);
    params.theta = ut(rng);
    params.gamma = ug(rng);
    params.i_req = ui(rng);
    params.max_len = 10;
    const double p = up(rng);
    const int oracle = minimal_length_scan(piba::info_gap(p, params), params.gamma, 10);
    const int closed = std::clamp(
        static_cast<int>(std::ceil(piba::optimal_length_harmonic(p, params))), 1, 10);
    worst = std::max(worst, std::abs(closed - oracle));
  }
  require(worst <= 1, "closed form strays " + std::to_string(worst) + " layers from the scan");
  return "max gap to scan oracle " + std::to_string(worst) + " layer over 300 draws";
}

std::string check_length_quantile_example() {
  piba::PibaParams params;
  params.beta = 1.0;
  params.max_len = 10;
  const piba::PopularityTable table(zipf_popularity(101, 1.0));
  const auto assign = piba::assign_lengths(table, params);
  require(assign.lengths[50] == 6, "rank-50 item got length " +
                                       std::to_string(assign.lengths[50]) + ", expected 6");
  return "N=101, beta=1: rank-50 item gets 6 layers";
}

std::string check_length_endpoints() {
  for (double beta : {0.7, 1.2}) {
    piba::PibaParams params;
    params.beta = beta;
    params.max_len = 8;
    const piba::PopularityTable table(zipf_popularity(1000, 1.0));
    const auto assign = piba::assign_lengths(table, params);
    require(assign.lengths.front() == 1, "most popular item not at minimum length");
    require(assign.lengths.back() == 8, "least popular item not at maximum length");
    for (std::size_t i = 1; i < assign.lengths.size(); ++i) {
      require(assign.lengths[i] >= assign.lengths[i - 1],
              "length decreased with coldness at rank " + std::to_string(i));
    }
  }
  return "endpoints 1 and K, nondecreasing in coldness (N=1000)";
}

// ---- capacity and embedding ----

std::string check_capacity_slope(int dim) {
  const double lo = std::log(geo::hyp_ball_volume(6.0, dim, 1.0));
  const double hi = std::log(geo::hyp_ball_volume(10.0, dim, 1.0));
  const double slope = (hi - lo) / 4.0;
  const double target = dim - 1.0;
  const double rel = std::abs(slope - target) / target;
  require(rel <= 0.05, "log-volume slope " + fmt(slope) + " vs " + fmt(target));
  return "slope " + fmt(slope) + " vs (d-1)sqrt(c) = " + fmt(target) + ", rel " + fmt(rel);
}

geo::ParentArray full_bary_tree(int branching, int depth) {
  geo::ParentArray parents{-1};
  std::vector<int> frontier{0};
  for (int level = 0; level < depth; ++level) {
    std::vector<int> next;
    for (int parent : frontier) {
      for (int k = 0; k < branching; ++k) {
        next.push_back(static_cast<int>(parents.size()));
        parents.push_back(parent);
      }
    }
    frontier = std::move(next);
  }
  return parents;
}

int tree_distance(const geo::ParentArray& parents, int u, int v) {
  std::map<int, int> up;
  for (int node = u, hops = 0; node != -1; node = parents[node], ++hops) up[node] = hops;
  for (int node = v, hops = 0; node != -1; node = parents[node], ++hops) {
    const auto it = up.find(node);
    if (it != up.end()) return it->second + hops;
  }
  throw std::logic_error("disconnected tree");
}

std::string check_tree_embedding_radial() {
  const geo::ParentArray parents = full_bary_tree(3, 3);
  const std::vector<Vec> points = geo::sarkar_embed_tree(parents, 1.0, 10);
  const Vec origin = Vec::Zero(10);
  double worst = 0.0;
  for (std::size_t node = 1; node < parents.size(); ++node) {
    const int depth = tree_distance(parents, 0, static_cast<int>(node));
    const double d = geo::hyp_distance(origin, points[node], 1.0);
    worst = std::max(worst, std::abs(d - 2.0 * depth));
  }
  require(worst <= 1e-6, "radial distance error " + fmt(worst));
  return "max |d(0,u) - 2 depth(u)| = " + fmt(worst);
}

std::string check_tree_embedding_distortion() {
  // The embedding must not contract any tree distance by more than 10%
  // (stretching is allowed; paths through the origin bound it anyway).
  const geo::ParentArray parents = full_bary_tree(3, 3);
  const std::vector<Vec> points = geo::sarkar_embed_tree(parents, 1.0, 10);
  double worst = 0.0;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    for (std::size_t j = i + 1; j < parents.size(); ++j) {
      const double tree_d =
          2.0 * tree_distance(parents, static_cast<int>(i), static_cast<int>(j));
      const double emb_d = geo::hyp_distance(points[i], points[j], 1.0);
      worst = std::max(worst, tree_d / emb_d);
    }
  }
  require(worst <= 1.1, "distortion " + fmt(worst) + " over 1.1");
  return "distortion " + fmt(worst) + " on the 3-ary depth-3 tree";
}

// ---- registry ----

idreg::RawIds collision_pool() {
  // Distinct sequences over M=3, each repeated 1..3 times (never above M).
  idreg::RawIds pool;
  for (int a = 0; a < 3; ++a) pool.push_back({a});
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) pool.push_back({a, b});
  }
  idreg::RawIds raw;
  for (std::size_t g = 0; g < pool.size(); ++g) {
    for (std::size_t r = 0; r < 1 + g % 3; ++r) raw.push_back(pool[g]);
  }
  return raw;
}

std::string check_resolution_uniqueness() {
  const idreg::RawIds raw = collision_pool();
  const idreg::IdTable table = idreg::resolve_collisions(raw, 3);
  std::set<std::vector<int>> seen;
  for (const auto& id : table.ids) {
    idreg::validate_id(id, 3, 8);
    require(seen.insert(id.tokens).second, "duplicate resolved id");
  }
  for (const auto& a : table.ids) {
    for (const auto& b : table.ids) {
      if (&a == &b || a.tokens.size() >= b.tokens.size()) continue;
      require(!std::equal(a.tokens.begin(), a.tokens.end(), b.tokens.begin()),
              "one id is a strict prefix of another");
    }
  }
  return std::to_string(table.ids.size()) + " ids, all unique and prefix-free";
}

std::string check_resolution_capacity() {
  const idreg::RawIds raw = {{1, 1}, {1, 1}, {1, 1}};
  try {
    idreg::resolve_collisions(raw, 2);
  } catch (const std::runtime_error&) {
    return "group of 3 over M=2 rejected";
  }
  throw std::runtime_error("oversized collision group was not rejected");
}

std::string check_id_table_roundtrip() {
  const idreg::IdTable table = idreg::resolve_collisions(collision_pool(), 3);
  const std::string path =
      (std::filesystem::temp_directory_path() / "vartok_verify_ids.tsv").string();
  idreg::write_id_table(path, table);
  const idreg::IdTable back = idreg::read_id_table(path);
  std::filesystem::remove(path);
  require(back.codes_per_layer == table.codes_per_layer, "codes_per_layer changed");
  require(back.ids == table.ids, "ids changed across the round trip");
  require(back.length_histogram == table.length_histogram, "histogram changed");
  require(back.collision_count == table.collision_count, "collision count changed");
  return "table of " + std::to_string(table.ids.size()) + " ids reloads equal";
}

// ---- decoding ----

idreg::IdTable random_table(int items, int codes, std::mt19937& rng) {
  idreg::RawIds pool;
  for (int a = 0; a < codes; ++a) {
    for (int b = 0; b < codes; ++b) pool.push_back({a, b});
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(items);
  return idreg::resolve_collisions(pool, codes);
}

decoder::MarkovModel random_scorer(const idreg::IdTable& table, std::mt19937& rng) {
  const int vocab = table.eos_token() + 1;
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  std::vector<std::vector<int>> streams(20);
  for (auto& stream : streams) {
    for (int t = 0; t < 30; ++t) stream.push_back(tok(rng));
  }
  decoder::MarkovModel scorer(vocab);
  scorer.fit(streams);
  return scorer;
}

std::string check_no_hallucination(std::mt19937& rng) {
  long decodes = 0;
  for (int round = 0; round < 40; ++round) {
    const int codes = 3 + round % 3;
    const idreg::IdTable table = random_table(6 + round % 4, codes, rng);
    const decoder::Trie trie = decoder::build_trie(table);
    const decoder::MarkovModel scorer = random_scorer(table, rng);
    for (int width = 1; width <= 5; ++width) {
      std::vector<std::vector<int>> history = {
          table.ids[rng() % table.ids.size()].tokens};
      const decoder::DecodeResult result =
          decoder::constrained_beam_search(history, scorer, trie, width);
      ++decodes;
      for (const decoder::Candidate& c : result.completed) {
        require(c.item >= 0 && c.item < static_cast<long>(table.ids.size()),
                "decoded item outside the table");
        require(c.tokens == table.ids[c.item].tokens, "decoded tokens are not a real id");
      }
      for (const decoder::BeamEntry& e : result.explored) {
        int node = 0;
        for (int token : e.tokens) {
          node = trie.child(node, token);
          require(node != -1, "explored partial walks off the trie");
        }
        require(!trie.is_terminal(node), "explored partial claims a terminal node");
      }
    }
  }
  return std::to_string(decodes) + " constrained decodes, zero hallucinations";
}

std::string check_beam_exhaustive(std::mt19937& rng) {
  for (int round = 0; round < 20; ++round) {
    const idreg::IdTable table = random_table(8, 4, rng);
    const decoder::Trie trie = decoder::build_trie(table);
    const decoder::MarkovModel scorer = random_scorer(table, rng);
    const std::vector<std::vector<int>> history = {
        table.ids[rng() % table.ids.size()].tokens};
    const decoder::DecodeResult result =
        decoder::constrained_beam_search(history, scorer, trie, 20);
    require(result.completed.size() == table.ids.size(), "wide beam missed an id");

    long best_item = -1;
    double best_lp = 0.0;
    std::vector<int> best_tokens;
    for (std::size_t item = 0; item < table.ids.size(); ++item) {
      std::vector<int> partial;
      double lp = 0.0;
      for (int token : table.ids[item].tokens) {
        lp += std::log(scorer.next_token_distribution(history, partial)[token]);
        partial.push_back(token);
      }
      if (best_item == -1 || lp > best_lp ||
          (lp == best_lp && partial < best_tokens)) {
        best_item = static_cast<long>(item);
        best_lp = lp;
        best_tokens = partial;
      }
    }
    const auto better = [](const decoder::Candidate& a, const decoder::Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.tokens < b.tokens;
    };
    const auto top = std::min_element(result.completed.begin(), result.completed.end(), better);
    require(top->item == best_item, "beam argmax disagrees with exhaustive scoring");
    require(top->log_prob == best_lp, "beam log-probability is not bitwise exact");
  }
  return "20 random models, beam argmax matches exhaustive scoring bitwise";
}

std::string check_odds_ratio_values() {
  const double gap = std::abs(decoder::odds_ratio_score(0.9, 0.5) - std::log(9.0));
  require(gap <= 1e-12, "logit gap off by " + fmt(gap));
  require(decoder::odds_ratio_score(0.2, 0.5) == 0.0, "clamp to zero failed");
  double worst = 0.0;
  for (double pc : {0.01, 0.2, 0.5, 0.9, 0.999}) {
    for (double pm : {0.05, 0.3, 0.7}) {
      worst = std::max(worst, std::abs(decoder::odds_ratio_score_log(std::log(pc), pm) -
                                       decoder::odds_ratio_score(pc, pm)));
    }
  }
  require(worst <= 1e-9, "log-space score drifts " + fmt(worst));
  const double at_floor =
      decoder::odds_ratio_score_log(-std::numeric_limits<double>::infinity(), 0.5);
  require(at_floor == 0.0, "impossible candidate should score zero");
  return "logit identity, clamp, and log-space agreement hold";
}

std::string check_rescoring_monotonicity() {
  double prev = -1.0;
  for (double pc : {0.31, 0.4, 0.55, 0.7, 0.85, 0.97}) {
    const double s = decoder::odds_ratio_score(pc, 0.3);
    require(s >= prev, "score fell as the conditional grew");
    prev = s;
  }
  prev = 1e300;
  for (double pm : {0.05, 0.15, 0.3, 0.45, 0.59}) {
    const double s = decoder::odds_ratio_score(0.6, pm);
    require(s <= prev, "score rose as the prior grew");
    prev = s;
  }
  return "monotone up in conditional, down in prior";
}

std::string check_markov_normalization(std::mt19937& rng) {
  decoder::MarkovModel scorer(9);
  std::uniform_int_distribution<int> tok(0, 8);
  std::vector<std::vector<int>> streams(10);
  for (auto& stream : streams) {
    for (int t = 0; t < 40; ++t) stream.push_back(tok(rng));
  }
  scorer.fit(streams);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> partial;
    for (int t = 0; t < static_cast<int>(rng() % 4); ++t) partial.push_back(tok(rng));
    const Vec dist = scorer.next_token_distribution({}, partial);
    worst = std::max(worst, std::abs(dist.sum() - 1.0));
    require(dist.minCoeff() >= 0.0, "negative probability");
  }
  require(worst <= 1e-9, "distribution mass drifts " + fmt(worst));
  return "50 contexts, max |sum - 1| = " + fmt(worst);
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.passed; });
}

int VerifyReport::failures() const {
  return static_cast<int>(std::count_if(checks.begin(), checks.end(),
                                        [](const VerifyCheck& c) { return !c.passed; }));
}

VerifyCheck check_model_safety(const harq::HarqModel& model) {
  VerifyCheck check{"model_safety", true, ""};
  try {
    model.validate();
    const double cap =
        1.0 / std::sqrt(model.config.curvature) - geo::kSafeBallMargin + 1e-15;
    double worst = 0.0;
    for (const auto& layer : model.codebook.layers) {
      for (const Vec& w : layer) worst = std::max(worst, w.norm());
    }
    if (worst > cap) {
      throw std::runtime_error("codeword norm " + fmt(worst) + " exceeds the safe cap " +
                               fmt(cap));
    }
    for (const mlp::Mlp* net : {&model.encoder, &model.gate, &model.decoder}) {
      for (const auto& w : net->weights) {
        if (!w.allFinite()) throw std::runtime_error("non-finite network weight");
      }
      for (const auto& b : net->biases) {
        if (!b.allFinite()) throw std::runtime_error("non-finite network bias");
      }
    }
    check.detail = "max codeword norm " + fmt(worst) + " under cap " + fmt(cap);
  } catch (const std::exception& e) {
    check.passed = false;
    check.detail = e.what();
  }
  return check;
}

VerifyReport verify_suite(std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::uint32_t>(seed * 2654435761u + 97u));
  VerifyReport report;
  auto add = [&](const std::string& name, const std::function<std::string()>& body) {
    report.checks.push_back(run_check(name, body));
  };

  add("exp_log_inverse", [&] { return check_exp_log_inverse(rng); });
  add("mobius_cancellation", [&] { return check_mobius_cancellation(rng); });
  add("mobius_identity", [&] { return check_mobius_identity(rng); });
  add("distance_axioms", [&] { return check_distance_axioms(rng); });
  add("radial_distance", [&] { return check_radial_distance(rng); });
  add("projection_safety", [&] { return check_projection_safety(rng); });
  add("mobius_vjp_fd", [&] { return check_mobius_vjp(rng); });
  add("map_vjp_fd", [&] { return check_map_vjps(rng); });
  add("distance_grad_fd", [&] { return check_distance_grad(rng); });
  add("loss_gradient_fd", [&] { return check_loss_gradients(rng, seed); });
  add("pinned_gates", [&] { return check_pinned_gates(rng, seed); });
  add("adam_adversarial_safety", [&] { return check_adam_safety(rng, seed); });
  report.checks.push_back(check_model_safety(harq::make_model(tiny_config(), seed + 19)));
  add("length_closed_form_oracle", [&] { return check_length_closed_form(rng); });
  add("length_quantile_example", [] { return check_length_quantile_example(); });
  add("length_endpoints_monotone", [] { return check_length_endpoints(); });
  add("capacity_slope_d3", [] { return check_capacity_slope(3); });
  add("capacity_slope_d5", [] { return check_capacity_slope(5); });
  add("tree_embedding_radial", [] { return check_tree_embedding_radial(); });
  add("tree_embedding_distortion", [] { return check_tree_embedding_distortion(); });
  add("resolution_uniqueness", [] { return check_resolution_uniqueness(); });
  add("resolution_capacity_guard", [] { return check_resolution_capacity(); });
  add("id_table_roundtrip", [] { return check_id_table_roundtrip(); });
  add("trie_no_hallucination", [&] { return check_no_hallucination(rng); });
  add("beam_exhaustive_agreement", [&] { return check_beam_exhaustive(rng); });
  add("odds_ratio_values", [] { return check_odds_ratio_values(); });
  add("rescoring_monotonicity", [] { return check_rescoring_monotonicity(); });
  add("markov_normalization", [&] { return check_markov_normalization(rng); });
  return report;
}

}  // namespace vartok::verify
