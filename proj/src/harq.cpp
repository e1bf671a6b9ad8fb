#include "vartok/harq.hpp"

#include <cmath>
#include <stdexcept>

namespace vartok::harq {

namespace geo = vartok::geometry;

void Codebook::validate() const {
  if (layers.empty()) throw std::invalid_argument("codebook: need at least one layer");
  const int dim = latent_dim();
  const double safe = (1.0 - geo::kSafeBallMargin) / std::sqrt(curvature);
  if (!(curvature > 0.0)) throw std::invalid_argument("codebook: curvature must be positive");
  for (const auto& layer : layers) {
    if (layer.size() < 2) throw std::invalid_argument("codebook: need at least two codes per layer");
    for (const Vec& e : layer) {
      if (e.size() != dim) throw std::invalid_argument("codebook: inconsistent code dimensions");
      if (!e.allFinite() || e.norm() > safe + 1e-12) {
        throw std::invalid_argument("codebook: code outside the safe ball");
      }
    }
  }
}

void HarqConfig::validate() const {
  if (feature_dim <= 0 || latent_dim <= 0) throw std::invalid_argument("config: dims must be positive");
  if (num_layers < 1) throw std::invalid_argument("config: need at least one layer");
  if (codes_per_layer < 2) throw std::invalid_argument("config: need at least two codes per layer");
  if (!(curvature > 0.0)) throw std::invalid_argument("config: curvature must be positive");
  if (!(length_threshold > 0.0 && length_threshold < 1.0)) {
    throw std::invalid_argument("config: length threshold must lie in (0,1)");
  }
  if (encoder_hidden <= 0 || gate_hidden <= 0 || decoder_hidden <= 0) {
    throw std::invalid_argument("config: hidden widths must be positive");
  }
}

void HarqModel::validate() const {
  config.validate();
  encoder.validate();
  gate.validate();
  decoder.validate();
  codebook.validate();
  if (encoder.input_dim() != config.feature_dim || encoder.output_dim() != config.latent_dim) {
    throw std::invalid_argument("model: encoder dimensions disagree with config");
  }
  if (gate.input_dim() != 2 * config.latent_dim || gate.output_dim() != 1) {
    throw std::invalid_argument("model: gate dimensions disagree with config");
  }
  if (decoder.input_dim() != config.latent_dim || decoder.output_dim() != config.feature_dim) {
    throw std::invalid_argument("model: decoder dimensions disagree with config");
  }
  if (codebook.num_layers() != config.num_layers ||
      codebook.codes_per_layer() != config.codes_per_layer ||
      codebook.latent_dim() != config.latent_dim || codebook.curvature != config.curvature) {
    throw std::invalid_argument("model: codebook shape disagrees with config");
  }
}

HarqModel make_model(const HarqConfig& config, uint64_t seed) {
  config.validate();
  HarqModel model;
  model.config = config;
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
  model.encoder = mlp::make_mlp({config.feature_dim, config.encoder_hidden, config.latent_dim}, rng);
  model.gate = mlp::make_mlp({2 * config.latent_dim, config.gate_hidden, 1}, rng);
  model.decoder = mlp::make_mlp({config.latent_dim, config.decoder_hidden, config.feature_dim}, rng);
  model.codebook.curvature = config.curvature;
  std::normal_distribution<double> gauss(0.0, 0.1);
  model.codebook.layers.assign(config.num_layers, {});
  for (auto& layer : model.codebook.layers) {
    layer.reserve(config.codes_per_layer);
    for (int m = 0; m < config.codes_per_layer; ++m) {
      Vec t(config.latent_dim);
      for (int k = 0; k < config.latent_dim; ++k) t[k] = gauss(rng);
      layer.push_back(geo::project_to_safe_ball(geo::exp_map_origin(t, config.curvature),
                                                config.curvature));
    }
  }
  model.validate();
  return model;
}

Vec encode(const Vec& features, const Mlp& encoder, double curvature) {
  if (!features.allFinite()) throw std::invalid_argument("encode: non-finite features");
  Vec tangent = mlp::forward(encoder, features);
  return geo::project_to_safe_ball(geo::exp_map_origin(tangent, curvature), curvature);
}

int nearest_code(const Vec& r, const std::vector<Vec>& layer_codes, double curvature) {
  if (layer_codes.empty()) throw std::invalid_argument("nearest_code: empty layer");
  int best = 0;
  double best_dist = geo::hyp_distance(r, layer_codes[0], curvature);
  for (int j = 1; j < static_cast<int>(layer_codes.size()); ++j) {
    const double dist = geo::hyp_distance(r, layer_codes[j], curvature);
    if (dist < best_dist) {
      best = j;
      best_dist = dist;
    }
  }
  return best;
}

Vec residual_step(const Vec& r_prev, const Vec& e_sel, double curvature) {
  return geo::project_to_safe_ball(
      geo::mobius_add(geo::mobius_neg(e_sel), r_prev, curvature), curvature);
}

double gate_probability(const Vec& r_prev, const Vec& e_sel, const Mlp& gate, double curvature) {
  const Vec u = geo::log_map_origin(r_prev, curvature);
  const Vec v = geo::log_map_origin(e_sel, curvature);
  if (u.size() + v.size() != gate.input_dim()) {
    throw std::invalid_argument("gate_probability: tangent dims do not match gate input");
  }
  Vec input(u.size() + v.size());
  input << u, v;
  const Vec logit = mlp::forward(gate, input);
  return mlp::sigmoid(logit[0]);
}

ForwardTrace forward(const Vec& features, const HarqModel& model) {
  const double c = model.config.curvature;
  const int K = model.codebook.num_layers();
  if (K < 1) throw std::invalid_argument("forward: codebook has no layers");

  ForwardTrace trace;
  trace.z0 = encode(features, model.encoder, c);
  trace.indices.reserve(K);
  trace.residuals.reserve(K);
  trace.gates.reserve(K);
  trace.masks.reserve(K);

  Vec r = trace.z0;
  Vec acc = Vec::Zero(trace.z0.size());
  double mask = 1.0;
  for (int l = 0; l < K; ++l) {
    const auto& layer = model.codebook.layers[l];
    const int idx = nearest_code(r, layer, c);
    const Vec& e = layer[idx];
    const double alpha = gate_probability(r, e, model.gate, c);
    mask *= alpha;
    acc = geo::project_to_safe_ball(geo::mobius_add(acc, geo::hyp_scale(mask, e, c), c), c);
    r = residual_step(r, e, c);
    trace.indices.push_back(idx);
    trace.residuals.push_back(r);
    trace.gates.push_back(alpha);
    trace.masks.push_back(mask);
  }
  trace.z_decoded = acc;
  trace.reconstruction = mlp::forward(model.decoder, geo::log_map_origin(acc, c));
  return trace;
}

int discretize_length(const std::vector<double>& masks, double threshold) {
  if (masks.empty()) throw std::invalid_argument("discretize_length: empty mask sequence");
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("discretize_length: threshold must lie in (0,1)");
  }
  int length = 0;
  for (double m : masks) {
    if (m >= threshold) {
      ++length;
    } else {
      break;
    }
  }
  return std::max(length, 1);
}

int discretize_length(const ForwardTrace& trace, double threshold) {
  return discretize_length(trace.masks, threshold);
}

}  // namespace vartok::harq
