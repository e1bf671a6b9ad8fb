#pragma once

// Synthetic catalog and session generation plus end-to-end experiment
// orchestration: allocate length budgets, train the quantizer, assign and
// resolve ids, fit the toy sequence scorer, decode held-out targets, and
// assemble a stratified report. Every stage persists its artifact so runs
// can be resumed or inspected stage by stage.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "vartok/harq.hpp"
#include "vartok/id_registry.hpp"
#include "vartok/piba.hpp"
#include "vartok/training.hpp"

namespace vartok::harness {

using Vec = Eigen::VectorXd;
using Session = std::vector<long>;  // item indices in visit order

struct CatalogSpec {
  int num_items = 200;
  double zipf_exponent = 1.0;  // 0 gives uniform popularity
  int tree_branching = 4;      // content tree arity
  int tree_depth = 3;
  double feature_noise = 0.05;  // isotropic sigma around the leaf embedding
  int feature_dim = 16;
  std::uint64_t seed = 0;

  // num_items >= 2, zipf_exponent >= 0, branching >= 2, depth >= 1,
  // noise >= 0, feature_dim >= 1, and at most 10^6 leaves.
  void validate() const;
};

// Items are stored in popularity rank order: index 0 is the most popular.
struct ItemCatalog {
  CatalogSpec spec;
  std::vector<double> popularity;  // normalized, descending
  std::vector<int> leaf;           // content-tree leaf of each item
  std::vector<Vec> features;

  long num_leaves() const;
};

// Popularity p_i proportional to 1/(rank+1)^s; features are the leaf-path
// embedding of the item's content-tree leaf plus Gaussian noise. Leaves are
// assigned in rank order, so popularity bands share tree regions.
// Deterministic per seed.
ItemCatalog generate_catalog(const CatalogSpec& spec);

struct SessionSpec {
  int num_sessions = 400;
  int min_length = 3;
  int max_length = 8;
  // Probability that the next item is drawn from the current item's
  // content-tree neighborhood (leaves sharing a parent) instead of globally.
  double locality = 0.7;
  int eval_per_tier = 40;  // held-out target quota per popularity tier
  std::uint64_t seed = 1;

  void validate() const;
};

// Popularity-weighted item walks with tree-locality bias. Deterministic per
// seed and catalog.
std::vector<Session> generate_sessions(const ItemCatalog& catalog, const SessionSpec& spec);

// Held-out sessions generated by the same process, kept until each
// popularity tier holds (up to) eval_per_tier sessions whose final item
// falls in that tier. The final item is the decode target.
std::vector<Session> generate_eval_sessions(const ItemCatalog& catalog,
                                            const SessionSpec& spec);

// Sessions rendered as token streams: the concatenated id token sequences
// (end tokens included) of the visited items.
std::vector<std::vector<int>> render_streams(const std::vector<Session>& sessions,
                                             const idreg::IdTable& table);

// Popularity tiers: top 20% (head), middle 60% (body), bottom 20% (tail) by
// rank, ties broken by item index. Head and tail sizes are floor(N/5); the
// body takes the remainder, so the three tiers partition the catalog.
enum class Tier { head, body, tail };
std::vector<Tier> assign_tiers(const std::vector<double>& popularity);

struct DecodeOutcome {
  long target = -1;
  std::vector<long> top_items;  // ranked item ids, best first
};

struct TierMetrics {
  long items = 0;
  long eval_targets = 0;
  double recon_error = 0.0;  // mean squared reconstruction error
  double hit_rate = 0.0;     // fraction of eval targets inside top_items
  double mean_length = 0.0;  // mean assigned main-token count
};

struct ExperimentReport {
  double collision_rate_pre = 0.0;
  double collision_rate_post = 0.0;
  std::vector<long> length_histogram;  // index = main-token count
  double mean_length = 0.0;
  TierMetrics head, body, tail;
  std::vector<training::LossBreakdown> loss_curve;
  double train_seconds = 0.0;
  double total_seconds = 0.0;
};

// Per-tier aggregation of assigned lengths, reconstruction errors, and
// decode hits. recon_errors holds one squared error per item.
ExperimentReport stratified_report(const idreg::IdTable& table, const ItemCatalog& catalog,
                                   const std::vector<DecodeOutcome>& outcomes,
                                   const std::vector<double>& recon_errors);

struct PipelineConfig {
  CatalogSpec catalog;
  SessionSpec sessions;
  harq::HarqConfig model;
  training::TrainConfig train;
  piba::PibaParams piba;
  double tau = 0.5;    // gate threshold at assignment time
  int beam_width = 30;
  int topk = 10;
  // 0 runs the variable-length pipeline. A positive value (equal to
  // model.num_layers) runs the fixed-length ablation: gates pinned open,
  // length losses off, every id gets all layers.
  int fixed_length = 0;

  void validate() const;
};

// Runs catalog -> budgets -> training -> assignment -> resolution -> scorer
// -> decoding -> report, persisting each stage's artifact under data_dir.
// Stage failures rethrow as std::runtime_error prefixed "stage <name>:".
ExperimentReport run_pipeline(const PipelineConfig& config, const std::string& data_dir);

}  // namespace vartok::harness
