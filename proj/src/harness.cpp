#include "vartok/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "vartok/decoder.hpp"
#include "vartok/serialize.hpp"

namespace vartok::harness {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// 53-bit uniform in [0,1); hand-rolled so artifacts are byte-stable.
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gauss(std::mt19937_64& rng) {
  double u = 0.0;
  do {
    u = u01(rng);
  } while (u <= 0.0);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(kTwoPi * u01(rng));
}

Vec gauss_vec(int dim, std::mt19937_64& rng) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
  return v;
}

// Index drawn proportionally to the weights behind a cumulative sum.
std::size_t draw(const std::vector<double>& cumulative, std::mt19937_64& rng) {
  const double u = u01(rng) * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
}

std::vector<double> cumulative_sum(const std::vector<double>& weights) {
  std::vector<double> cumulative(weights.size());
  double running = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    running += weights[i];
    cumulative[i] = running;
  }
  return cumulative;
}

// Items grouped by their leaf's parent node: the session locality pool.
struct NeighborhoodIndex {
  std::vector<std::vector<long>> members;     // group -> items
  std::vector<std::vector<double>> cumulative;  // group -> popularity cumsum
  std::vector<int> group_of_item;

  NeighborhoodIndex(const ItemCatalog& catalog) {
    const int branching = catalog.spec.tree_branching;
    const long groups = (catalog.num_leaves() + branching - 1) / branching;
    members.resize(groups);
    group_of_item.resize(catalog.popularity.size());
    for (std::size_t i = 0; i < catalog.popularity.size(); ++i) {
      const int g = catalog.leaf[i] / branching;
      group_of_item[i] = g;
      members[g].push_back(static_cast<long>(i));
    }
    cumulative.resize(groups);
    for (long g = 0; g < groups; ++g) {
      std::vector<double> weights;
      weights.reserve(members[g].size());
      for (long item : members[g]) weights.push_back(catalog.popularity[item]);
      cumulative[g] = cumulative_sum(weights);
    }
  }
};

Session sample_session(const SessionSpec& spec,
                       const std::vector<double>& global_cumulative,
                       const NeighborhoodIndex& neighborhoods, std::mt19937_64& rng) {
  const int span = spec.max_length - spec.min_length + 1;
  const int length =
      spec.min_length + std::min(span - 1, static_cast<int>(u01(rng) * span));
  Session session;
  session.reserve(length);
  session.push_back(static_cast<long>(draw(global_cumulative, rng)));
  while (static_cast<int>(session.size()) < length) {
    const long current = session.back();
    long next = current;
    for (int attempt = 0; attempt < 4 && next == current; ++attempt) {
      if (u01(rng) < spec.locality) {
        const int g = neighborhoods.group_of_item[current];
        next = neighborhoods.members[g][draw(neighborhoods.cumulative[g], rng)];
      } else {
        next = static_cast<long>(draw(global_cumulative, rng));
      }
    }
    session.push_back(next);
  }
  return session;
}

template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void CatalogSpec::validate() const {
  if (num_items < 2) throw std::invalid_argument("catalog needs at least 2 items");
  if (!(zipf_exponent >= 0.0)) throw std::invalid_argument("zipf exponent must be >= 0");
  if (tree_branching < 2) throw std::invalid_argument("tree branching must be >= 2");
  if (tree_depth < 1) throw std::invalid_argument("tree depth must be >= 1");
  if (!(feature_noise >= 0.0)) throw std::invalid_argument("feature noise must be >= 0");
  if (feature_dim < 1) throw std::invalid_argument("feature dim must be >= 1");
  const double leaves = std::pow(static_cast<double>(tree_branching), tree_depth);
  if (leaves > 1e6) throw std::invalid_argument("content tree exceeds 10^6 leaves");
}

long ItemCatalog::num_leaves() const {
  long leaves = 1;
  for (int level = 0; level < spec.tree_depth; ++level) leaves *= spec.tree_branching;
  return leaves;
}

ItemCatalog generate_catalog(const CatalogSpec& spec) {
  spec.validate();
  ItemCatalog catalog;
  catalog.spec = spec;
  const int n = spec.num_items;

  catalog.popularity.resize(n);
  double mass = 0.0;
  for (int i = 0; i < n; ++i) {
    catalog.popularity[i] = std::pow(static_cast<double>(i + 1), -spec.zipf_exponent);
    mass += catalog.popularity[i];
  }
  for (double& p : catalog.popularity) p /= mass;

  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x5851f42d4c957f2dull);

  // Level-by-level node embeddings: each child offsets its parent at a scale
  // that halves per level, so siblings cluster and subtrees nest.
  std::vector<Vec> parent_level{Vec::Zero(spec.feature_dim)};
  double scale = 1.0;
  for (int level = 1; level <= spec.tree_depth; ++level) {
    std::vector<Vec> child_level(parent_level.size() * spec.tree_branching);
    for (std::size_t j = 0; j < child_level.size(); ++j) {
      child_level[j] =
          parent_level[j / spec.tree_branching] + scale * gauss_vec(spec.feature_dim, rng);
    }
    parent_level = std::move(child_level);
    scale *= 0.5;
  }

  const long leaves = catalog.num_leaves();
  catalog.leaf.resize(n);
  catalog.features.resize(n);
  for (int i = 0; i < n; ++i) {
    catalog.leaf[i] = static_cast<int>(static_cast<long>(i) * leaves / n);
    catalog.features[i] =
        parent_level[catalog.leaf[i]] + spec.feature_noise * gauss_vec(spec.feature_dim, rng);
  }
  return catalog;
}

void SessionSpec::validate() const {
  if (num_sessions < 1) throw std::invalid_argument("need at least one session");
  if (min_length < 2) throw std::invalid_argument("sessions need a history item and a target");
  if (max_length < min_length) throw std::invalid_argument("max session length < min");
  if (!(locality >= 0.0 && locality <= 1.0)) {
    throw std::invalid_argument("locality must lie in [0,1]");
  }
  if (eval_per_tier < 1) throw std::invalid_argument("eval quota must be >= 1");
}

std::vector<Session> generate_sessions(const ItemCatalog& catalog, const SessionSpec& spec) {
  spec.validate();
  const std::vector<double> global_cumulative = cumulative_sum(catalog.popularity);
  const NeighborhoodIndex neighborhoods(catalog);
  std::mt19937_64 rng(spec.seed ^ 0xd1b54a32d192ed03ull);
  std::vector<Session> sessions;
  sessions.reserve(spec.num_sessions);
  for (int s = 0; s < spec.num_sessions; ++s) {
    sessions.push_back(
        sample_session(spec, global_cumulative, neighborhoods, rng));
  }
  return sessions;
}

std::vector<Session> generate_eval_sessions(const ItemCatalog& catalog,
                                            const SessionSpec& spec) {
  spec.validate();
  const std::vector<double> global_cumulative = cumulative_sum(catalog.popularity);
  const NeighborhoodIndex neighborhoods(catalog);
  const std::vector<Tier> tiers = assign_tiers(catalog.popularity);
  std::mt19937_64 rng(spec.seed ^ 0x94d049bb133111ebull);

  std::map<Tier, int> open = {{Tier::head, spec.eval_per_tier},
                              {Tier::body, spec.eval_per_tier},
                              {Tier::tail, spec.eval_per_tier}};
  std::vector<Session> held_out;
  const long max_attempts = 600L * spec.eval_per_tier;
  for (long attempt = 0; attempt < max_attempts; ++attempt) {
    if (open[Tier::head] == 0 && open[Tier::body] == 0 && open[Tier::tail] == 0) break;
    Session session =
        sample_session(spec, global_cumulative, neighborhoods, rng);
    int& quota = open[tiers[session.back()]];
    if (quota > 0) {
      quota -= 1;
      held_out.push_back(std::move(session));
    }
  }
  return held_out;
}

std::vector<std::vector<int>> render_streams(const std::vector<Session>& sessions,
                                             const idreg::IdTable& table) {
  std::vector<std::vector<int>> streams;
  streams.reserve(sessions.size());
  for (const Session& session : sessions) {
    std::vector<int> stream;
    for (long item : session) {
      if (item < 0 || item >= static_cast<long>(table.ids.size())) {
        throw std::invalid_argument("session item " + std::to_string(item) +
                                    " outside the id table");
      }
      const auto& tokens = table.ids[item].tokens;
      stream.insert(stream.end(), tokens.begin(), tokens.end());
    }
    streams.push_back(std::move(stream));
  }
  return streams;
}

std::vector<Tier> assign_tiers(const std::vector<double>& popularity) {
  const piba::PopularityTable ranked(popularity);
  const int n = ranked.size();
  const int edge = n / 5;  // head and tail sizes; the body absorbs rounding
  std::vector<Tier> tiers(n, Tier::body);
  for (int i = 0; i < n; ++i) {
    const int r = ranked.rank(i);
    if (r < edge) {
      tiers[i] = Tier::head;
    } else if (r >= n - edge) {
      tiers[i] = Tier::tail;
    }
  }
  return tiers;
}

ExperimentReport stratified_report(const idreg::IdTable& table, const ItemCatalog& catalog,
                                   const std::vector<DecodeOutcome>& outcomes,
                                   const std::vector<double>& recon_errors) {
  const std::size_t n = catalog.popularity.size();
  if (table.ids.size() != n || recon_errors.size() != n) {
    throw std::invalid_argument("table, catalog, and reconstruction errors disagree on N");
  }
  const std::vector<Tier> tiers = assign_tiers(catalog.popularity);

  ExperimentReport report;
  report.length_histogram.assign(table.length_histogram.begin(),
                                 table.length_histogram.end());
  std::map<Tier, TierMetrics> metrics;
  double total_length = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TierMetrics& m = metrics[tiers[i]];
    const int len = idreg::main_length(table.ids[i], table.codes_per_layer);
    m.items += 1;
    m.recon_error += recon_errors[i];
    m.mean_length += len;
    total_length += len;
  }
  for (const DecodeOutcome& outcome : outcomes) {
    if (outcome.target < 0 || outcome.target >= static_cast<long>(n)) {
      throw std::invalid_argument("decode target outside the catalog");
    }
    TierMetrics& m = metrics[tiers[outcome.target]];
    m.eval_targets += 1;
    const bool hit = std::find(outcome.top_items.begin(), outcome.top_items.end(),
                               outcome.target) != outcome.top_items.end();
    if (hit) m.hit_rate += 1.0;
  }
  for (auto& [tier, m] : metrics) {
    if (m.items > 0) {
      m.recon_error /= m.items;
      m.mean_length /= m.items;
    }
    if (m.eval_targets > 0) m.hit_rate /= m.eval_targets;
  }
  report.head = metrics[Tier::head];
  report.body = metrics[Tier::body];
  report.tail = metrics[Tier::tail];
  report.mean_length = total_length / static_cast<double>(n);

  idreg::RawIds full_ids;
  full_ids.reserve(n);
  for (const auto& id : table.ids) full_ids.push_back(id.tokens);
  report.collision_rate_post = idreg::collision_rate(full_ids);
  return report;
}

void PipelineConfig::validate() const {
  catalog.validate();
  sessions.validate();
  model.validate();
  train.validate();
  if (model.feature_dim != catalog.feature_dim) {
    throw std::invalid_argument("model feature_dim does not match the catalog");
  }
  if (fixed_length == 0) {
    piba.validate();
    if (piba.max_len != model.num_layers) {
      throw std::invalid_argument("budget max_len must equal the model layer count");
    }
  } else if (fixed_length != model.num_layers) {
    throw std::invalid_argument("fixed_length must equal the model layer count");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  if (beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (topk < 1) throw std::invalid_argument("topk must be >= 1");
}

ExperimentReport run_pipeline(const PipelineConfig& config, const std::string& data_dir) {
  config.validate();
  std::filesystem::create_directories(data_dir);
  const auto path = [&](const char* name) { return data_dir + "/" + name; };
  const auto started = std::chrono::steady_clock::now();

  ItemCatalog catalog;
  std::vector<Session> train_sessions;
  std::vector<Session> eval_sessions;
  stage("synth", [&] {
    catalog = generate_catalog(config.catalog);
    train_sessions = generate_sessions(catalog, config.sessions);
    eval_sessions = generate_eval_sessions(catalog, config.sessions);
    serialize::write_config(path(serialize::files::config), config);
    serialize::write_catalog(path(serialize::files::catalog), catalog);
    serialize::write_sessions(path(serialize::files::sessions), train_sessions);
    serialize::write_sessions(path(serialize::files::eval_sessions), eval_sessions);
  });

  std::vector<int> lengths;
  stage("piba", [&] {
    if (config.fixed_length > 0) {
      lengths.assign(catalog.popularity.size(), config.fixed_length);
    } else {
      lengths = piba::assign_lengths(piba::PopularityTable(catalog.popularity),
                                     config.piba)
                    .lengths;
    }
    serialize::write_lengths(path(serialize::files::lengths), lengths,
                             config.model.num_layers);
  });

  training::TrainResult trained;
  double train_seconds = 0.0;
  stage("train", [&] {
    std::vector<std::vector<std::uint8_t>> masks;
    masks.reserve(lengths.size());
    for (int len : lengths) masks.push_back(piba::target_mask(len, config.model.num_layers));
    training::TrainConfig tc = config.train;
    if (config.fixed_length > 0) {
      tc.pin_gates_open = true;
      tc.weights.lambda_len = 0.0;
      tc.weights.lambda_cost = 0.0;
    }
    const auto train_started = std::chrono::steady_clock::now();
    trained = training::train(catalog.features, masks, config.model, tc);
    train_seconds = seconds_since(train_started);
    serialize::write_checkpoint(path(serialize::files::checkpoint), trained.model);
    serialize::write_loss_curve(path(serialize::files::loss_curve), trained.history);
  });

  idreg::IdTable table;
  double collision_pre = 0.0;
  stage("assign", [&] {
    idreg::RawIds raw;
    if (config.fixed_length > 0) {
      raw.reserve(catalog.features.size());
      for (const Vec& x : catalog.features) {
        raw.push_back(harq::forward(x, trained.model).indices);  // every layer kept
      }
    } else {
      raw = idreg::assign_raw_ids(catalog.features, trained.model, config.tau);
    }
    collision_pre = idreg::collision_rate(raw);
    table = idreg::resolve_collisions(raw, config.model.codes_per_layer);
    idreg::write_id_table(path(serialize::files::id_table), table);
  });

  std::vector<DecodeOutcome> outcomes;
  stage("decode", [&] {
    const decoder::Trie trie = decoder::build_trie(table);
    decoder::MarkovModel scorer(2 * config.model.codes_per_layer + 1);
    scorer.fit(render_streams(train_sessions, table));
    outcomes.reserve(eval_sessions.size());
    for (const Session& session : eval_sessions) {
      std::vector<std::vector<int>> history;
      for (std::size_t i = 0; i + 1 < session.size(); ++i) {
        history.push_back(table.ids[session[i]].tokens);
      }
      const auto ranked = decoder::rank_items(history, scorer, table, trie,
                                              config.beam_width, config.topk);
      DecodeOutcome outcome;
      outcome.target = session.back();
      for (const auto& r : ranked) outcome.top_items.push_back(r.item);
      outcomes.push_back(std::move(outcome));
    }
    serialize::write_outcomes(path(serialize::files::outcomes), outcomes);
  });

  ExperimentReport report;
  stage("report", [&] {
    std::vector<double> recon_errors;
    recon_errors.reserve(catalog.features.size());
    for (const Vec& x : catalog.features) {
      const harq::ForwardTrace trace = harq::forward(x, trained.model);
      recon_errors.push_back((x - trace.reconstruction).squaredNorm());
    }
    report = stratified_report(table, catalog, outcomes, recon_errors);
    report.collision_rate_pre = collision_pre;
    report.loss_curve = trained.history;
    report.train_seconds = train_seconds;
    report.total_seconds = seconds_since(started);
    serialize::write_report_csv(path(serialize::files::report_csv), report);
    serialize::write_report_summary(path(serialize::files::report_text), report);
  });
  return report;
}

}  // namespace vartok::harness
