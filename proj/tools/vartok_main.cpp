// Command-line front end for the tokenization pipeline. Stages read their
// inputs from, and write their outputs to, a data directory; config values
// resolve as defaults < stored/--config file < flags. Exit codes: 0 success,
// 1 stage failure, 2 invalid config or usage.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vartok/decoder.hpp"
#include "vartok/harness.hpp"
#include "vartok/id_registry.hpp"
#include "vartok/serialize.hpp"
#include "vartok/verify.hpp"

namespace {

namespace fs = std::filesystem;
namespace hn = vartok::harness;
namespace ser = vartok::serialize;
using vartok::harness::PipelineConfig;

std::optional<std::string> scan_value(int argc, char** argv, const std::string& flag) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == flag && i + 1 < argc) return std::string(argv[i + 1]);
    if (arg.rfind(flag + "=", 0) == 0) return arg.substr(flag.size() + 1);
  }
  return std::nullopt;
}

std::string artifact(const std::string& dir, const char* name) {
  return dir + "/" + name;
}

vartok::idreg::RawIds raw_ids_for(const PipelineConfig& cfg, const hn::ItemCatalog& catalog,
                                  const vartok::harq::HarqModel& model) {
  if (cfg.fixed_length > 0) {
    vartok::idreg::RawIds raw;
    raw.reserve(catalog.features.size());
    for (const auto& x : catalog.features) {
      raw.push_back(vartok::harq::forward(x, model).indices);
    }
    return raw;
  }
  return vartok::idreg::assign_raw_ids(catalog.features, model, cfg.tau);
}

int cmd_synth(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const hn::ItemCatalog catalog = hn::generate_catalog(cfg.catalog);
  const auto train_sessions = hn::generate_sessions(catalog, cfg.sessions);
  const auto eval_sessions = hn::generate_eval_sessions(catalog, cfg.sessions);
  fs::create_directories(dir);
  ser::write_config(artifact(dir, ser::files::config), cfg);
  ser::write_catalog(artifact(dir, ser::files::catalog), catalog);
  ser::write_sessions(artifact(dir, ser::files::sessions), train_sessions);
  ser::write_sessions(artifact(dir, ser::files::eval_sessions), eval_sessions);
  std::printf("synth: %d items, %zu train sessions, %zu eval sessions -> %s\n",
              cfg.catalog.num_items, train_sessions.size(), eval_sessions.size(),
              dir.c_str());
  return 0;
}

int cmd_piba(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const hn::ItemCatalog catalog = ser::read_catalog(artifact(dir, ser::files::catalog));
  std::vector<int> lengths;
  if (cfg.fixed_length > 0) {
    lengths.assign(catalog.popularity.size(), cfg.fixed_length);
  } else {
    lengths = vartok::piba::assign_lengths(vartok::piba::PopularityTable(catalog.popularity),
                                           cfg.piba)
                  .lengths;
  }
  ser::write_lengths(artifact(dir, ser::files::lengths), lengths, cfg.model.num_layers);
  std::vector<long> hist(cfg.model.num_layers + 1, 0);
  for (int len : lengths) hist[len] += 1;
  std::printf("piba: target lengths");
  for (std::size_t l = 1; l < hist.size(); ++l) {
    if (hist[l] > 0) std::printf(" %zu:%ld", l, hist[l]);
  }
  std::printf(" (layers:items)\n");
  return 0;
}

int cmd_train(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const hn::ItemCatalog catalog = ser::read_catalog(artifact(dir, ser::files::catalog));
  const auto [lengths, max_len] = ser::read_lengths(artifact(dir, ser::files::lengths));
  if (max_len != cfg.model.num_layers) {
    throw std::invalid_argument("stored lengths use max_len " + std::to_string(max_len) +
                                " but the model has " + std::to_string(cfg.model.num_layers) +
                                " layers");
  }
  if (lengths.size() != catalog.features.size()) {
    throw std::runtime_error("length table does not cover the catalog");
  }
  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(lengths.size());
  for (int len : lengths) masks.push_back(vartok::piba::target_mask(len, max_len));

  vartok::training::TrainConfig tc = cfg.train;
  if (cfg.fixed_length > 0) {
    tc.pin_gates_open = true;
    tc.weights.lambda_len = 0.0;
    tc.weights.lambda_cost = 0.0;
  }
  const auto result = vartok::training::train(catalog.features, masks, cfg.model, tc);
  ser::write_checkpoint(artifact(dir, ser::files::checkpoint), result.model);
  ser::write_loss_curve(artifact(dir, ser::files::loss_curve), result.history);
  if (!result.history.empty()) {
    std::printf("train: %zu epochs, total loss %.6f -> %.6f\n", result.history.size(),
                result.history.front().total, result.history.back().total);
  }
  return 0;
}

int cmd_assign(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const hn::ItemCatalog catalog = ser::read_catalog(artifact(dir, ser::files::catalog));
  const auto model = ser::read_checkpoint(artifact(dir, ser::files::checkpoint));
  const vartok::idreg::RawIds raw = raw_ids_for(cfg, catalog, model);
  const double pre = vartok::idreg::collision_rate(raw);
  const vartok::idreg::IdTable table =
      vartok::idreg::resolve_collisions(raw, cfg.model.codes_per_layer);
  vartok::idreg::write_id_table(artifact(dir, ser::files::id_table), table);
  std::printf("assign: %zu ids, raw collision rate %.4f, %ld items disambiguated\n",
              table.ids.size(), pre, table.collision_count);
  return 0;
}

int cmd_decode(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const auto table = vartok::idreg::read_id_table(artifact(dir, ser::files::id_table));
  const auto train_sessions = ser::read_sessions(artifact(dir, ser::files::sessions));
  const auto eval_sessions = ser::read_sessions(artifact(dir, ser::files::eval_sessions));
  const auto trie = vartok::decoder::build_trie(table);
  vartok::decoder::MarkovModel scorer(table.eos_token() + 1);
  scorer.fit(hn::render_streams(train_sessions, table));

  std::vector<hn::DecodeOutcome> outcomes;
  long hits = 0;
  for (const hn::Session& session : eval_sessions) {
    if (session.empty()) continue;
    std::vector<std::vector<int>> history;
    for (std::size_t i = 0; i + 1 < session.size(); ++i) {
      history.push_back(table.ids.at(session[i]).tokens);
    }
    const auto ranked = vartok::decoder::rank_items(history, scorer, table, trie,
                                                    cfg.beam_width, cfg.topk);
    hn::DecodeOutcome outcome;
    outcome.target = session.back();
    for (const auto& r : ranked) outcome.top_items.push_back(r.item);
    for (long item : outcome.top_items) {
      if (item == outcome.target) {
        ++hits;
        break;
      }
    }
    outcomes.push_back(std::move(outcome));
  }
  ser::write_outcomes(artifact(dir, ser::files::outcomes), outcomes);
  std::printf("decode: %zu targets, hit@%d %.4f\n", outcomes.size(), cfg.topk,
              outcomes.empty() ? 0.0 : static_cast<double>(hits) / outcomes.size());
  return 0;
}

int cmd_report(const PipelineConfig& cfg, const std::string& dir) {
  cfg.validate();
  const hn::ItemCatalog catalog = ser::read_catalog(artifact(dir, ser::files::catalog));
  const auto table = vartok::idreg::read_id_table(artifact(dir, ser::files::id_table));
  const auto outcomes = ser::read_outcomes(artifact(dir, ser::files::outcomes));
  const auto model = ser::read_checkpoint(artifact(dir, ser::files::checkpoint));

  std::vector<double> recon_errors;
  recon_errors.reserve(catalog.features.size());
  for (const auto& x : catalog.features) {
    recon_errors.push_back(
        (x - vartok::harq::forward(x, model).reconstruction).squaredNorm());
  }
  hn::ExperimentReport report =
      hn::stratified_report(table, catalog, outcomes, recon_errors);
  report.collision_rate_pre =
      vartok::idreg::collision_rate(raw_ids_for(cfg, catalog, model));
  report.loss_curve = ser::read_loss_curve(artifact(dir, ser::files::loss_curve));
  // Staged runs do not carry wall-clock timings; in-process pipeline runs do.
  ser::write_report_csv(artifact(dir, ser::files::report_csv), report);
  ser::write_report_summary(artifact(dir, ser::files::report_text), report);
  std::printf("report: mean length %.3f, hit rates head %.4f body %.4f tail %.4f -> %s\n",
              report.mean_length, report.head.hit_rate, report.body.hit_rate,
              report.tail.hit_rate, artifact(dir, ser::files::report_text).c_str());
  return 0;
}

int cmd_verify(const PipelineConfig& cfg) {
  const vartok::verify::VerifyReport report = vartok::verify::verify_suite(cfg.train.seed);
  for (const auto& check : report.checks) {
    std::printf("[%s] %s: %s\n", check.passed ? "PASS" : "FAIL", check.name.c_str(),
                check.detail.c_str());
  }
  std::printf("%zu checks, %d failed\n", report.checks.size(), report.failures());
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::string data_dir = "./data";
  if (const char* env = std::getenv("VARTOK_DATA_DIR")) data_dir = env;
  if (const auto flag = scan_value(argc, argv, "--data-dir")) data_dir = *flag;

  // The config file must be applied before flag parsing so flags win.
  PipelineConfig cfg;
  try {
    if (const auto flag = scan_value(argc, argv, "--config")) {
      cfg = ser::read_config(*flag);
    } else if (const std::string stored = artifact(data_dir, ser::files::config);
               fs::exists(stored)) {
      cfg = ser::read_config(stored);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  }

  CLI::App app{"variable-length semantic id pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (defaults < file < flags)");
  app.add_option("--data-dir", data_dir,
                 "artifact directory (default $VARTOK_DATA_DIR or ./data)");

  auto* opt_feature_dim = app.add_option("--feature-dim", cfg.catalog.feature_dim,
                                         "item feature width (catalog and model)");
  app.add_option("--num-items", cfg.catalog.num_items, "catalog size");
  app.add_option("--zipf-exponent", cfg.catalog.zipf_exponent, "popularity skew (0 = uniform)");
  app.add_option("--tree-branching", cfg.catalog.tree_branching, "content tree arity");
  app.add_option("--tree-depth", cfg.catalog.tree_depth, "content tree depth");
  app.add_option("--feature-noise", cfg.catalog.feature_noise, "per-item feature noise sigma");
  app.add_option("--catalog-seed", cfg.catalog.seed, "catalog generation seed");

  app.add_option("--num-sessions", cfg.sessions.num_sessions, "training sessions");
  app.add_option("--min-session-length", cfg.sessions.min_length, "shortest session");
  app.add_option("--max-session-length", cfg.sessions.max_length, "longest session");
  app.add_option("--locality", cfg.sessions.locality, "tree-neighborhood draw probability");
  app.add_option("--eval-per-tier", cfg.sessions.eval_per_tier, "held-out targets per tier");
  app.add_option("--session-seed", cfg.sessions.seed, "session generation seed");

  app.add_option("--latent-dim", cfg.model.latent_dim, "ball dimension");
  auto* opt_layers = app.add_option(
      "--num-layers", cfg.model.num_layers,
      "quantizer layers K (also sets the budget max length unless --piba-max-len is given)");
  app.add_option("--codes-per-layer", cfg.model.codes_per_layer, "codewords per layer M");
  app.add_option("--curvature", cfg.model.curvature, "ball curvature c");
  app.add_option("--length-threshold", cfg.model.length_threshold,
                 "mask threshold inside the model");
  app.add_option("--encoder-hidden", cfg.model.encoder_hidden, "encoder hidden width");
  app.add_option("--gate-hidden", cfg.model.gate_hidden, "gate hidden width");
  app.add_option("--decoder-hidden", cfg.model.decoder_hidden, "decoder hidden width");

  app.add_option("--epochs", cfg.train.epochs, "training epochs");
  app.add_option("--batch-size", cfg.train.batch_size, "items per batch");
  app.add_option("--learning-rate", cfg.train.adam.learning_rate, "Adam learning rate");
  app.add_option("--beta1", cfg.train.adam.beta1, "Adam first-moment decay");
  app.add_option("--beta2", cfg.train.adam.beta2, "Adam second-moment decay");
  app.add_option("--adam-epsilon", cfg.train.adam.epsilon, "Adam denominator floor");
  app.add_option("--lambda-cost", cfg.train.weights.lambda_cost, "token cost weight");
  app.add_option("--lambda-len", cfg.train.weights.lambda_len, "length target weight");
  app.add_option("--beta-commit", cfg.train.weights.beta_commit, "commitment weight");
  app.add_option("--train-seed", cfg.train.seed, "training seed");
  app.add_flag("--kmeans-init,!--no-kmeans-init", cfg.train.use_kmeans_init,
               "k-means codebook initialization");
  app.add_flag("--reset-dead,!--no-reset-dead", cfg.train.reset_dead,
               "re-seed unused codewords each epoch");
  app.add_flag("--pin-gates-open,!--no-pin-gates-open", cfg.train.pin_gates_open,
               "bypass gates (every layer kept)");

  app.add_option("--piba-alpha", cfg.piba.alpha, "collaborative info rate");
  app.add_option("--piba-theta", cfg.piba.theta, "popularity scale");
  app.add_option("--piba-gamma", cfg.piba.gamma, "per-layer capacity");
  app.add_option("--piba-i-req", cfg.piba.i_req, "required information budget");
  app.add_option("--piba-beta", cfg.piba.beta, "quantile temperature");
  auto* opt_piba_max = app.add_option("--piba-max-len", cfg.piba.max_len,
                                      "budget max length (must equal --num-layers)");

  app.add_option("--tau", cfg.tau, "gate threshold at assignment");
  app.add_option("--beam-width", cfg.beam_width, "constrained beam width");
  app.add_option("--topk", cfg.topk, "ranked list size");
  app.add_option("--fixed-length", cfg.fixed_length,
                 "fixed-length ablation (0 = variable-length pipeline)");

  CLI::App* sub_synth = app.add_subcommand("synth", "generate catalog and sessions");
  CLI::App* sub_piba = app.add_subcommand("piba", "allocate per-item length budgets");
  CLI::App* sub_train = app.add_subcommand("train", "train the quantizer");
  CLI::App* sub_assign = app.add_subcommand("assign", "assign and deduplicate ids");
  CLI::App* sub_decode = app.add_subcommand("decode", "decode held-out targets");
  CLI::App* sub_report = app.add_subcommand("report", "stratified metrics report");
  CLI::App* sub_verify = app.add_subcommand("verify", "run the invariant check battery");
  for (CLI::App* sub : {sub_synth, sub_piba, sub_train, sub_assign, sub_decode, sub_report,
                        sub_verify}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (opt_feature_dim->count() > 0) cfg.model.feature_dim = cfg.catalog.feature_dim;
  if (opt_layers->count() > 0 && opt_piba_max->count() == 0) {
    cfg.piba.max_len = cfg.model.num_layers;
  }

  try {
    if (sub_synth->parsed()) return cmd_synth(cfg, data_dir);
    if (sub_piba->parsed()) return cmd_piba(cfg, data_dir);
    if (sub_train->parsed()) return cmd_train(cfg, data_dir);
    if (sub_assign->parsed()) return cmd_assign(cfg, data_dir);
    if (sub_decode->parsed()) return cmd_decode(cfg, data_dir);
    if (sub_report->parsed()) return cmd_report(cfg, data_dir);
    if (sub_verify->parsed()) return cmd_verify(cfg);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;  // unreachable with require_subcommand(1)
}
