#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "vartok/harness.hpp"
#include "vartok/harq.hpp"
#include "vartok/id_registry.hpp"
#include "vartok/serialize.hpp"
#include "vartok/verify.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace harness = vartok::harness;
namespace harq = vartok::harq;
namespace idreg = vartok::idreg;
namespace serialize = vartok::serialize;
namespace verify = vartok::verify;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory under the system temp root.
std::string scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

harness::CatalogSpec small_catalog_spec() {
  harness::CatalogSpec spec;
  spec.num_items = 40;
  spec.zipf_exponent = 1.0;
  spec.tree_branching = 3;
  spec.tree_depth = 2;
  spec.feature_noise = 0.05;
  spec.feature_dim = 8;
  spec.seed = 7;
  return spec;
}

// Small but complete end-to-end configuration. The strong length penalty
// and raised learning rate make assigned lengths track the budgets within
// a fraction of a second of training.
harness::PipelineConfig small_pipeline_config() {
  harness::PipelineConfig cfg;
  cfg.catalog = small_catalog_spec();
  cfg.catalog.seed = 0;
  cfg.sessions.num_sessions = 60;
  cfg.sessions.eval_per_tier = 5;
  cfg.model.feature_dim = cfg.catalog.feature_dim;
  cfg.model.latent_dim = 6;
  cfg.model.num_layers = 4;
  cfg.model.codes_per_layer = 24;
  cfg.model.encoder_hidden = 16;
  cfg.model.gate_hidden = 12;
  cfg.model.decoder_hidden = 16;
  cfg.train.epochs = 50;
  cfg.train.batch_size = 16;
  cfg.train.adam.learning_rate = 1e-2;
  cfg.train.weights.lambda_len = 1000.0;
  cfg.piba.max_len = cfg.model.num_layers;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VARTOK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("popularity follows the zipf law") {
  harness::CatalogSpec spec;
  spec.num_items = 4;
  spec.zipf_exponent = 1.0;
  spec.tree_branching = 2;
  spec.tree_depth = 1;
  spec.feature_dim = 4;
  const auto cat = harness::generate_catalog(spec);
  REQUIRE(cat.popularity.size() == 4);
  CHECK(std::abs(cat.popularity[0] - 12.0 / 25.0) < 1e-15);
  CHECK(std::abs(cat.popularity[1] - 6.0 / 25.0) < 1e-15);
  CHECK(std::abs(cat.popularity[2] - 4.0 / 25.0) < 1e-15);
  CHECK(std::abs(cat.popularity[3] - 3.0 / 25.0) < 1e-15);

  spec.zipf_exponent = 0.0;
  const auto flat = harness::generate_catalog(spec);
  for (double p : flat.popularity) CHECK(p == 0.25);
}

TEST_CASE("catalog generation is deterministic and validates its spec") {
  const auto spec = small_catalog_spec();
  const auto a = harness::generate_catalog(spec);
  const auto b = harness::generate_catalog(spec);
  REQUIRE(a.features.size() == b.features.size());
  CHECK(a.popularity == b.popularity);
  CHECK(a.leaf == b.leaf);
  for (std::size_t i = 0; i < a.features.size(); ++i)
    CHECK((a.features[i].array() == b.features[i].array()).all());

  auto other = spec;
  other.seed = spec.seed + 1;
  const auto c = harness::generate_catalog(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.features.size() && !any_diff; ++i)
    any_diff = !(a.features[i].array() == c.features[i].array()).all();
  CHECK(any_diff);

  CHECK(a.num_leaves() == 9);
  for (int leaf : a.leaf) {
    CHECK(leaf >= 0);
    CHECK(leaf < 9);
  }

  auto bad = spec;
  bad.num_items = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.tree_branching = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.tree_depth = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.feature_noise = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.zipf_exponent = -0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.tree_branching = 10;
  bad.tree_depth = 7;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("items sharing a leaf sit closer in feature space") {
  const auto cat = harness::generate_catalog(small_catalog_spec());
  double intra = 0.0, inter = 0.0;
  long n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < cat.features.size(); ++i) {
    for (std::size_t j = i + 1; j < cat.features.size(); ++j) {
      const double d = (cat.features[i] - cat.features[j]).norm();
      if (cat.leaf[i] == cat.leaf[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  REQUIRE(n_intra > 0);
  REQUIRE(n_inter > 0);
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("sessions stay in range and are deterministic per seed") {
  const auto cat = harness::generate_catalog(small_catalog_spec());
  harness::SessionSpec spec;
  spec.num_sessions = 80;
  spec.min_length = 3;
  spec.max_length = 8;
  const auto sessions = harness::generate_sessions(cat, spec);
  REQUIRE(sessions.size() == 80);
  for (const auto& s : sessions) {
    CHECK(s.size() >= 3);
    CHECK(s.size() <= 8);
    for (long item : s) {
      CHECK(item >= 0);
      CHECK(item < 40);
    }
  }
  CHECK(harness::generate_sessions(cat, spec) == sessions);
  auto other = spec;
  other.seed = spec.seed + 1;
  CHECK(harness::generate_sessions(cat, other) != sessions);

  auto bad = spec;
  bad.min_length = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.max_length = 2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.locality = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("locality bias raises same-neighborhood adjacency") {
  const auto cat = harness::generate_catalog(small_catalog_spec());
  const auto group = [&](long item) { return cat.leaf[item] / cat.spec.tree_branching; };
  const auto adjacency = [&](double locality) {
    harness::SessionSpec spec;
    spec.num_sessions = 200;
    spec.locality = locality;
    long same = 0, total = 0;
    for (const auto& s : harness::generate_sessions(cat, spec)) {
      for (std::size_t i = 1; i < s.size(); ++i) {
        same += group(s[i - 1]) == group(s[i]) ? 1 : 0;
        ++total;
      }
    }
    return static_cast<double>(same) / static_cast<double>(total);
  };
  CHECK(adjacency(0.95) > adjacency(0.0) + 0.2);
}

TEST_CASE("eval sessions fill each tier quota") {
  const auto cat = harness::generate_catalog(small_catalog_spec());
  harness::SessionSpec spec;
  spec.eval_per_tier = 5;
  const auto evals = harness::generate_eval_sessions(cat, spec);
  const auto tiers = harness::assign_tiers(cat.popularity);
  std::map<harness::Tier, int> counts;
  for (const auto& s : evals) {
    REQUIRE(s.size() >= 2);
    ++counts[tiers[static_cast<std::size_t>(s.back())]];
  }
  CHECK(counts[harness::Tier::head] == 5);
  CHECK(counts[harness::Tier::body] == 5);
  CHECK(counts[harness::Tier::tail] == 5);
}

TEST_CASE("tier split is exact with ties broken by index") {
  const auto cat = harness::generate_catalog(small_catalog_spec());
  const auto tiers = harness::assign_tiers(cat.popularity);
  long head = 0, body = 0, tail = 0;
  for (auto t : tiers) {
    head += t == harness::Tier::head ? 1 : 0;
    body += t == harness::Tier::body ? 1 : 0;
    tail += t == harness::Tier::tail ? 1 : 0;
  }
  CHECK(head == 8);
  CHECK(body == 24);
  CHECK(tail == 8);
  CHECK(tiers[0] == harness::Tier::head);
  CHECK(tiers.back() == harness::Tier::tail);

  // Uniform popularity: ranks fall back to index order, so the first fifth
  // is the head and the last fifth the tail.
  const std::vector<double> flat(101, 1.0 / 101.0);
  const auto flat_tiers = harness::assign_tiers(flat);
  for (int i = 0; i < 20; ++i) CHECK(flat_tiers[i] == harness::Tier::head);
  for (int i = 20; i < 81; ++i) CHECK(flat_tiers[i] == harness::Tier::body);
  for (int i = 81; i < 101; ++i) CHECK(flat_tiers[i] == harness::Tier::tail);
}

TEST_CASE("session streams concatenate id token sequences") {
  idreg::IdTable table;
  table.codes_per_layer = 3;
  table.ids = {idreg::SemanticId{{0, 6}}, idreg::SemanticId{{1, 2, 6}}};
  const auto streams = harness::render_streams({{0, 1}, {1, 0}}, table);
  REQUIRE(streams.size() == 2);
  CHECK(streams[0] == std::vector<int>{0, 6, 1, 2, 6});
  CHECK(streams[1] == std::vector<int>{1, 2, 6, 0, 6});
  CHECK_THROWS_AS(harness::render_streams({{0, 2}}, table), std::invalid_argument);
}

TEST_CASE("catalog file round-trip is exact") {
  const std::string dir = scratch_dir("vartok_test_catalog_io");
  const auto cat = harness::generate_catalog(small_catalog_spec());
  const std::string path = dir + "/catalog.tsv";
  serialize::write_catalog(path, cat);
  const auto back = serialize::read_catalog(path);
  CHECK(back.spec.num_items == cat.spec.num_items);
  CHECK(back.spec.zipf_exponent == cat.spec.zipf_exponent);
  CHECK(back.spec.tree_branching == cat.spec.tree_branching);
  CHECK(back.spec.tree_depth == cat.spec.tree_depth);
  CHECK(back.spec.feature_noise == cat.spec.feature_noise);
  CHECK(back.spec.feature_dim == cat.spec.feature_dim);
  CHECK(back.spec.seed == cat.spec.seed);
  CHECK(back.popularity == cat.popularity);
  CHECK(back.leaf == cat.leaf);
  REQUIRE(back.features.size() == cat.features.size());
  for (std::size_t i = 0; i < cat.features.size(); ++i)
    CHECK((back.features[i].array() == cat.features[i].array()).all());
  fs::remove_all(dir);
}

TEST_CASE("session and outcome files round-trip") {
  const std::string dir = scratch_dir("vartok_test_session_io");
  const std::vector<harness::Session> sessions = {{0, 3, 2}, {5, 5, 1, 9}, {7, 0}};
  const std::string spath = dir + "/sessions.tsv";
  serialize::write_sessions(spath, sessions);
  CHECK(serialize::read_sessions(spath) == sessions);

  std::vector<harness::DecodeOutcome> outcomes(3);
  outcomes[0].target = 4;
  outcomes[0].top_items = {4, 1, 0};
  outcomes[1].target = 2;
  outcomes[1].top_items = {};
  outcomes[2].target = 0;
  outcomes[2].top_items = {9};
  const std::string opath = dir + "/decode.tsv";
  serialize::write_outcomes(opath, outcomes);
  const auto back = serialize::read_outcomes(opath);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].target == outcomes[i].target);
    CHECK(back[i].top_items == outcomes[i].top_items);
  }
  fs::remove_all(dir);
}

TEST_CASE("length table round-trips and rejects out-of-range entries") {
  const std::string dir = scratch_dir("vartok_test_length_io");
  const std::vector<int> lengths = {1, 4, 2, 2, 3};
  const std::string path = dir + "/lengths.tsv";
  serialize::write_lengths(path, lengths, 4);
  const auto [back, max_len] = serialize::read_lengths(path);
  CHECK(back == lengths);
  CHECK(max_len == 4);

  std::ofstream bad(dir + "/bad.tsv");
  bad << "# max_len=4\n0\t5\n";
  bad.close();
  CHECK_THROWS_AS(serialize::read_lengths(dir + "/bad.tsv"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round-trip is bitwise") {
  const std::string dir = scratch_dir("vartok_test_checkpoint_io");
  harq::HarqConfig cfg;
  cfg.feature_dim = 5;
  cfg.latent_dim = 3;
  cfg.num_layers = 2;
  cfg.codes_per_layer = 4;
  cfg.encoder_hidden = 8;
  cfg.gate_hidden = 6;
  cfg.decoder_hidden = 8;
  const auto model = harq::make_model(cfg, 11);
  const std::string path = dir + "/model.json";
  serialize::write_checkpoint(path, model);
  const auto back = serialize::read_checkpoint(path);
  back.validate();
  CHECK(back.config.feature_dim == cfg.feature_dim);
  CHECK(back.config.curvature == cfg.curvature);
  const auto same_net = [](const auto& a, const auto& b) {
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
      CHECK((a.weights[i].array() == b.weights[i].array()).all());
      CHECK((a.biases[i].array() == b.biases[i].array()).all());
    }
  };
  same_net(back.encoder, model.encoder);
  same_net(back.gate, model.gate);
  same_net(back.decoder, model.decoder);
  REQUIRE(back.codebook.layers.size() == model.codebook.layers.size());
  for (std::size_t l = 0; l < model.codebook.layers.size(); ++l)
    for (std::size_t m = 0; m < model.codebook.layers[l].size(); ++m)
      CHECK((back.codebook.layers[l][m].array() == model.codebook.layers[l][m].array()).all());

  std::ofstream bad(dir + "/bad.json");
  bad << "{]";
  bad.close();
  CHECK_THROWS_AS(serialize::read_checkpoint(dir + "/bad.json"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("loss curve file round-trips exactly") {
  const std::string dir = scratch_dir("vartok_test_loss_io");
  std::vector<vartok::training::LossBreakdown> curve(3);
  curve[0] = {1.5, 0.25, 3.0, 0.125, 1.0 / 3.0};
  curve[1] = {1.25, 0.2, 2.5, 0.1, 0.1 + 0.2};
  curve[2] = {1.0, 0.15, 2.0, 0.075, 1e-17};
  const std::string path = dir + "/loss.csv";
  serialize::write_loss_curve(path, curve);
  const auto back = serialize::read_loss_curve(path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].recon == curve[i].recon);
    CHECK(back[i].quant == curve[i].quant);
    CHECK(back[i].cost == curve[i].cost);
    CHECK(back[i].len == curve[i].len);
    CHECK(back[i].total == curve[i].total);
  }
  fs::remove_all(dir);
}

TEST_CASE("report files round-trip scalars and describe tiers") {
  const std::string dir = scratch_dir("vartok_test_report_io");
  harness::ExperimentReport report;
  report.collision_rate_pre = 0.7;
  report.collision_rate_post = 0.0;
  report.length_histogram = {0, 9, 13, 12, 6};
  report.mean_length = 2.375;
  report.head = {8, 5, 24.26, 1.0, 1.125};
  report.body = {24, 5, 13.49, 0.6, 1.917};
  report.tail = {8, 5, 16.55, 0.0, 4.0};
  report.train_seconds = 0.11;
  report.total_seconds = 0.13;
  const std::string cpath = dir + "/report.csv";
  serialize::write_report_csv(cpath, report);
  const auto back = serialize::read_report_csv(cpath);
  CHECK(back.collision_rate_pre == report.collision_rate_pre);
  CHECK(back.collision_rate_post == report.collision_rate_post);
  CHECK(back.length_histogram == report.length_histogram);
  CHECK(back.mean_length == report.mean_length);
  for (const auto* pair : {&report.head, &report.body, &report.tail}) {
    const auto& mine =
        pair == &report.head ? back.head : (pair == &report.body ? back.body : back.tail);
    CHECK(mine.items == pair->items);
    CHECK(mine.eval_targets == pair->eval_targets);
    CHECK(mine.recon_error == pair->recon_error);
    CHECK(mine.hit_rate == pair->hit_rate);
    CHECK(mine.mean_length == pair->mean_length);
  }
  CHECK(back.train_seconds == report.train_seconds);
  CHECK(back.total_seconds == report.total_seconds);
  CHECK(back.loss_curve.empty());

  const std::string tpath = dir + "/report.txt";
  serialize::write_report_summary(tpath, report);
  const std::string text = slurp(tpath);
  CHECK(text.find("head") != std::string::npos);
  CHECK(text.find("tail") != std::string::npos);
  CHECK(text.find("collision") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
  auto cfg = small_pipeline_config();
  cfg.tau = 0.4;
  cfg.beam_width = 12;
  cfg.topk = 3;
  cfg.fixed_length = 0;
  cfg.piba.beta = 0.9;
  cfg.train.weights.beta_commit = 0.3;
  const auto j = serialize::config_to_json(cfg);
  const auto back = serialize::config_from_json(j);
  CHECK(back.catalog.num_items == cfg.catalog.num_items);
  CHECK(back.catalog.seed == cfg.catalog.seed);
  CHECK(back.sessions.num_sessions == cfg.sessions.num_sessions);
  CHECK(back.sessions.locality == cfg.sessions.locality);
  CHECK(back.model.codes_per_layer == cfg.model.codes_per_layer);
  CHECK(back.train.epochs == cfg.train.epochs);
  CHECK(back.train.adam.learning_rate == cfg.train.adam.learning_rate);
  CHECK(back.train.weights.lambda_len == cfg.train.weights.lambda_len);
  CHECK(back.train.weights.beta_commit == cfg.train.weights.beta_commit);
  CHECK(back.piba.beta == cfg.piba.beta);
  CHECK(back.tau == cfg.tau);
  CHECK(back.beam_width == cfg.beam_width);
  CHECK(back.topk == cfg.topk);

  auto tampered = j;
  tampered["catalog"]["bogus"] = 1;
  CHECK_THROWS_AS(serialize::config_from_json(tampered), std::runtime_error);

  // Partial configs overlay the defaults.
  nlohmann::json partial;
  partial["decode"]["tau"] = 0.3;
  const auto merged = serialize::config_from_json(partial);
  CHECK(merged.tau == 0.3);
  CHECK(merged.catalog.num_items == harness::CatalogSpec{}.num_items);
}

TEST_CASE("pipeline produces a full artifact set and a sane report") {
  const std::string dir = scratch_dir("vartok_test_pipeline");
  const auto cfg = small_pipeline_config();
  const auto report = harness::run_pipeline(cfg, dir);

  for (const char* name :
       {serialize::files::config, serialize::files::catalog, serialize::files::sessions,
        serialize::files::eval_sessions, serialize::files::lengths, serialize::files::checkpoint,
        serialize::files::loss_curve, serialize::files::id_table, serialize::files::outcomes,
        serialize::files::report_csv, serialize::files::report_text}) {
    CHECK(fs::exists(fs::path(dir) / name));
  }

  CHECK(report.collision_rate_post == 0.0);
  CHECK(report.collision_rate_pre >= 0.0);
  CHECK(report.head.items == 8);
  CHECK(report.body.items == 24);
  CHECK(report.tail.items == 8);
  CHECK(report.head.eval_targets == 5);
  CHECK(report.body.eval_targets == 5);
  CHECK(report.tail.eval_targets == 5);
  long hist_total = 0;
  for (long n : report.length_histogram) hist_total += n;
  CHECK(hist_total == 40);
  CHECK(report.mean_length >= 1.0);
  CHECK(report.mean_length <= 4.0);
  for (const auto* tier : {&report.head, &report.body, &report.tail}) {
    CHECK(tier->hit_rate >= 0.0);
    CHECK(tier->hit_rate <= 1.0);
    CHECK(tier->recon_error >= 0.0);
  }
  // Shorter codes for popular items: the length penalty pulls assigned
  // lengths toward the popularity-driven budgets.
  CHECK(report.head.mean_length < report.tail.mean_length);
  CHECK(report.loss_curve.size() == 50);
  CHECK(report.train_seconds > 0.0);
  CHECK(report.total_seconds >= report.train_seconds);
  fs::remove_all(dir);
}

TEST_CASE("pipeline runs are deterministic across data directories") {
  const std::string dir_a = scratch_dir("vartok_test_pipeline_a");
  const std::string dir_b = scratch_dir("vartok_test_pipeline_b");
  const auto cfg = small_pipeline_config();
  const auto report_a = harness::run_pipeline(cfg, dir_a);
  const auto report_b = harness::run_pipeline(cfg, dir_b);

  for (const char* name :
       {serialize::files::config, serialize::files::catalog, serialize::files::sessions,
        serialize::files::eval_sessions, serialize::files::lengths, serialize::files::checkpoint,
        serialize::files::loss_curve, serialize::files::id_table, serialize::files::outcomes}) {
    CHECK(slurp(dir_a + "/" + name) == slurp(dir_b + "/" + name));
  }
  CHECK(report_a.collision_rate_pre == report_b.collision_rate_pre);
  CHECK(report_a.length_histogram == report_b.length_histogram);
  CHECK(report_a.mean_length == report_b.mean_length);
  CHECK(report_a.head.hit_rate == report_b.head.hit_rate);
  CHECK(report_a.body.hit_rate == report_b.body.hit_rate);
  CHECK(report_a.tail.hit_rate == report_b.tail.hit_rate);
  CHECK(report_a.head.recon_error == report_b.head.recon_error);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("stage failures carry the stage name") {
  const std::string dir = scratch_dir("vartok_test_pipeline_fail");
  auto cfg = small_pipeline_config();
  // Starved codebook and a single epoch leave more colliding items than
  // auxiliary tokens, which the assignment stage must report as its own.
  cfg.model.codes_per_layer = 8;
  cfg.train.epochs = 1;
  cfg.train.adam.learning_rate = 1e-4;
  cfg.train.weights.lambda_len = 0.01;
  try {
    harness::run_pipeline(cfg, dir);
    FAIL("expected the assignment stage to run out of auxiliary tokens");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).rfind("stage assign:", 0) == 0);
  }
  fs::remove_all(dir);
}

TEST_CASE("verify suite passes with at least twenty checks") {
  const auto report = verify::verify_suite(0);
  CHECK(report.checks.size() >= 20);
  for (const auto& check : report.checks) {
    CAPTURE(check.name);
    CAPTURE(check.detail);
    CHECK(check.passed);
  }
  CHECK(report.all_passed());
  CHECK(report.failures() == 0);
}

TEST_CASE("model safety check flags a corrupted codebook") {
  harq::HarqConfig cfg;
  cfg.feature_dim = 5;
  cfg.latent_dim = 3;
  cfg.num_layers = 2;
  cfg.codes_per_layer = 4;
  cfg.encoder_hidden = 8;
  cfg.gate_hidden = 6;
  cfg.decoder_hidden = 8;
  auto model = harq::make_model(cfg, 3);
  CHECK(verify::check_model_safety(model).passed);

  // Push one codeword onto the unit sphere, outside the safe ball at c=1.
  model.codebook.layers[0][0].setZero();
  model.codebook.layers[0][0][0] = 1.0;
  CHECK_FALSE(verify::check_model_safety(model).passed);
}

TEST_CASE("command line stages chain with clean exit codes") {
  const std::string dir = scratch_dir("vartok_test_cli");
  auto cfg = small_pipeline_config();
  cfg.train.epochs = 6;
  cfg.train.adam.learning_rate = 1e-4;
  cfg.train.weights.lambda_len = 0.01;
  serialize::write_config(dir + "/config.json", cfg);

  // Flags override the config file.
  CHECK(run_cli("synth --data-dir " + dir + " --num-sessions 30") == 0);
  CHECK(serialize::read_sessions(dir + "/sessions.tsv").size() == 30);

  CHECK(run_cli("piba --data-dir " + dir) == 0);
  CHECK(run_cli("train --data-dir " + dir) == 0);
  CHECK(run_cli("assign --data-dir " + dir) == 0);
  CHECK(run_cli("decode --data-dir " + dir) == 0);
  CHECK(run_cli("report --data-dir " + dir) == 0);
  CHECK(run_cli("verify --data-dir " + dir) == 0);
  for (const char* name : {serialize::files::id_table, serialize::files::outcomes,
                           serialize::files::report_csv, serialize::files::report_text}) {
    CHECK(fs::exists(fs::path(dir) / name));
  }

  CHECK(run_cli("synth --data-dir " + dir + " --no-such-flag") == 2);
  CHECK(run_cli("synth --data-dir " + dir + " --tau 1.5") == 2);

  // Valid config but no artifacts yet: a stage failure, not a config error.
  const std::string bare = scratch_dir("vartok_test_cli_bare");
  serialize::write_config(bare + "/config.json", cfg);
  CHECK(run_cli("train --data-dir " + bare) == 1);

  fs::remove_all(dir);
  fs::remove_all(bare);
}
