#include "vartok/serialize.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace vartok::serialize {

namespace {

using nlohmann::json;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Splits keeping empty fields, so "a\t" yields {"a", ""}.
std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string trim(const std::string& text) {
  std::size_t first = 0;
  std::size_t last = text.size();
  while (first < last && text[first] == ' ') ++first;
  while (last > first && text[last - 1] == ' ') --last;
  return text.substr(first, last - first);
}

long parse_long(const std::string& text) {
  if (text.empty()) throw std::runtime_error("expected an integer, got an empty field");
  errno = 0;
  char* end = nullptr;
  const long value = std::strtol(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size()) {
    throw std::runtime_error("not an integer: '" + text + "'");
  }
  return value;
}

std::uint64_t parse_u64(const std::string& text) {
  if (text.empty() || text[0] == '-') {
    throw std::runtime_error("expected an unsigned integer, got '" + text + "'");
  }
  errno = 0;
  char* end = nullptr;
  const std::uint64_t value = std::strtoull(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size()) {
    throw std::runtime_error("not an unsigned integer: '" + text + "'");
  }
  return value;
}

// Leading "# key=value" lines; returns the index of the first data row.
std::size_t parse_header(const std::vector<std::string>& lines, const std::string& path,
                         std::map<std::string, std::string>& header) {
  std::size_t row = 0;
  for (; row < lines.size() && !lines[row].empty() && lines[row][0] == '#'; ++row) {
    const std::size_t eq = lines[row].find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ": malformed header line '" + lines[row] + "'");
    }
    header[trim(lines[row].substr(1, eq - 1))] = trim(lines[row].substr(eq + 1));
  }
  return row;
}

const std::string& need(const std::map<std::string, std::string>& header,
                        const std::string& key, const std::string& path) {
  const auto it = header.find(key);
  if (it == header.end()) throw std::runtime_error(path + ": missing header key " + key);
  return it->second;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& a) {
  if (!a.is_array() || a.empty()) throw std::runtime_error("expected a non-empty number array");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw std::runtime_error("expected a number array");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& a) {
  if (!a.is_array() || a.empty()) throw std::runtime_error("expected a non-empty matrix");
  const Vec first = vec_from_json(a[0]);
  Mat m(static_cast<Eigen::Index>(a.size()), first.size());
  m.row(0) = first;
  for (std::size_t r = 1; r < a.size(); ++r) {
    const Vec row = vec_from_json(a[r]);
    if (row.size() != m.cols()) throw std::runtime_error("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = row;
  }
  return m;
}

json mlp_to_json(const mlp::Mlp& net) {
  json weights = json::array();
  json biases = json::array();
  for (const Mat& w : net.weights) weights.push_back(mat_to_json(w));
  for (const Vec& b : net.biases) biases.push_back(vec_to_json(b));
  return json{{"weights", std::move(weights)}, {"biases", std::move(biases)}};
}

mlp::Mlp mlp_from_json(const json& j) {
  mlp::Mlp net;
  for (const json& w : j.at("weights")) net.weights.push_back(mat_from_json(w));
  for (const json& b : j.at("biases")) net.biases.push_back(vec_from_json(b));
  net.validate();
  return net;
}

void expect_keys(const json& j, const std::set<std::string>& allowed,
                 const std::string& where) {
  if (!j.is_object()) throw std::runtime_error(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (allowed.count(it.key()) == 0) {
      throw std::runtime_error("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void tier_rows(std::ostream& out, const char* name, const harness::TierMetrics& m) {
  const std::string prefix = std::string("tier_") + name + "_";
  out << prefix << "items," << m.items << "\n";
  out << prefix << "targets," << m.eval_targets << "\n";
  out << prefix << "recon_error," << format_double(m.recon_error) << "\n";
  out << prefix << "hit_rate," << format_double(m.hit_rate) << "\n";
  out << prefix << "mean_length," << format_double(m.mean_length) << "\n";
}

harness::TierMetrics tier_from_rows(const std::map<std::string, std::string>& kv,
                                    const char* name, const std::string& path) {
  const std::string prefix = std::string("tier_") + name + "_";
  harness::TierMetrics m;
  m.items = parse_long(need(kv, prefix + "items", path));
  m.eval_targets = parse_long(need(kv, prefix + "targets", path));
  m.recon_error = parse_double(need(kv, prefix + "recon_error", path));
  m.hit_rate = parse_double(need(kv, prefix + "hit_rate", path));
  m.mean_length = parse_double(need(kv, prefix + "mean_length", path));
  return m;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(const std::string& text) {
  if (text.empty()) throw std::runtime_error("expected a number, got an empty field");
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) {
    throw std::runtime_error("not a number: '" + text + "'");
  }
  if (errno == ERANGE && !std::isfinite(value)) {
    throw std::runtime_error("number out of range: '" + text + "'");
  }
  return value;
}

void write_catalog(const std::string& path, const harness::ItemCatalog& catalog) {
  const harness::CatalogSpec& s = catalog.spec;
  const std::size_t n = catalog.popularity.size();
  if (catalog.leaf.size() != n || catalog.features.size() != n) {
    throw std::invalid_argument("catalog arrays disagree on item count");
  }
  std::ofstream out = open_out(path);
  out << "# num_items=" << s.num_items << "\n";
  out << "# zipf_exponent=" << format_double(s.zipf_exponent) << "\n";
  out << "# tree_branching=" << s.tree_branching << "\n";
  out << "# tree_depth=" << s.tree_depth << "\n";
  out << "# feature_noise=" << format_double(s.feature_noise) << "\n";
  out << "# feature_dim=" << s.feature_dim << "\n";
  out << "# seed=" << s.seed << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << i << '\t' << catalog.leaf[i] << '\t' << format_double(catalog.popularity[i])
        << '\t';
    for (Eigen::Index d = 0; d < catalog.features[i].size(); ++d) {
      if (d > 0) out << ' ';
      out << format_double(catalog.features[i][d]);
    }
    out << "\n";
  }
}

harness::ItemCatalog read_catalog(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::map<std::string, std::string> header;
  std::size_t row = parse_header(lines, path, header);

  harness::CatalogSpec spec;
  spec.num_items = static_cast<int>(parse_long(need(header, "num_items", path)));
  spec.zipf_exponent = parse_double(need(header, "zipf_exponent", path));
  spec.tree_branching = static_cast<int>(parse_long(need(header, "tree_branching", path)));
  spec.tree_depth = static_cast<int>(parse_long(need(header, "tree_depth", path)));
  spec.feature_noise = parse_double(need(header, "feature_noise", path));
  spec.feature_dim = static_cast<int>(parse_long(need(header, "feature_dim", path)));
  spec.seed = parse_u64(need(header, "seed", path));
  spec.validate();

  harness::ItemCatalog catalog;
  catalog.spec = spec;
  for (; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const std::vector<std::string> fields = split(lines[row], '\t');
    if (fields.size() != 4) {
      throw std::runtime_error(path + ": expected 4 tab fields, line " +
                               std::to_string(row + 1));
    }
    if (parse_long(fields[0]) != static_cast<long>(catalog.popularity.size())) {
      throw std::runtime_error(path + ": item ids must run 0..N-1 in order");
    }
    catalog.leaf.push_back(static_cast<int>(parse_long(fields[1])));
    catalog.popularity.push_back(parse_double(fields[2]));
    const std::vector<std::string> comps = split(fields[3], ' ');
    if (static_cast<int>(comps.size()) != spec.feature_dim) {
      throw std::runtime_error(path + ": feature width mismatch, line " +
                               std::to_string(row + 1));
    }
    Vec f(spec.feature_dim);
    for (int d = 0; d < spec.feature_dim; ++d) f[d] = parse_double(comps[d]);
    catalog.features.push_back(std::move(f));
  }
  if (static_cast<int>(catalog.popularity.size()) != spec.num_items) {
    throw std::runtime_error(path + ": header promises " + std::to_string(spec.num_items) +
                             " items, file holds " +
                             std::to_string(catalog.popularity.size()));
  }
  return catalog;
}

void write_sessions(const std::string& path, const std::vector<harness::Session>& sessions) {
  std::ofstream out = open_out(path);
  for (const harness::Session& session : sessions) {
    for (std::size_t i = 0; i < session.size(); ++i) {
      if (i > 0) out << ' ';
      out << session[i];
    }
    out << "\n";
  }
}

std::vector<harness::Session> read_sessions(const std::string& path) {
  std::vector<harness::Session> sessions;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    harness::Session session;
    for (const std::string& field : split(line, ' ')) session.push_back(parse_long(field));
    sessions.push_back(std::move(session));
  }
  return sessions;
}

void write_lengths(const std::string& path, const std::vector<int>& lengths, int max_len) {
  std::ofstream out = open_out(path);
  out << "# max_len=" << max_len << "\n";
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    out << i << '\t' << lengths[i] << "\n";
  }
}

std::pair<std::vector<int>, int> read_lengths(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  std::map<std::string, std::string> header;
  std::size_t row = parse_header(lines, path, header);
  const int max_len = static_cast<int>(parse_long(need(header, "max_len", path)));
  if (max_len < 1) throw std::runtime_error(path + ": max_len must be >= 1");

  std::vector<int> lengths;
  for (; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const std::vector<std::string> fields = split(lines[row], '\t');
    if (fields.size() != 2) {
      throw std::runtime_error(path + ": expected 2 tab fields, line " +
                               std::to_string(row + 1));
    }
    if (parse_long(fields[0]) != static_cast<long>(lengths.size())) {
      throw std::runtime_error(path + ": item ids must run 0..N-1 in order");
    }
    const long len = parse_long(fields[1]);
    if (len < 1 || len > max_len) {
      throw std::runtime_error(path + ": length " + std::to_string(len) +
                               " outside [1, " + std::to_string(max_len) + "]");
    }
    lengths.push_back(static_cast<int>(len));
  }
  return {std::move(lengths), max_len};
}

void write_checkpoint(const std::string& path, const harq::HarqModel& model) {
  model.validate();
  const harq::HarqConfig& c = model.config;
  json j;
  j["format"] = "harq-checkpoint-v1";
  j["config"] = {{"feature_dim", c.feature_dim},
                 {"latent_dim", c.latent_dim},
                 {"num_layers", c.num_layers},
                 {"codes_per_layer", c.codes_per_layer},
                 {"curvature", c.curvature},
                 {"length_threshold", c.length_threshold},
                 {"encoder_hidden", c.encoder_hidden},
                 {"gate_hidden", c.gate_hidden},
                 {"decoder_hidden", c.decoder_hidden}};
  j["encoder"] = mlp_to_json(model.encoder);
  j["gate"] = mlp_to_json(model.gate);
  j["decoder"] = mlp_to_json(model.decoder);
  json codebook = json::array();
  for (const auto& layer : model.codebook.layers) {
    json codes = json::array();
    for (const Vec& code : layer) codes.push_back(vec_to_json(code));
    codebook.push_back(std::move(codes));
  }
  j["codebook"] = std::move(codebook);
  open_out(path) << j.dump() << "\n";
}

harq::HarqModel read_checkpoint(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "harq-checkpoint-v1") {
      throw std::runtime_error("unknown checkpoint format tag");
    }
    harq::HarqModel model;
    const json& c = j.at("config");
    expect_keys(c, {"feature_dim", "latent_dim", "num_layers", "codes_per_layer",
                    "curvature", "length_threshold", "encoder_hidden", "gate_hidden",
                    "decoder_hidden"},
                "config");
    c.at("feature_dim").get_to(model.config.feature_dim);
    c.at("latent_dim").get_to(model.config.latent_dim);
    c.at("num_layers").get_to(model.config.num_layers);
    c.at("codes_per_layer").get_to(model.config.codes_per_layer);
    c.at("curvature").get_to(model.config.curvature);
    c.at("length_threshold").get_to(model.config.length_threshold);
    c.at("encoder_hidden").get_to(model.config.encoder_hidden);
    c.at("gate_hidden").get_to(model.config.gate_hidden);
    c.at("decoder_hidden").get_to(model.config.decoder_hidden);
    model.encoder = mlp_from_json(j.at("encoder"));
    model.gate = mlp_from_json(j.at("gate"));
    model.decoder = mlp_from_json(j.at("decoder"));
    model.codebook.curvature = model.config.curvature;
    for (const json& layer : j.at("codebook")) {
      std::vector<Vec> codes;
      for (const json& code : layer) codes.push_back(vec_from_json(code));
      model.codebook.layers.push_back(std::move(codes));
    }
    model.validate();
    return model;
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void write_loss_curve(const std::string& path,
                      const std::vector<training::LossBreakdown>& curve) {
  std::ofstream out = open_out(path);
  out << "epoch,recon,quant,cost,len,total\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << (i + 1) << ',' << format_double(curve[i].recon) << ','
        << format_double(curve[i].quant) << ',' << format_double(curve[i].cost) << ','
        << format_double(curve[i].len) << ',' << format_double(curve[i].total) << "\n";
  }
}

std::vector<training::LossBreakdown> read_loss_curve(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != "epoch,recon,quant,cost,len,total") {
    throw std::runtime_error(path + ": missing loss curve header");
  }
  std::vector<training::LossBreakdown> curve;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const std::vector<std::string> fields = split(lines[row], ',');
    if (fields.size() != 6) {
      throw std::runtime_error(path + ": expected 6 fields, line " + std::to_string(row + 1));
    }
    if (parse_long(fields[0]) != static_cast<long>(curve.size()) + 1) {
      throw std::runtime_error(path + ": epochs must run 1..E in order");
    }
    training::LossBreakdown entry;
    entry.recon = parse_double(fields[1]);
    entry.quant = parse_double(fields[2]);
    entry.cost = parse_double(fields[3]);
    entry.len = parse_double(fields[4]);
    entry.total = parse_double(fields[5]);
    curve.push_back(entry);
  }
  return curve;
}

void write_outcomes(const std::string& path,
                    const std::vector<harness::DecodeOutcome>& outcomes) {
  std::ofstream out = open_out(path);
  for (const harness::DecodeOutcome& outcome : outcomes) {
    out << outcome.target << '\t';
    for (std::size_t i = 0; i < outcome.top_items.size(); ++i) {
      if (i > 0) out << ' ';
      out << outcome.top_items[i];
    }
    out << "\n";
  }
}

std::vector<harness::DecodeOutcome> read_outcomes(const std::string& path) {
  std::vector<harness::DecodeOutcome> outcomes;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 2) {
      throw std::runtime_error(path + ": expected '<target>\\t<items>' rows");
    }
    harness::DecodeOutcome outcome;
    outcome.target = parse_long(fields[0]);
    if (!fields[1].empty()) {
      for (const std::string& item : split(fields[1], ' ')) {
        outcome.top_items.push_back(parse_long(item));
      }
    }
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

void write_report_csv(const std::string& path, const harness::ExperimentReport& report) {
  std::ofstream out = open_out(path);
  out << "key,value\n";
  out << "collision_rate_pre," << format_double(report.collision_rate_pre) << "\n";
  out << "collision_rate_post," << format_double(report.collision_rate_post) << "\n";
  out << "mean_length," << format_double(report.mean_length) << "\n";
  for (std::size_t k = 0; k < report.length_histogram.size(); ++k) {
    out << "length_hist_" << k << ',' << report.length_histogram[k] << "\n";
  }
  tier_rows(out, "head", report.head);
  tier_rows(out, "body", report.body);
  tier_rows(out, "tail", report.tail);
  out << "train_seconds," << format_double(report.train_seconds) << "\n";
  out << "total_seconds," << format_double(report.total_seconds) << "\n";
}

harness::ExperimentReport read_report_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != "key,value") {
    throw std::runtime_error(path + ": missing 'key,value' header");
  }
  std::map<std::string, std::string> kv;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    if (lines[row].empty()) continue;
    const std::vector<std::string> fields = split(lines[row], ',');
    if (fields.size() != 2) {
      throw std::runtime_error(path + ": expected 2 fields, line " + std::to_string(row + 1));
    }
    if (!kv.emplace(fields[0], fields[1]).second) {
      throw std::runtime_error(path + ": duplicate key " + fields[0]);
    }
  }

  harness::ExperimentReport report;
  report.collision_rate_pre = parse_double(need(kv, "collision_rate_pre", path));
  report.collision_rate_post = parse_double(need(kv, "collision_rate_post", path));
  report.mean_length = parse_double(need(kv, "mean_length", path));
  report.train_seconds = parse_double(need(kv, "train_seconds", path));
  report.total_seconds = parse_double(need(kv, "total_seconds", path));
  std::map<long, long> hist;
  for (const auto& [key, value] : kv) {
    const std::string prefix = "length_hist_";
    if (key.rfind(prefix, 0) == 0) {
      hist[parse_long(key.substr(prefix.size()))] = parse_long(value);
    }
  }
  if (!hist.empty()) {
    report.length_histogram.assign(hist.rbegin()->first + 1, 0);
    for (const auto& [k, count] : hist) {
      if (k < 0) throw std::runtime_error(path + ": negative histogram index");
      report.length_histogram[k] = count;
    }
  }
  report.head = tier_from_rows(kv, "head", path);
  report.body = tier_from_rows(kv, "body", path);
  report.tail = tier_from_rows(kv, "tail", path);
  return report;
}

void write_report_summary(const std::string& path, const harness::ExperimentReport& report) {
  std::ofstream out = open_out(path);
  const long items = report.head.items + report.body.items + report.tail.items;
  char buf[256];
  out << "run summary\n";
  std::snprintf(buf, sizeof(buf), "items: %ld (head %ld / body %ld / tail %ld)\n", items,
                report.head.items, report.body.items, report.tail.items);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "raw collision rate %.4f, after resolution %.4f\n",
                report.collision_rate_pre, report.collision_rate_post);
  out << buf;
  std::snprintf(buf, sizeof(buf), "mean id length %.3f main tokens\n", report.mean_length);
  out << buf;
  out << "length histogram (tokens:items)";
  for (std::size_t k = 0; k < report.length_histogram.size(); ++k) {
    if (report.length_histogram[k] > 0) {
      out << ' ' << k << ':' << report.length_histogram[k];
    }
  }
  out << "\n";
  out << "tier    items  targets  hit_rate  recon_error  mean_length\n";
  const auto tier_line = [&](const char* name, const harness::TierMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%-6s %6ld %8ld %9.4f %12.6f %12.3f\n", name, m.items,
                  m.eval_targets, m.hit_rate, m.recon_error, m.mean_length);
    out << buf;
  };
  tier_line("head", report.head);
  tier_line("body", report.body);
  tier_line("tail", report.tail);
  std::snprintf(buf, sizeof(buf), "training %.2f s, total %.2f s\n", report.train_seconds,
                report.total_seconds);
  out << buf;
}

nlohmann::json config_to_json(const harness::PipelineConfig& config) {
  json j;
  j["catalog"] = {{"num_items", config.catalog.num_items},
                  {"zipf_exponent", config.catalog.zipf_exponent},
                  {"tree_branching", config.catalog.tree_branching},
                  {"tree_depth", config.catalog.tree_depth},
                  {"feature_noise", config.catalog.feature_noise},
                  {"feature_dim", config.catalog.feature_dim},
                  {"seed", config.catalog.seed}};
  j["sessions"] = {{"num_sessions", config.sessions.num_sessions},
                   {"min_length", config.sessions.min_length},
                   {"max_length", config.sessions.max_length},
                   {"locality", config.sessions.locality},
                   {"eval_per_tier", config.sessions.eval_per_tier},
                   {"seed", config.sessions.seed}};
  j["model"] = {{"feature_dim", config.model.feature_dim},
                {"latent_dim", config.model.latent_dim},
                {"num_layers", config.model.num_layers},
                {"codes_per_layer", config.model.codes_per_layer},
                {"curvature", config.model.curvature},
                {"length_threshold", config.model.length_threshold},
                {"encoder_hidden", config.model.encoder_hidden},
                {"gate_hidden", config.model.gate_hidden},
                {"decoder_hidden", config.model.decoder_hidden}};
  j["train"] = {{"epochs", config.train.epochs},
                {"batch_size", config.train.batch_size},
                {"adam",
                 {{"learning_rate", config.train.adam.learning_rate},
                  {"beta1", config.train.adam.beta1},
                  {"beta2", config.train.adam.beta2},
                  {"epsilon", config.train.adam.epsilon}}},
                {"weights",
                 {{"lambda_cost", config.train.weights.lambda_cost},
                  {"lambda_len", config.train.weights.lambda_len},
                  {"beta_commit", config.train.weights.beta_commit}}},
                {"seed", config.train.seed},
                {"use_kmeans_init", config.train.use_kmeans_init},
                {"reset_dead", config.train.reset_dead},
                {"pin_gates_open", config.train.pin_gates_open}};
  j["piba"] = {{"alpha", config.piba.alpha},
               {"theta", config.piba.theta},
               {"gamma", config.piba.gamma},
               {"i_req", config.piba.i_req},
               {"beta", config.piba.beta},
               {"max_len", config.piba.max_len}};
  j["decode"] = {{"tau", config.tau},
                 {"beam_width", config.beam_width},
                 {"topk", config.topk},
                 {"fixed_length", config.fixed_length}};
  return j;
}

harness::PipelineConfig config_from_json(const nlohmann::json& j) {
  harness::PipelineConfig config;
  expect_keys(j, {"catalog", "sessions", "model", "train", "piba", "decode"}, "config");
  if (j.contains("catalog")) {
    const json& s = j.at("catalog");
    expect_keys(s, {"num_items", "zipf_exponent", "tree_branching", "tree_depth",
                    "feature_noise", "feature_dim", "seed"},
                "catalog");
    maybe(s, "num_items", config.catalog.num_items);
    maybe(s, "zipf_exponent", config.catalog.zipf_exponent);
    maybe(s, "tree_branching", config.catalog.tree_branching);
    maybe(s, "tree_depth", config.catalog.tree_depth);
    maybe(s, "feature_noise", config.catalog.feature_noise);
    maybe(s, "feature_dim", config.catalog.feature_dim);
    maybe(s, "seed", config.catalog.seed);
  }
  if (j.contains("sessions")) {
    const json& s = j.at("sessions");
    expect_keys(s, {"num_sessions", "min_length", "max_length", "locality", "eval_per_tier",
                    "seed"},
                "sessions");
    maybe(s, "num_sessions", config.sessions.num_sessions);
    maybe(s, "min_length", config.sessions.min_length);
    maybe(s, "max_length", config.sessions.max_length);
    maybe(s, "locality", config.sessions.locality);
    maybe(s, "eval_per_tier", config.sessions.eval_per_tier);
    maybe(s, "seed", config.sessions.seed);
  }
  if (j.contains("model")) {
    const json& s = j.at("model");
    expect_keys(s, {"feature_dim", "latent_dim", "num_layers", "codes_per_layer", "curvature",
                    "length_threshold", "encoder_hidden", "gate_hidden", "decoder_hidden"},
                "model");
    maybe(s, "feature_dim", config.model.feature_dim);
    maybe(s, "latent_dim", config.model.latent_dim);
    maybe(s, "num_layers", config.model.num_layers);
    maybe(s, "codes_per_layer", config.model.codes_per_layer);
    maybe(s, "curvature", config.model.curvature);
    maybe(s, "length_threshold", config.model.length_threshold);
    maybe(s, "encoder_hidden", config.model.encoder_hidden);
    maybe(s, "gate_hidden", config.model.gate_hidden);
    maybe(s, "decoder_hidden", config.model.decoder_hidden);
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    expect_keys(s, {"epochs", "batch_size", "adam", "weights", "seed", "use_kmeans_init",
                    "reset_dead", "pin_gates_open"},
                "train");
    maybe(s, "epochs", config.train.epochs);
    maybe(s, "batch_size", config.train.batch_size);
    if (s.contains("adam")) {
      const json& a = s.at("adam");
      expect_keys(a, {"learning_rate", "beta1", "beta2", "epsilon"}, "train.adam");
      maybe(a, "learning_rate", config.train.adam.learning_rate);
      maybe(a, "beta1", config.train.adam.beta1);
      maybe(a, "beta2", config.train.adam.beta2);
      maybe(a, "epsilon", config.train.adam.epsilon);
    }
    if (s.contains("weights")) {
      const json& w = s.at("weights");
      expect_keys(w, {"lambda_cost", "lambda_len", "beta_commit"}, "train.weights");
      maybe(w, "lambda_cost", config.train.weights.lambda_cost);
      maybe(w, "lambda_len", config.train.weights.lambda_len);
      maybe(w, "beta_commit", config.train.weights.beta_commit);
    }
    maybe(s, "seed", config.train.seed);
    maybe(s, "use_kmeans_init", config.train.use_kmeans_init);
    maybe(s, "reset_dead", config.train.reset_dead);
    maybe(s, "pin_gates_open", config.train.pin_gates_open);
  }
  if (j.contains("piba")) {
    const json& s = j.at("piba");
    expect_keys(s, {"alpha", "theta", "gamma", "i_req", "beta", "max_len"}, "piba");
    maybe(s, "alpha", config.piba.alpha);
    maybe(s, "theta", config.piba.theta);
    maybe(s, "gamma", config.piba.gamma);
    maybe(s, "i_req", config.piba.i_req);
    maybe(s, "beta", config.piba.beta);
    maybe(s, "max_len", config.piba.max_len);
  }
  if (j.contains("decode")) {
    const json& s = j.at("decode");
    expect_keys(s, {"tau", "beam_width", "topk", "fixed_length"}, "decode");
    maybe(s, "tau", config.tau);
    maybe(s, "beam_width", config.beam_width);
    maybe(s, "topk", config.topk);
    maybe(s, "fixed_length", config.fixed_length);
  }
  return config;
}

void write_config(const std::string& path, const harness::PipelineConfig& config) {
  open_out(path) << config_to_json(config).dump(2) << "\n";
}

harness::PipelineConfig read_config(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
    return config_from_json(j);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace vartok::serialize
