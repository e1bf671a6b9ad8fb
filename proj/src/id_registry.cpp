#include "vartok/id_registry.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vartok::idreg {

int main_length(const SemanticId& id, int codes_per_layer) {
  int n = 0;
  for (int t : id.tokens) {
    if (t >= 0 && t < codes_per_layer) ++n;
  }
  return n;
}

bool has_aux_token(const SemanticId& id, int codes_per_layer) {
  for (int t : id.tokens) {
    if (t >= codes_per_layer && t < 2 * codes_per_layer) return true;
  }
  return false;
}

void validate_id(const SemanticId& id, int codes_per_layer, int max_main_tokens) {
  const int M = codes_per_layer;
  const int eos = 2 * M;
  const auto fail = [](const char* why) { throw std::invalid_argument(std::string("id: ") + why); };
  if (id.tokens.size() < 2) fail("needs at least one main token and EOS");
  if (id.tokens.back() != eos) fail("must end with EOS");
  int mains = 0;
  bool aux_seen = false;
  for (std::size_t i = 0; i + 1 < id.tokens.size(); ++i) {
    const int t = id.tokens[i];
    if (t >= 0 && t < M) {
      if (aux_seen) fail("main token after auxiliary token");
      ++mains;
    } else if (t >= M && t < eos) {
      if (aux_seen) fail("more than one auxiliary token");
      if (i + 2 != id.tokens.size()) fail("auxiliary token must sit just before EOS");
      aux_seen = true;
    } else {
      fail("token out of range");
    }
  }
  if (mains < 1) fail("needs at least one main token");
  if (mains > max_main_tokens) fail("too many main tokens");
}

RawIds assign_raw_ids(const std::vector<Vec>& features, const harq::HarqModel& model,
                      double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("raw ids: tau must lie in (0,1)");
  RawIds raw;
  raw.reserve(features.size());
  for (const Vec& x : features) {
    const harq::ForwardTrace trace = harq::forward(x, model);
    const int len = harq::discretize_length(trace, tau);
    raw.emplace_back(trace.indices.begin(), trace.indices.begin() + len);
  }
  return raw;
}

namespace {

void check_raw(const RawIds& raw, int codes_per_layer) {
  for (const auto& seq : raw) {
    if (seq.empty()) throw std::invalid_argument("raw ids: empty sequence");
    for (int t : seq) {
      if (t < 0 || t >= codes_per_layer) {
        throw std::invalid_argument("raw ids: token outside the main range");
      }
    }
  }
}

std::string format_sequence(const std::vector<int>& seq) {
  std::ostringstream os;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) os << ' ';
    os << seq[i];
  }
  return os.str();
}

}  // namespace

IdTable resolve_collisions(const RawIds& raw, int codes_per_layer) {
  if (codes_per_layer < 2) throw std::invalid_argument("resolve: need at least two codes per layer");
  check_raw(raw, codes_per_layer);

  // Ordered grouping keeps resolution deterministic; items arrive in
  // ascending index order, so each group is already index-sorted.
  std::map<std::vector<int>, std::vector<int>> groups;
  std::size_t max_len = 0;
  for (std::size_t item = 0; item < raw.size(); ++item) {
    groups[raw[item]].push_back(static_cast<int>(item));
    max_len = std::max(max_len, raw[item].size());
  }

  IdTable table;
  table.codes_per_layer = codes_per_layer;
  table.ids.resize(raw.size());
  table.length_histogram.assign(max_len + 1, 0);
  const int eos = table.eos_token();

  for (const auto& [seq, members] : groups) {
    if (static_cast<int>(members.size()) > codes_per_layer) {
      throw std::runtime_error("collision group for sequence (" + format_sequence(seq) +
                               ") has " + std::to_string(members.size()) +
                               " items but only " + std::to_string(codes_per_layer) +
                               " auxiliary tokens exist; raise the codebook size or depth");
    }
    const bool colliding = members.size() > 1;
    if (colliding) table.collision_count += static_cast<long>(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      SemanticId id;
      id.tokens = seq;
      if (colliding) id.tokens.push_back(codes_per_layer + static_cast<int>(k));
      id.tokens.push_back(eos);
      table.ids[members[k]] = std::move(id);
      table.length_histogram[seq.size()] += 1;
    }
  }
  return table;
}

double collision_rate(const RawIds& raw) {
  if (raw.empty()) return 0.0;
  std::map<std::vector<int>, long> counts;
  for (const auto& seq : raw) counts[seq] += 1;
  long involved = 0;
  for (const auto& [seq, n] : counts) {
    if (n >= 2) involved += n;
  }
  return static_cast<double>(involved) / static_cast<double>(raw.size());
}

void write_id_table(const std::string& path, const IdTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("id table: cannot open " + path + " for writing");
  for (std::size_t item = 0; item < table.ids.size(); ++item) {
    out << item << '\t' << format_sequence(table.ids[item].tokens) << '\n';
  }
  if (!out) throw std::runtime_error("id table: write failed for " + path);
}

IdTable read_id_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("id table: cannot open " + path);
  std::map<long, SemanticId> by_item;
  std::string line;
  long line_no = 0;
  int eos = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    long item = -1;
    if (!(is >> item) || item < 0) {
      throw std::runtime_error("id table: bad item id at line " + std::to_string(line_no));
    }
    SemanticId id;
    int tok;
    while (is >> tok) id.tokens.push_back(tok);
    if (id.tokens.size() < 2) {
      throw std::runtime_error("id table: too few tokens at line " + std::to_string(line_no));
    }
    if (eos < 0) {
      eos = id.tokens.back();
      if (eos < 2 || eos % 2 != 0) {
        throw std::runtime_error("id table: invalid EOS token " + std::to_string(eos));
      }
    }
    if (id.tokens.back() != eos) {
      throw std::runtime_error("id table: inconsistent EOS at line " + std::to_string(line_no));
    }
    if (!by_item.emplace(item, std::move(id)).second) {
      throw std::runtime_error("id table: duplicate item " + std::to_string(item));
    }
  }
  if (by_item.empty()) throw std::runtime_error("id table: empty file " + path);

  IdTable table;
  table.codes_per_layer = eos / 2;
  table.ids.resize(by_item.size());
  for (auto& [item, id] : by_item) {
    if (item >= static_cast<long>(by_item.size())) {
      throw std::runtime_error("id table: item ids are not contiguous from zero");
    }
    table.ids[item] = std::move(id);
  }
  std::size_t max_mains = 0;
  for (const SemanticId& id : table.ids) {
    max_mains = std::max(max_mains, static_cast<std::size_t>(main_length(id, table.codes_per_layer)));
  }
  table.length_histogram.assign(max_mains + 1, 0);
  for (const SemanticId& id : table.ids) {
    const int mains = main_length(id, table.codes_per_layer);
    table.length_histogram[mains] += 1;
    if (has_aux_token(id, table.codes_per_layer)) table.collision_count += 1;
  }
  return table;
}

}  // namespace vartok::idreg
