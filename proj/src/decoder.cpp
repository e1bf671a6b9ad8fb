#include "vartok/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vartok::decoder {

namespace {

constexpr double kDistributionSumTol = 1e-9;

// logit(p) for p supplied as log(p); stable when p underflows to 0.
double logit_from_log(double log_p) {
  // 1 - e^lp computed as -expm1(lp); exact near lp = 0 where 1 - p cancels.
  return log_p - std::log(-std::expm1(log_p));
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Vec checked_distribution(const SequenceModel& model, const std::vector<TokenSeq>& history,
                         const TokenSeq& partial, int max_token) {
  Vec dist = model.next_token_distribution(history, partial);
  if (dist.size() != model.vocab_size()) {
    throw std::runtime_error("sequence model returned a distribution of size " +
                             std::to_string(dist.size()) + ", expected " +
                             std::to_string(model.vocab_size()));
  }
  if (max_token >= dist.size()) {
    throw std::runtime_error("sequence model vocabulary is too small for the id table");
  }
  if ((dist.array() < 0.0).any() || std::abs(dist.sum() - 1.0) > kDistributionSumTol) {
    throw std::runtime_error("sequence model distribution is not a probability vector");
  }
  return dist;
}

Candidate complete_greedily(BeamEntry entry, const std::vector<TokenSeq>& history,
                            const SequenceModel& model, const Trie& trie) {
  const std::size_t max_steps = trie.nodes.size() + 1;
  for (std::size_t step = 0; step < max_steps; ++step) {
    if (trie.is_terminal(entry.node)) {
      return Candidate{trie.nodes[entry.node].item, std::move(entry.tokens), entry.log_prob};
    }
    const Vec dist = checked_distribution(model, history, entry.tokens, trie.eos_token);
    int best_token = -1;
    int best_child = -1;
    double best_p = -1.0;
    for (const auto& [token, child] : trie.nodes[entry.node].children) {
      if (dist[token] > best_p) {  // strict: ties keep the lowest token id
        best_p = dist[token];
        best_token = token;
        best_child = child;
      }
    }
    entry.log_prob += std::log(best_p);
    entry.tokens.push_back(best_token);
    entry.node = best_child;
  }
  throw std::logic_error("trie contains a path longer than its node count");
}

}  // namespace

int Trie::child(int node, int token) const {
  const auto& kids = nodes[node].children;
  const auto it = kids.find(token);
  return it == kids.end() ? -1 : it->second;
}

Trie build_trie(const idreg::IdTable& table) {
  Trie trie;
  trie.nodes.emplace_back();
  trie.eos_token = table.eos_token();
  trie.total_items = static_cast<long>(table.ids.size());

  for (std::size_t item = 0; item < table.ids.size(); ++item) {
    const TokenSeq& tokens = table.ids[item].tokens;
    if (tokens.size() < 2 || tokens.back() != trie.eos_token) {
      throw std::runtime_error("id for item " + std::to_string(item) +
                               " does not end with the end token");
    }
    trie.nodes[0].prefix_count += 1;
    int node = 0;
    for (int token : tokens) {
      if (token < 0 || token > trie.eos_token) {
        throw std::runtime_error("id for item " + std::to_string(item) +
                                 " holds an out-of-range token");
      }
      int next = trie.child(node, token);
      if (next < 0) {
        next = static_cast<int>(trie.nodes.size());
        trie.nodes.emplace_back();
        trie.nodes[node].children.emplace(token, next);
      }
      trie.nodes[next].prefix_count += 1;
      node = next;
    }
    if (trie.nodes[node].item >= 0) {
      throw std::runtime_error("duplicate id: items " +
                               std::to_string(trie.nodes[node].item) + " and " +
                               std::to_string(item) + " share a token sequence");
    }
    trie.nodes[node].item = static_cast<long>(item);
  }
  return trie;
}

DecodeResult constrained_beam_search(const std::vector<TokenSeq>& history,
                                     const SequenceModel& model, const Trie& trie,
                                     int beam_width) {
  if (beam_width < 1) throw std::invalid_argument("beam width must be at least 1");

  DecodeResult result;
  if (trie.nodes[0].children.empty()) return result;

  std::vector<BeamEntry> beam{BeamEntry{}};
  while (!beam.empty()) {
    std::vector<BeamEntry> expanded;
    for (const BeamEntry& entry : beam) {
      const Vec dist = checked_distribution(model, history, entry.tokens, trie.eos_token);
      for (const auto& [token, child] : trie.nodes[entry.node].children) {
        BeamEntry next;
        next.tokens = entry.tokens;
        next.tokens.push_back(token);
        next.log_prob = entry.log_prob + std::log(dist[token]);
        next.node = child;
        if (trie.is_terminal(child)) {
          result.completed.push_back(
              Candidate{trie.nodes[child].item, std::move(next.tokens), next.log_prob});
        } else {
          result.explored.push_back(next);
          expanded.push_back(std::move(next));
        }
      }
    }
    std::sort(expanded.begin(), expanded.end(), [](const BeamEntry& a, const BeamEntry& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.tokens < b.tokens;
    });
    if (expanded.size() > static_cast<std::size_t>(beam_width)) expanded.resize(beam_width);
    beam = std::move(expanded);
  }
  return result;
}

double marginal_prior(const idreg::SemanticId& id, const idreg::IdTable& table,
                      const Trie& trie) {
  const int eos = table.eos_token();
  if (id.tokens.size() < 2 || id.tokens.back() != eos) {
    throw std::invalid_argument("marginal prior requires a complete id ending in the end token");
  }
  int node = 0;
  for (std::size_t i = 0; i + 1 < id.tokens.size(); ++i) {
    node = trie.child(node, id.tokens[i]);
    if (node < 0) throw std::invalid_argument("id is not registered in the trie");
  }
  const int terminal = trie.child(node, eos);
  if (terminal < 0 || !trie.is_terminal(terminal)) {
    throw std::invalid_argument("id is not registered in the trie");
  }
  return (trie.nodes[node].prefix_count + 1.0) / (static_cast<double>(table.ids.size()) + 2.0);
}

double odds_ratio_score(double p_cond, double p_marg) {
  if (!(p_cond > 0.0 && p_cond < 1.0) || !(p_marg > 0.0 && p_marg < 1.0)) {
    throw std::invalid_argument("odds ratio arguments must lie strictly inside (0,1)");
  }
  return std::max(0.0, logit(p_cond) - logit(p_marg));
}

double odds_ratio_score_log(double log_p_cond, double p_marg) {
  if (!(p_marg > 0.0 && p_marg < 1.0)) {
    throw std::invalid_argument("marginal probability must lie strictly inside (0,1)");
  }
  if (std::isnan(log_p_cond)) throw std::invalid_argument("conditional log-probability is NaN");
  if (log_p_cond == -std::numeric_limits<double>::infinity()) return 0.0;
  // Clamp just below certainty so a (mis)reported p_cond >= 1 stays finite.
  const double lp = std::min(log_p_cond, std::log1p(-1e-12));
  return std::max(0.0, logit_from_log(lp) - logit(p_marg));
}

std::vector<RankedItem> rescore_and_rank(const DecodeResult& candidates,
                                         const std::vector<TokenSeq>& history,
                                         const SequenceModel& model,
                                         const idreg::IdTable& table, const Trie& trie,
                                         int topk) {
  if (topk < 0) throw std::invalid_argument("topk must be nonnegative");

  std::map<long, Candidate> pool;
  for (const Candidate& c : candidates.completed) pool.emplace(c.item, c);
  for (const BeamEntry& partial : candidates.explored) {
    Candidate c = complete_greedily(partial, history, model, trie);
    pool.emplace(c.item, std::move(c));
  }

  std::vector<RankedItem> ranked;
  ranked.reserve(pool.size());
  for (const auto& [item, c] : pool) {
    const double prior = marginal_prior(idreg::SemanticId{c.tokens}, table, trie);
    ranked.push_back(RankedItem{item, odds_ratio_score_log(c.log_prob, prior), c.log_prob});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  if (ranked.size() > static_cast<std::size_t>(topk)) ranked.resize(topk);
  return ranked;
}

std::vector<RankedItem> rank_items(const std::vector<TokenSeq>& history,
                                   const SequenceModel& model, const idreg::IdTable& table,
                                   const Trie& trie, int beam_width, int topk) {
  const DecodeResult result = constrained_beam_search(history, model, trie, beam_width);
  return rescore_and_rank(result, history, model, table, trie, topk);
}

MarkovModel::MarkovModel(int vocab) : vocab_(vocab) {
  if (vocab < 2) throw std::invalid_argument("markov model needs at least two tokens");
  counts_ = Eigen::MatrixXd::Zero(vocab_ + 1, vocab_);
}

void MarkovModel::fit(const std::vector<TokenSeq>& streams) {
  counts_.setZero();
  const int eos = eos_token();
  for (const TokenSeq& stream : streams) {
    int state = vocab_;  // start row
    for (int token : stream) {
      if (token < 0 || token >= vocab_) {
        throw std::invalid_argument("stream token " + std::to_string(token) +
                                    " outside vocabulary of " + std::to_string(vocab_));
      }
      counts_(state, token) += 1.0;
      if (token != eos) state = token;  // end tokens never condition what follows
    }
  }
}

int MarkovModel::context_row(const std::vector<TokenSeq>& history,
                             const TokenSeq& partial) const {
  const int eos = eos_token();
  const auto checked = [this](int token) {
    if (token < 0 || token >= vocab_) {
      throw std::invalid_argument("context token " + std::to_string(token) +
                                  " outside vocabulary of " + std::to_string(vocab_));
    }
    return token;
  };
  for (auto it = partial.rbegin(); it != partial.rend(); ++it) {
    if (*it != eos) return checked(*it);
  }
  for (auto seq = history.rbegin(); seq != history.rend(); ++seq) {
    for (auto it = seq->rbegin(); it != seq->rend(); ++it) {
      if (*it != eos) return checked(*it);
    }
  }
  return vocab_;
}

Vec MarkovModel::next_token_distribution(const std::vector<TokenSeq>& history,
                                         const TokenSeq& partial) const {
  const int row = context_row(history, partial);
  const double total = counts_.row(row).sum();
  return ((counts_.row(row).array() + 1.0) / (total + vocab_)).matrix().transpose();
}

ItemTransitionScorer::ItemTransitionScorer(const idreg::IdTable& table, const Trie& trie)
    : table_(table), trie_(trie), items_below_(trie.nodes.size()) {
  const long n = static_cast<long>(table.ids.size());
  for (long item = 0; item < n; ++item) {
    item_of_id_[table.ids[item].tokens] = item;
    int node = 0;
    for (int token : table.ids[item].tokens) {
      node = trie_.child(node, token);
      if (node < 0) throw std::invalid_argument("trie does not contain the table ids");
      items_below_[node].push_back(item);
    }
  }
  counts_ = Eigen::MatrixXd::Zero(n + 1, n);
}

void ItemTransitionScorer::fit(const std::vector<std::vector<long>>& sessions) {
  const long n = static_cast<long>(table_.ids.size());
  counts_.setZero();
  for (const auto& session : sessions) {
    for (std::size_t i = 0; i < session.size(); ++i) {
      const long item = session[i];
      if (item < 0 || item >= n) {
        throw std::invalid_argument("session item " + std::to_string(item) +
                                    " outside the table of " + std::to_string(n));
      }
      counts_(n, item) += 1.0;
      if (i > 0) counts_(session[i - 1], item) += 1.0;
    }
  }
}

Vec ItemTransitionScorer::next_token_distribution(const std::vector<TokenSeq>& history,
                                                  const TokenSeq& partial) const {
  const long n = static_cast<long>(table_.ids.size());
  long row = n;
  if (!history.empty()) {
    const auto it = item_of_id_.find(history.back());
    if (it != item_of_id_.end()) row = it->second;
  }

  Vec dist = Vec::Zero(vocab_size());
  int node = 0;
  for (int token : partial) {
    node = trie_.child(node, token);
    if (node < 0) return Vec::Constant(vocab_size(), 1.0 / vocab_size());
  }
  const auto& children = trie_.nodes[node].children;
  if (children.empty()) return Vec::Constant(vocab_size(), 1.0 / vocab_size());

  double total = 0.0;
  std::vector<std::pair<int, double>> weights;
  weights.reserve(children.size());
  for (const auto& [token, child] : children) {
    double mass = 0.0;
    for (long item : items_below_[child]) mass += counts_(row, item);
    weights.emplace_back(token, mass);
    total += mass;
  }
  const double denom = total + static_cast<double>(children.size());
  for (const auto& [token, mass] : weights) dist[token] = (mass + 1.0) / denom;
  return dist;
}

}  // namespace vartok::decoder
