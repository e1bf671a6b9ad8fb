#pragma once

// Trie-constrained beam search over a pluggable autoregressive scorer, with
// odds-ratio rescoring so ranking does not systematically favor short ids.
//
// The trie stores every registered id as a root-to-terminal path; terminals
// are reached only through the end-of-sequence edge. Beam search expands only
// trie-valid children, so emitted ids always map to registered items. All
// explored partials are kept, greedily completed, and rescored by
//   score = max(0, logit(p_cond) - logit(p_marg)),
// computed in log space (full-sequence conditional probabilities underflow).

#include <Eigen/Dense>

#include <map>
#include <vector>

#include "vartok/id_registry.hpp"

namespace vartok::decoder {

using Vec = Eigen::VectorXd;
using TokenSeq = std::vector<int>;

struct TrieNode {
  std::map<int, int> children;  // token -> node index
  int prefix_count = 0;         // registered ids whose path passes through
  long item = -1;               // >= 0 on terminal nodes only
};

struct Trie {
  std::vector<TrieNode> nodes;  // nodes[0] is the root
  int eos_token = -1;
  long total_items = 0;

  // Child node index, or -1 when the edge does not exist.
  int child(int node, int token) const;
  bool is_terminal(int node) const { return nodes[node].item >= 0; }
};

// Exact id paths from the table; prefix counts at every node on the way.
// Throws std::runtime_error on duplicate ids.
Trie build_trie(const idreg::IdTable& table);

// Next-token scorer. Implementations must return a distribution over the
// full vocabulary (main, auxiliary, and end tokens): nonnegative entries
// summing to 1 within 1e-9. history holds previously consumed token
// sequences; partial is the candidate decoded so far.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int vocab_size() const = 0;
  virtual Vec next_token_distribution(const std::vector<TokenSeq>& history,
                                      const TokenSeq& partial) const = 0;
  // Whether next_token_distribution may be called from several threads.
  virtual bool concurrent_callable() const { return false; }
};

struct BeamEntry {
  TokenSeq tokens;        // trie-valid partial sequence
  double log_prob = 0.0;  // accumulated conditional log-probability
  int node = 0;           // trie cursor for tokens
};

struct Candidate {
  long item = -1;
  TokenSeq tokens;  // full id including the end token
  double log_prob = 0.0;
};

struct DecodeResult {
  std::vector<Candidate> completed;  // every hypothesis that reached the end token
  std::vector<BeamEntry> explored;   // every partial generated during expansion
};

// Beam expansion restricted to trie children; partials are pruned to the top
// `beam_width` by log-probability (ties: lexicographically smallest tokens).
// Completed hypotheses are collected without bound. Empty trie gives an empty
// result. Throws std::invalid_argument for beam_width < 1.
DecodeResult constrained_beam_search(const std::vector<TokenSeq>& history,
                                     const SequenceModel& model, const Trie& trie,
                                     int beam_width);

// Smoothed path frequency of the id: (prefix count of the id's content
// tokens + 1) / (item count + 2), strictly inside (0,1). Throws
// std::invalid_argument when the id is not registered in the trie.
double marginal_prior(const idreg::SemanticId& id, const idreg::IdTable& table,
                      const Trie& trie);

// max(0, log[(p_cond/(1-p_cond)) * ((1-p_marg)/p_marg)]). Both arguments must
// be strictly inside (0,1); throws std::invalid_argument otherwise.
double odds_ratio_score(double p_cond, double p_marg);

// Same score with the conditional supplied as a log-probability, stable for
// log_p_cond far below the smallest representable probability. log_p_cond of
// -inf scores 0; values at or above 0 are clamped just below certainty.
double odds_ratio_score_log(double log_p_cond, double p_marg);

struct RankedItem {
  long item = -1;
  double score = 0.0;
  double log_prob = 0.0;  // conditional log-probability of the full id
};

// Greedily completes every explored partial along its best trie-valid
// continuation, merges with the completed pool, deduplicates by item, scores
// each candidate by the odds ratio against its marginal prior, and returns
// the top `topk` sorted by descending score (ties: lowest item id).
std::vector<RankedItem> rescore_and_rank(const DecodeResult& candidates,
                                         const std::vector<TokenSeq>& history,
                                         const SequenceModel& model,
                                         const idreg::IdTable& table, const Trie& trie,
                                         int topk);

// Full pipeline: constrained beam search then odds-ratio rescoring.
std::vector<RankedItem> rank_items(const std::vector<TokenSeq>& history,
                                   const SequenceModel& model, const idreg::IdTable& table,
                                   const Trie& trie, int beam_width, int topk);

// First-order transition model with add-one smoothing, fit on token streams.
// The end token is emitted like any other token but never becomes the
// conditioning state: the next id's first token is predicted from the last
// content token before it, which preserves item-to-item structure.
class MarkovModel : public SequenceModel {
 public:
  explicit MarkovModel(int vocab);

  void fit(const std::vector<TokenSeq>& streams);

  int vocab_size() const override { return vocab_; }
  Vec next_token_distribution(const std::vector<TokenSeq>& history,
                              const TokenSeq& partial) const override;
  bool concurrent_callable() const override { return true; }  // immutable after fit

  int eos_token() const { return vocab_ - 1; }

 private:
  int context_row(const std::vector<TokenSeq>& history, const TokenSeq& partial) const;

  int vocab_;
  Eigen::MatrixXd counts_;  // (vocab + 1) rows: one per state token, last = stream start
};

// Scorer that projects first-order item-transition counts onto the id trie:
// the next-token distribution weights each child of the current prefix by
// the transition mass of the items below it, with add-one smoothing per
// child so every registered continuation stays reachable. Conditionals
// telescope, so a full id scores near the context item's transition share
// while each prefix node adds count-driven uncertainty. History sequences
// are matched back to items through their registered ids; an unmatched or
// empty context falls back to overall item frequencies.
class ItemTransitionScorer : public SequenceModel {
 public:
  // Both references must outlive the scorer; the trie must be built from
  // the same table.
  ItemTransitionScorer(const idreg::IdTable& table, const Trie& trie);

  // Sessions are item index sequences into the table. Throws
  // std::invalid_argument on out-of-range items.
  void fit(const std::vector<std::vector<long>>& sessions);

  int vocab_size() const override { return 2 * table_.codes_per_layer + 1; }
  Vec next_token_distribution(const std::vector<TokenSeq>& history,
                              const TokenSeq& partial) const override;
  bool concurrent_callable() const override { return true; }  // immutable after fit

 private:
  const idreg::IdTable& table_;
  const Trie& trie_;
  std::map<TokenSeq, long> item_of_id_;
  std::vector<std::vector<long>> items_below_;  // trie node -> items in its subtree
  Eigen::MatrixXd counts_;  // (N + 1) x N; row N = overall item frequencies
};

}  // namespace vartok::decoder
