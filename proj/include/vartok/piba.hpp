#pragma once

// Popularity-to-length allocation.
//
// Popular items carry collaborative signal and need little identifier
// capacity; cold items need more.  This module computes the information
// accounting (collaborative info, semantic capacity of an L-layer code,
// their gap), the closed-form optimal length, and the rank-quantile rule
// that assigns each catalog item a discrete target length in [1, K] plus a
// prefix-shaped binary mask over layers.
//
// All logarithms are natural; the gamma parameter's relation to the
// codebook size (gamma ~ log2 M) survives only as a default value.

#include <cstdint>
#include <vector>

namespace vartok::piba {

struct PibaParams {
  double alpha = 1.0;   // collaborative info gain rate
  double theta = 999.0; // popularity scale inside log(1 + theta p)
  double gamma = 8.0;   // per-layer base capacity, default log2(256)
  double i_req = 3.0;   // required information budget
  double beta = 1.2;    // quantile temperature
  int max_len = 10;     // K, maximum ID length in layers

  // Throws std::invalid_argument unless all fields are strictly positive
  // and max_len >= 1.
  void validate() const;
};

// Catalog popularity with ranks.  Rank 0 is the most popular item; ties are
// broken by ascending item index (stable).  Coldness q_i = rank_i / (N-1).
class PopularityTable {
 public:
  // popularity[i] is item i's probability mass; requires every p in (0, 1]
  // and sum p == 1 within 1e-9.
  explicit PopularityTable(std::vector<double> popularity);

  int size() const { return static_cast<int>(p_.size()); }
  double popularity(int item) const { return p_.at(item); }
  int rank(int item) const { return rank_.at(item); }
  // Requires N >= 2.
  double coldness(int item) const;

 private:
  std::vector<double> p_;
  std::vector<int> rank_;
};

struct LengthAssignment {
  std::vector<int> lengths;                     // L_i in [1, K]
  std::vector<std::vector<std::uint8_t>> masks; // prefix-shaped, length K each
};

// alpha * ln(1 + theta p).  Requires p in [0, 1].
double collab_info(double p, const PibaParams& params);

// gamma * H_L, the exact harmonic sum (not its log approximation).
// Requires L >= 1.
double semantic_info(int len, double gamma);

// i_req - collab_info(p); negative for very popular items (callers clamp
// derived lengths to >= 1).
double info_gap(double p, const PibaParams& params);

// exp(gap / gamma): the exact solution of gamma * ln L = gap, i.e. the
// closed form with the harmonic sum replaced by ln L.  Requires p > 0.
double optimal_length_closed_form(double p, const PibaParams& params);

// exp(gap / gamma - em): the same inversion with the Euler-Mascheroni
// constant of H_L ~ ln L + em retained.  This variant tracks the integer
// minimal length (smallest L with semantic_info(L) >= gap) within one
// layer; the ln-only form overshoots it by a factor e^em ~ 1.78.
double optimal_length_harmonic(double p, const PibaParams& params);

// Rank-quantile discretization:
//   L_i = clip(round(1 + (K-1) * q_i^beta), 1, K)
// with round = half-away-from-zero.  Requires N >= 2.
LengthAssignment assign_lengths(const PopularityTable& table, const PibaParams& params);

// Prefix-shaped indicator (1,...,1,0,...,0) with l_hat ones.
// Requires 1 <= l_hat <= max_len.
std::vector<std::uint8_t> target_mask(int l_hat, int max_len);

}  // namespace vartok::piba
