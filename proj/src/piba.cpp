#include "vartok/piba.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vartok::piba {

namespace {

// Euler-Mascheroni constant (H_L = ln L + em + 1/(2L) - ...).
constexpr double kEulerMascheroni = 0.5772156649015329;

void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("popularity must lie in [0, 1]");
  }
}

}  // namespace

void PibaParams::validate() const {
  if (!(alpha > 0.0) || !(theta > 0.0) || !(gamma > 0.0) || !(i_req > 0.0) ||
      !(beta > 0.0) || max_len < 1) {
    throw std::invalid_argument("PibaParams: all fields must be strictly positive, K >= 1");
  }
}

PopularityTable::PopularityTable(std::vector<double> popularity) : p_(std::move(popularity)) {
  if (p_.empty()) throw std::invalid_argument("PopularityTable: empty");
  double sum = 0.0;
  for (double p : p_) {
    if (!(p > 0.0 && p <= 1.0)) {
      throw std::invalid_argument("PopularityTable: popularity must lie in (0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("PopularityTable: popularities must sum to 1 within 1e-9");
  }
  // Stable sort by descending popularity; ties keep ascending item index.
  std::vector<int> order(p_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return p_[a] > p_[b]; });
  rank_.assign(p_.size(), 0);
  for (int r = 0; r < static_cast<int>(order.size()); ++r) rank_[order[r]] = r;
}

double PopularityTable::coldness(int item) const {
  if (size() < 2) throw std::invalid_argument("coldness undefined for N < 2");
  return static_cast<double>(rank_.at(item)) / (size() - 1);
}

double collab_info(double p, const PibaParams& params) {
  params.validate();
  check_p(p);
  return params.alpha * std::log1p(params.theta * p);
}

double semantic_info(int len, double gamma) {
  if (len < 1) throw std::invalid_argument("semantic_info: L must be >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("semantic_info: gamma must be positive");
  double h = 0.0;
  for (int l = 1; l <= len; ++l) h += 1.0 / l;
  return gamma * h;
}

double info_gap(double p, const PibaParams& params) {
  return params.i_req - collab_info(p, params);
}

double optimal_length_closed_form(double p, const PibaParams& params) {
  if (!(p > 0.0)) throw std::invalid_argument("optimal_length_closed_form: p must be > 0");
  return std::exp(info_gap(p, params) / params.gamma);
}

double optimal_length_harmonic(double p, const PibaParams& params) {
  if (!(p > 0.0)) throw std::invalid_argument("optimal_length_harmonic: p must be > 0");
  return std::exp(info_gap(p, params) / params.gamma - kEulerMascheroni);
}

LengthAssignment assign_lengths(const PopularityTable& table, const PibaParams& params) {
  params.validate();
  const int n = table.size();
  if (n < 2) throw std::invalid_argument("assign_lengths: N must be >= 2");
  const int k = params.max_len;

  LengthAssignment out;
  out.lengths.resize(n);
  out.masks.resize(n);
  for (int i = 0; i < n; ++i) {
    const double q = table.coldness(i);
    const double raw = 1.0 + (k - 1) * std::pow(q, params.beta);
    const double rounded = std::round(raw);  // half away from zero
    const int len = static_cast<int>(std::clamp(rounded, 1.0, static_cast<double>(k)));
    out.lengths[i] = len;
    out.masks[i] = target_mask(len, k);
  }
  return out;
}

std::vector<std::uint8_t> target_mask(int l_hat, int max_len) {
  if (l_hat < 1 || l_hat > max_len) {
    throw std::invalid_argument("target_mask: L must lie in [1, K]");
  }
  std::vector<std::uint8_t> mask(max_len, 0);
  for (int l = 0; l < l_hat; ++l) mask[l] = 1;
  return mask;
}

}  // namespace vartok::piba
