#pragma once

// Turns per-item quantizer outputs into a globally unique table of
// variable-length token sequences.  Main tokens live in [0, M), auxiliary
// collision-breaking tokens in [M, 2M), and every ID ends with the reserved
// EOS token 2M, which is what makes no complete ID a strict prefix of
// another.

#include "vartok/harq.hpp"

#include <string>
#include <vector>

namespace vartok::idreg {

using Vec = Eigen::VectorXd;

// Full token sequence for one item, EOS included.
struct SemanticId {
  std::vector<int> tokens;

  bool operator==(const SemanticId& other) const { return tokens == other.tokens; }
};

// Number of main-codebook tokens in an ID (auxiliary and EOS excluded).
int main_length(const SemanticId& id, int codes_per_layer);

// True when the ID carries an auxiliary collision-breaking token.
bool has_aux_token(const SemanticId& id, int codes_per_layer);

// Throws std::invalid_argument unless the sequence is main tokens, then at
// most one auxiliary token, then EOS.
void validate_id(const SemanticId& id, int codes_per_layer, int max_main_tokens);

struct IdTable {
  int codes_per_layer = 0;            // M; EOS is 2M
  std::vector<SemanticId> ids;        // indexed by item
  long collision_count = 0;           // items that shared a raw sequence
  std::vector<long> length_histogram; // index = main-token count

  int eos_token() const { return 2 * codes_per_layer; }
};

// Raw main-token sequences indexed by item, before uniqueness handling.
using RawIds = std::vector<std::vector<int>>;

// Forward pass + length discretization per item; tokens are the selected
// codeword indices of the first discretize_length layers.
RawIds assign_raw_ids(const std::vector<Vec>& features, const harq::HarqModel& model,
                      double tau);

// Groups identical raw sequences; members of a group (ascending item index)
// get auxiliary tokens M+0, M+1, ... appended; everyone gets EOS.  Throws
// std::runtime_error naming the sequence when a group exceeds M members.
IdTable resolve_collisions(const RawIds& raw, int codes_per_layer);

// Fraction of items whose raw sequence is shared with at least one other
// item (the items-involved convention; a pairs-based rate would differ).
double collision_rate(const RawIds& raw);

// One line per item: "<item>\t<token> <token> ...".  EOS is stored, so the
// reader can recover M from any line.
void write_id_table(const std::string& path, const IdTable& table);
IdTable read_id_table(const std::string& path);

}  // namespace vartok::idreg
