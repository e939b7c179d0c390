#ifndef RNMT_REORDER_HPP
#define RNMT_REORDER_HPP

#include <vector>

#include "rnmt/align.hpp"
#include "rnmt/corpus.hpp"
#include "rnmt/permutation.hpp"

namespace rnmt {

// Middle element of a non-empty sorted position list: the 1-based index
// ceil(k/2), which rounds even-length lists down toward the left.
int middle_position(const std::vector<int>& positions);

// Converts a many-to-many alignment into a one-to-one reordering:
//   1. words with exactly one link take that target position,
//   2. words with several links take the middle linked position,
//   3. unaligned words take the floor of the average slot of their
//      nearest assigned neighbors (one-sided at the boundary).
// Each phase runs left to right; a desired slot that is occupied falls
// back to the nearest empty slot >= 1, left wins on ties. Occupied slots
// are finally compacted to ranks 1..n.
Reordering alignment_to_reordering(const AlignmentMatrix& a);

// Output position rank[i] holds source token i+1.
Sentence apply_reordering(const Sentence& s, const Reordering& r);

// Test-time seam for data without targets: identity, or an oracle
// permutation where one exists (synthetic corpora, reference alignments).
struct ReorderStrategy {
  enum Kind { kIdentity, kOracle };
  Kind kind = kIdentity;
  const Reordering* oracle = nullptr;
};

Sentence test_time_reorder(const Sentence& s, const ReorderStrategy& strategy);

}  // namespace rnmt

#endif
