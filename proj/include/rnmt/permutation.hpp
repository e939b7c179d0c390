#ifndef RNMT_PERMUTATION_HPP
#define RNMT_PERMUTATION_HPP

#include <iosfwd>
#include <vector>

namespace rnmt {

// A one-to-one source reordering. rank[i] is the final position (1..n) of
// source word i+1, so positions stay 1-based in all the reordering math
// while storage stays 0-based.
struct Reordering {
  std::vector<int> rank;

  int size() const { return static_cast<int>(rank.size()); }
  bool is_permutation() const;

  static Reordering identity(int n);
  static Reordering reversal(int n);
  // Moves the first word to the last position, shifting the rest left.
  static Reordering rotate_first_to_last(int n);
};

bool operator==(const Reordering& a, const Reordering& b);

Reordering inverse(const Reordering& r);

// Permutation file format: one line per sentence, space-separated ranks,
// 1-based.
void write_permutations(std::ostream& out, const std::vector<Reordering>& rs);
std::vector<Reordering> read_permutations(std::istream& in);

}  // namespace rnmt

#endif
