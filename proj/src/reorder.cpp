#include "rnmt/reorder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rnmt/error.hpp"

namespace rnmt {

int middle_position(const std::vector<int>& positions) {
  if (positions.empty()) throw DataError("middle_position of an empty list");
  std::size_t k = positions.size();
  return positions[(k + 1) / 2 - 1];
}

namespace {

// Nearest empty slot >= 1 around `desired`; the left candidate is checked
// first at equal distance.
int place(int desired, const std::set<int>& occupied) {
  if (desired < 1) desired = 1;
  if (!occupied.count(desired)) return desired;
  for (int d = 1;; ++d) {
    int left = desired - d;
    if (left >= 1 && !occupied.count(left)) return left;
    int right = desired + d;
    if (!occupied.count(right)) return right;
  }
}

}  // namespace

Reordering alignment_to_reordering(const AlignmentMatrix& a) {
  const int n = a.n;
  std::vector<std::vector<int>> targets(static_cast<std::size_t>(n) + 1);
  for (const auto& [i, j] : a.links) targets[static_cast<std::size_t>(i)].push_back(j);
  // std::set iteration already delivers js sorted per i.

  std::vector<int> slot(static_cast<std::size_t>(n) + 1, 0);  // 0 = unassigned
  std::set<int> occupied;
  auto assign = [&](int i, double desired) {
    int s = place(static_cast<int>(std::floor(desired)), occupied);
    slot[static_cast<std::size_t>(i)] = s;
    occupied.insert(s);
  };

  // Rule 1: exactly one link.
  for (int i = 1; i <= n; ++i)
    if (targets[static_cast<std::size_t>(i)].size() == 1)
      assign(i, targets[static_cast<std::size_t>(i)][0]);
  // Rule 2: several links -> middle linked position.
  for (int i = 1; i <= n; ++i)
    if (targets[static_cast<std::size_t>(i)].size() >= 2)
      assign(i, middle_position(targets[static_cast<std::size_t>(i)]));
  // Rule 3: unaligned -> average of nearest assigned neighbor slots.
  for (int i = 1; i <= n; ++i) {
    if (!targets[static_cast<std::size_t>(i)].empty()) continue;
    int left = 0, right = 0;
    for (int l = i - 1; l >= 1; --l)
      if (slot[static_cast<std::size_t>(l)]) { left = slot[static_cast<std::size_t>(l)]; break; }
    for (int r = i + 1; r <= n; ++r)
      if (slot[static_cast<std::size_t>(r)]) { right = slot[static_cast<std::size_t>(r)]; break; }
    double desired;
    if (left && right)
      desired = (left + right) / 2.0;
    else if (left)
      desired = left;
    else if (right)
      desired = right;
    else
      desired = i;  // no links anywhere: every word keeps its own position
    assign(i, desired);
  }

  // Compact the sparse slot space to dense ranks 1..n.
  std::map<int, int> rank_of_slot;
  for (int s : occupied) {
    int r = static_cast<int>(rank_of_slot.size()) + 1;
    rank_of_slot.emplace(s, r);
  }
  Reordering out;
  out.rank.resize(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    out.rank[static_cast<std::size_t>(i - 1)] = rank_of_slot.at(slot[static_cast<std::size_t>(i)]);
  return out;
}

Sentence apply_reordering(const Sentence& s, const Reordering& r) {
  if (s.size() != r.size())
    throw DataError("reordering length " + std::to_string(r.size()) +
                    " does not match sentence length " + std::to_string(s.size()));
  Sentence out;
  out.ids.resize(s.ids.size());
  out.surface.resize(s.surface.size());
  for (int i = 0; i < s.size(); ++i) {
    int pos = r.rank[static_cast<std::size_t>(i)] - 1;
    out.ids[static_cast<std::size_t>(pos)] = s.ids[static_cast<std::size_t>(i)];
    out.surface[static_cast<std::size_t>(pos)] = s.surface[static_cast<std::size_t>(i)];
  }
  return out;
}

Sentence test_time_reorder(const Sentence& s, const ReorderStrategy& strategy) {
  switch (strategy.kind) {
    case ReorderStrategy::kIdentity:
      return s;
    case ReorderStrategy::kOracle:
      if (!strategy.oracle) throw DataError("oracle reordering requested without a permutation");
      return apply_reordering(s, *strategy.oracle);
  }
  throw DataError("unknown reorder strategy");
}

}  // namespace rnmt
