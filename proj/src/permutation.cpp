#include "rnmt/permutation.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "rnmt/error.hpp"

namespace rnmt {

bool Reordering::is_permutation() const {
  std::vector<bool> seen(rank.size(), false);
  for (int r : rank) {
    if (r < 1 || r > size() || seen[static_cast<std::size_t>(r - 1)]) return false;
    seen[static_cast<std::size_t>(r - 1)] = true;
  }
  return true;
}

Reordering Reordering::identity(int n) {
  Reordering r;
  r.rank.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) r.rank[static_cast<std::size_t>(i)] = i + 1;
  return r;
}

Reordering Reordering::reversal(int n) {
  Reordering r;
  r.rank.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) r.rank[static_cast<std::size_t>(i)] = n - i;
  return r;
}

Reordering Reordering::rotate_first_to_last(int n) {
  Reordering r;
  r.rank.resize(static_cast<std::size_t>(n));
  r.rank[0] = n;
  for (int i = 1; i < n; ++i) r.rank[static_cast<std::size_t>(i)] = i;
  return r;
}

bool operator==(const Reordering& a, const Reordering& b) { return a.rank == b.rank; }

Reordering inverse(const Reordering& r) {
  Reordering inv;
  inv.rank.resize(r.rank.size());
  for (int i = 0; i < r.size(); ++i)
    inv.rank[static_cast<std::size_t>(r.rank[static_cast<std::size_t>(i)] - 1)] = i + 1;
  return inv;
}

void write_permutations(std::ostream& out, const std::vector<Reordering>& rs) {
  for (const auto& r : rs) {
    for (std::size_t i = 0; i < r.rank.size(); ++i) {
      if (i) out << ' ';
      out << r.rank[i];
    }
    out << '\n';
  }
}

std::vector<Reordering> read_permutations(std::istream& in) {
  std::vector<Reordering> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    Reordering r;
    std::istringstream iss(line);
    int v;
    while (iss >> v) r.rank.push_back(v);
    if (!r.is_permutation())
      throw DataError("line " + std::to_string(lineno) + " is not a permutation");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rnmt
