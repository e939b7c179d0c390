#include "rnmt/align.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rnmt/error.hpp"

namespace rnmt {

bool AlignmentMatrix::in_bounds() const {
  for (const auto& [i, j] : links)
    if (i < 1 || i > n || j < 1 || j > m) return false;
  return true;
}

LexicalTable::LexicalTable(int src_vocab, int tgt_vocab)
    : row_entries_(static_cast<std::size_t>(src_vocab), 0),
      uniform_(tgt_vocab > 0 ? 1.0 / tgt_vocab : 0.0),
      tgt_vocab_(tgt_vocab) {}

bool LexicalTable::has_row(int src) const {
  return src >= 0 && src < static_cast<int>(row_entries_.size()) &&
         row_entries_[static_cast<std::size_t>(src)] > 0;
}

double LexicalTable::prob(int src, int tgt) const {
  if (!has_row(src)) return uniform_;
  auto it = t_.find(key(src, tgt));
  return it == t_.end() ? 0.0 : it->second;
}

void LexicalTable::set(int src, int tgt, double p) {
  auto [it, inserted] = t_.insert_or_assign(key(src, tgt), p);
  (void)it;
  if (inserted) ++row_entries_[static_cast<std::size_t>(src)];
}

double LexicalTable::row_sum(int src) const {
  double sum = 0.0;
  for (const auto& [k, v] : t_)
    if (static_cast<int>(k >> 32) == src) sum += v;
  return sum;
}

namespace {

// Per-pair E-step output. Count contributions are appended in a fixed
// (target-major, source-minor) loop order so the global merge is
// deterministic no matter which thread produced them.
struct PairEstep {
  double log_likelihood = 0.0;
  std::vector<std::pair<std::uint64_t, double>> counts;  // ((e<<32)|f, posterior)
};

std::uint64_t pair_key(int e, int f) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e)) << 32) |
         static_cast<std::uint32_t>(f);
}

void estep_pair(const LexicalTable& table, const SentencePair& pair, bool use_null,
                PairEstep& out) {
  out.log_likelihood = 0.0;
  out.counts.clear();  // keeps capacity across reuses
  const auto& src = pair.source.ids;
  const auto& tgt = pair.target.ids;
  const int n = static_cast<int>(src.size());
  const double slot_prior = std::log(static_cast<double>(n + (use_null ? 1 : 0)));
  out.counts.reserve(tgt.size() * (src.size() + 1));
  for (int f : tgt) {
    double denom = 0.0;
    if (use_null) denom += table.prob(LexicalTable::kNullWord, f);
    for (int e : src) denom += table.prob(e, f);
    out.log_likelihood += std::log(denom) - slot_prior;
    if (denom <= 0.0) continue;
    if (use_null) {
      double p = table.prob(LexicalTable::kNullWord, f) / denom;
      out.counts.emplace_back(pair_key(LexicalTable::kNullWord, f), p);
    }
    for (int e : src) out.counts.emplace_back(pair_key(e, f), table.prob(e, f) / denom);
  }
}

double corpus_log_likelihood(const ParallelCorpus& corpus, const LexicalTable& table,
                             bool use_null) {
  double ll = 0.0;
  for (const auto& pair : corpus.pairs) {
    const auto& src = pair.source.ids;
    const double slot_prior =
        std::log(static_cast<double>(src.size() + (use_null ? 1 : 0)));
    for (int f : pair.target.ids) {
      double denom = 0.0;
      if (use_null) denom += table.prob(LexicalTable::kNullWord, f);
      for (int e : src) denom += table.prob(e, f);
      ll += std::log(denom) - slot_prior;
    }
  }
  return ll;
}

// Merges per-pair contributions into the global counts in pair order;
// shared by the serial reference and the parallel driver so both produce
// the same floating-point sums.
void merge_estep(const PairEstep& pe, std::unordered_map<std::uint64_t, double>& counts,
                 std::vector<double>& totals) {
  for (const auto& [k, v] : pe.counts) {
    counts[k] += v;
    totals[static_cast<std::size_t>(k >> 32)] += v;
  }
}

}  // namespace

Model1Result train_model1(const ParallelCorpus& corpus, int iterations, bool use_null,
                          int threads) {
  if (corpus.size() == 0) throw DataError("cannot train alignment model on an empty corpus");
  if (iterations < 0) throw DataError("iterations must be >= 0");

  Model1Result result;
  result.table = LexicalTable(corpus.source_vocab.size(), corpus.target_vocab.size());

  const int npairs = corpus.size();
  for (int iter = 0; iter < iterations; ++iter) {
    std::unordered_map<std::uint64_t, double> counts;
    std::vector<double> totals(static_cast<std::size_t>(corpus.source_vocab.size()), 0.0);
    double ll = 0.0;

    if (threads == 0) {
      // Serial reference.
      for (int p = 0; p < npairs; ++p) {
        PairEstep pe = estep_pair(result.table, corpus.pairs[static_cast<std::size_t>(p)], use_null);
        ll += pe.log_likelihood;
        merge_estep(pe, counts, totals);
      }
    } else {
      std::vector<PairEstep> per_pair(static_cast<std::size_t>(npairs));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
#endif
      for (int p = 0; p < npairs; ++p)
        per_pair[static_cast<std::size_t>(p)] =
            estep_pair(result.table, corpus.pairs[static_cast<std::size_t>(p)], use_null);
      for (int p = 0; p < npairs; ++p)
        ll += per_pair[static_cast<std::size_t>(p)].log_likelihood;
      // Striped merge: each thread owns the source ids congruent to its
      // stripe, so every accumulator still sees its updates in pair order
      // and the totals match the serial fold bit for bit.
#ifdef _OPENMP
#pragma omp parallel num_threads(threads)
      {
        const int stripe_count = omp_get_num_threads();
        const int stripe = omp_get_thread_num();
        std::unordered_map<std::uint64_t, double> local_counts;
        for (int p = 0; p < npairs; ++p)
          for (const auto& [k, v] : per_pair[static_cast<std::size_t>(p)].counts) {
            int e = static_cast<int>(k >> 32);
            if (e % stripe_count != stripe) continue;
            local_counts[k] += v;
            totals[static_cast<std::size_t>(e)] += v;
          }
#pragma omp critical
        counts.merge(local_counts);
      }
#else
      for (int p = 0; p < npairs; ++p) merge_estep(per_pair[static_cast<std::size_t>(p)], counts, totals);
#endif
    }
    result.log_likelihood.push_back(ll);

    LexicalTable next(corpus.source_vocab.size(), corpus.target_vocab.size());
    for (const auto& [k, c] : counts) {
      double total = totals[static_cast<std::size_t>(k >> 32)];
      if (total > 0.0)
        next.set(static_cast<int>(k >> 32), static_cast<int>(k & 0xffffffffu), c / total);
    }
    result.table = std::move(next);
  }
  result.log_likelihood.push_back(corpus_log_likelihood(corpus, result.table, use_null));
  return result;
}

AlignmentMatrix viterbi_align(const LexicalTable& table, const SentencePair& pair,
                              bool use_null) {
  AlignmentMatrix a;
  a.n = pair.source.size();
  a.m = pair.target.size();
  for (int i = 1; i <= a.n; ++i) {
    int e = pair.source.ids[static_cast<std::size_t>(i - 1)];
    int best_j = 1;
    double best = -1.0;
    for (int j = 1; j <= a.m; ++j) {
      double p = table.prob(e, pair.target.ids[static_cast<std::size_t>(j - 1)]);
      if (p > best) {
        best = p;
        best_j = j;
      }
    }
    if (a.m == 0) continue;
    if (use_null) {
      int f = pair.target.ids[static_cast<std::size_t>(best_j - 1)];
      if (table.prob(LexicalTable::kNullWord, f) > best) continue;
    }
    a.links.emplace(i, best_j);
  }
  return a;
}

SymMethod parse_sym_method(const std::string& name) {
  if (name == "intersection") return SymMethod::kIntersection;
  if (name == "gdfa") return SymMethod::kGdfa;
  throw DataError("unknown symmetrization method '" + name +
                  "' (valid: intersection, gdfa)");
}

namespace {

AlignmentMatrix grow_diag_final_and(const AlignmentMatrix& fwd, const AlignmentMatrix& bwd) {
  AlignmentMatrix out;
  out.n = fwd.n;
  out.m = fwd.m;
  std::set<std::pair<int, int>> uni;
  std::set_union(fwd.links.begin(), fwd.links.end(), bwd.links.begin(), bwd.links.end(),
                 std::inserter(uni, uni.begin()));
  std::set_intersection(fwd.links.begin(), fwd.links.end(), bwd.links.begin(),
                        bwd.links.end(), std::inserter(out.links, out.links.begin()));

  std::vector<bool> src_cov(static_cast<std::size_t>(out.n) + 1, false);
  std::vector<bool> tgt_cov(static_cast<std::size_t>(out.m) + 1, false);
  for (const auto& [i, j] : out.links) {
    src_cov[static_cast<std::size_t>(i)] = true;
    tgt_cov[static_cast<std::size_t>(j)] = true;
  }

  // Grow: scan current links in (i,j) order, adding 8-adjacent union links
  // that touch an uncovered row or column, until a full scan adds nothing.
  static constexpr int kOff[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                     {0, 1},   {1, -1}, {1, 0},  {1, 1}};
  bool grew = true;
  while (grew) {
    grew = false;
    for (auto it = out.links.begin(); it != out.links.end(); ++it) {
      for (const auto& off : kOff) {
        int ni = it->first + off[0];
        int nj = it->second + off[1];
        if (ni < 1 || ni > out.n || nj < 1 || nj > out.m) continue;
        if (!uni.count({ni, nj}) || out.links.count({ni, nj})) continue;
        if (src_cov[static_cast<std::size_t>(ni)] && tgt_cov[static_cast<std::size_t>(nj)])
          continue;
        out.links.emplace(ni, nj);
        src_cov[static_cast<std::size_t>(ni)] = true;
        tgt_cov[static_cast<std::size_t>(nj)] = true;
        grew = true;
      }
    }
  }

  // Final-and: union links whose endpoints are both still uncovered.
  for (const auto& [i, j] : uni) {
    if (src_cov[static_cast<std::size_t>(i)] || tgt_cov[static_cast<std::size_t>(j)]) continue;
    out.links.emplace(i, j);
    src_cov[static_cast<std::size_t>(i)] = true;
    tgt_cov[static_cast<std::size_t>(j)] = true;
  }
  return out;
}

}  // namespace

AlignmentMatrix symmetrize(const AlignmentMatrix& fwd, const AlignmentMatrix& bwd,
                           SymMethod method) {
  if (fwd.n != bwd.n || fwd.m != bwd.m)
    throw DataError("symmetrize dimension mismatch: (" + std::to_string(fwd.n) + "," +
                    std::to_string(fwd.m) + ") vs (" + std::to_string(bwd.n) + "," +
                    std::to_string(bwd.m) + ")");
  if (method == SymMethod::kIntersection) {
    AlignmentMatrix out;
    out.n = fwd.n;
    out.m = fwd.m;
    std::set_intersection(fwd.links.begin(), fwd.links.end(), bwd.links.begin(),
                          bwd.links.end(), std::inserter(out.links, out.links.begin()));
    return out;
  }
  return grow_diag_final_and(fwd, bwd);
}

void write_pharaoh(std::ostream& out, const std::vector<AlignmentMatrix>& as) {
  for (const auto& a : as) {
    bool first = true;
    for (const auto& [i, j] : a.links) {
      if (!first) out << ' ';
      out << (i - 1) << '-' << (j - 1);
      first = false;
    }
    out << '\n';
  }
}

std::vector<std::vector<std::pair<int, int>>> read_pharaoh(std::istream& in) {
  std::vector<std::vector<std::pair<int, int>>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::pair<int, int>> links;
    std::istringstream iss(line);
    std::string tok;
    while (iss >> tok) {
      auto dash = tok.find('-');
      if (dash == std::string::npos)
        throw DataError("malformed alignment link '" + tok + "' at line " +
                        std::to_string(lineno));
      try {
        int i = std::stoi(tok.substr(0, dash));
        int j = std::stoi(tok.substr(dash + 1));
        links.emplace_back(i + 1, j + 1);
      } catch (const std::exception&) {
        throw DataError("malformed alignment link '" + tok + "' at line " +
                        std::to_string(lineno));
      }
    }
    out.push_back(std::move(links));
  }
  return out;
}

}  // namespace rnmt
