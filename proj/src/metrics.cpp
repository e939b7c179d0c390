#include "rnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rnmt/error.hpp"

namespace rnmt {

namespace {

constexpr int kBleuOrder = 4;
constexpr int kMaxShiftSize = 10;

struct NgramHash {
  std::size_t operator()(const std::vector<int>& v) const {
    std::size_t h = 1469598103934665603ull;
    for (int x : v) {
      h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return h;
  }
};

using NgramCounts = std::unordered_map<std::vector<int>, long, NgramHash>;

// Token strings interned to ints so n-gram keys stay cheap.
std::vector<int> intern(const Tokens& toks, std::unordered_map<std::string, int>& table) {
  std::vector<int> out;
  out.reserve(toks.size());
  for (const auto& t : toks) {
    auto [it, fresh] = table.emplace(t, static_cast<int>(table.size()));
    (void)fresh;
    out.push_back(it->second);
  }
  return out;
}

NgramCounts count_ngrams(const std::vector<int>& sent, int order) {
  NgramCounts counts;
  for (int n = 1; n <= order; ++n)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= sent.size(); ++i)
      ++counts[std::vector<int>(sent.begin() + static_cast<std::ptrdiff_t>(i),
                                sent.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

struct BleuStats {
  std::array<long, kBleuOrder> match{};
  std::array<long, kBleuOrder> total{};
  long hyp_len = 0;
  long ref_len = 0;
};

BleuStats bleu_sentence_stats(const Tokens& hyp, const Tokens& ref) {
  BleuStats st;
  st.hyp_len = static_cast<long>(hyp.size());
  st.ref_len = static_cast<long>(ref.size());
  std::unordered_map<std::string, int> table;
  auto h = intern(hyp, table);
  auto r = intern(ref, table);
  NgramCounts hyp_counts = count_ngrams(h, kBleuOrder);
  NgramCounts ref_counts = count_ngrams(r, kBleuOrder);
  for (const auto& [ngram, count] : hyp_counts) {
    int n = static_cast<int>(ngram.size());
    st.total[static_cast<std::size_t>(n - 1)] += count;
    auto it = ref_counts.find(ngram);
    if (it != ref_counts.end())
      st.match[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
  }
  return st;
}

}  // namespace

BleuReport bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references,
                BleuSmoothing smoothing, int threads) {
  if (hypotheses.empty()) throw DataError("BLEU of an empty corpus");
  if (hypotheses.size() != references.size())
    throw DataError("BLEU needs one reference per hypothesis: " +
                    std::to_string(hypotheses.size()) + " vs " +
                    std::to_string(references.size()));

  const int n = static_cast<int>(hypotheses.size());
  std::vector<BleuStats> per(static_cast<std::size_t>(n));
  if (threads == 0) {
    for (int i = 0; i < n; ++i)
      per[static_cast<std::size_t>(i)] =
          bleu_sentence_stats(hypotheses[static_cast<std::size_t>(i)], references[static_cast<std::size_t>(i)]);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
#endif
    for (int i = 0; i < n; ++i)
      per[static_cast<std::size_t>(i)] =
          bleu_sentence_stats(hypotheses[static_cast<std::size_t>(i)], references[static_cast<std::size_t>(i)]);
  }

  BleuStats sum;
  for (const auto& st : per) {
    for (int k = 0; k < kBleuOrder; ++k) {
      sum.match[static_cast<std::size_t>(k)] += st.match[static_cast<std::size_t>(k)];
      sum.total[static_cast<std::size_t>(k)] += st.total[static_cast<std::size_t>(k)];
    }
    sum.hyp_len += st.hyp_len;
    sum.ref_len += st.ref_len;
  }

  BleuReport rep;
  rep.hyp_len = sum.hyp_len;
  rep.ref_len = sum.ref_len;
  if (sum.hyp_len == 0) {
    rep.brevity_penalty = 0.0;
    return rep;
  }
  rep.brevity_penalty =
      std::min(1.0, std::exp(1.0 - static_cast<double>(sum.ref_len) / static_cast<double>(sum.hyp_len)));

  double log_prec = 0.0;
  bool zero = false;
  for (int k = 0; k < kBleuOrder; ++k) {
    double m = static_cast<double>(sum.match[static_cast<std::size_t>(k)]);
    double t = static_cast<double>(sum.total[static_cast<std::size_t>(k)]);
    if (smoothing == BleuSmoothing::kAddOneAboveUnigram && k > 0) {
      m += 1.0;
      t += 1.0;
    }
    double p = t > 0.0 ? m / t : 0.0;
    rep.precisions[static_cast<std::size_t>(k)] = p;
    if (p <= 0.0)
      zero = true;
    else
      log_prec += std::log(p);
  }
  rep.bleu = zero ? 0.0 : 100.0 * rep.brevity_penalty * std::exp(log_prec / kBleuOrder);
  return rep;
}

namespace {

long levenshtein_ids(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Edit breakdown via DP backtrace; preference on ties: match, sub, del, ins.
void levenshtein_counts(const std::vector<int>& a, const std::vector<int>& b,
                        SentenceEdits& out) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<long>> dp(n + 1, std::vector<long>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<long>(i);
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      dp[i][j] = std::min({dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1),
                           dp[i - 1][j] + 1, dp[i][j - 1] + 1});
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] && a[i - 1] == b[j - 1]) {
      --i; --j;
    } else if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + 1) {
      ++out.substitutions; --i; --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++out.deletions; --i;
    } else {
      ++out.insertions; --j;
    }
  }
}

std::vector<int> apply_shift(const std::vector<int>& seq, std::size_t b, std::size_t len,
                             std::size_t dest) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k)
    if (k < b || k >= b + len) out.push_back(seq[k]);
  dest = std::min(dest, out.size());
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(dest), seq.begin() + static_cast<std::ptrdiff_t>(b),
             seq.begin() + static_cast<std::ptrdiff_t>(b + len));
  return out;
}

struct ShiftCand {
  long dist;        // edit distance after the shift
  long move;        // |dest - b|
  std::size_t b, len, dest;
  std::vector<int> seq;
  bool valid = false;
};

// Best shift under the tie order (distance, move, block start, block
// length, destination); the block must match the reference at the
// destination and mismatch the reference at its current position.
ShiftCand best_shift(const std::vector<int>& hyp, const std::vector<int>& ref) {
  ShiftCand best;
  for (std::size_t b = 0; b < hyp.size(); ++b) {
    std::size_t max_len = std::min({hyp.size() - b, static_cast<std::size_t>(kMaxShiftSize)});
    for (std::size_t len = 1; len <= max_len; ++len) {
      bool in_place = b + len <= ref.size() &&
                      std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(b),
                                 hyp.begin() + static_cast<std::ptrdiff_t>(b + len),
                                 ref.begin() + static_cast<std::ptrdiff_t>(b));
      if (in_place) continue;
      for (std::size_t r = 0; r + len <= ref.size(); ++r) {
        if (!std::equal(hyp.begin() + static_cast<std::ptrdiff_t>(b),
                        hyp.begin() + static_cast<std::ptrdiff_t>(b + len),
                        ref.begin() + static_cast<std::ptrdiff_t>(r)))
          continue;
        if (r == b) continue;
        std::vector<int> shifted = apply_shift(hyp, b, len, r);
        long nd = levenshtein_ids(shifted, ref);
        long move = std::labs(static_cast<long>(r) - static_cast<long>(b));
        bool better = !best.valid || nd < best.dist ||
                      (nd == best.dist &&
                       (move < best.move ||
                        (move == best.move &&
                         (b < best.b || (b == best.b && (len < best.len ||
                                                         (len == best.len && r < best.dest)))))));
        if (better) {
          best = ShiftCand{nd, move, b, len, r, std::move(shifted), true};
        }
      }
    }
  }
  return best;
}

}  // namespace

long levenshtein(const Tokens& a, const Tokens& b) {
  std::unordered_map<std::string, int> table;
  return levenshtein_ids(intern(a, table), intern(b, table));
}

SentenceEdits ter_sentence(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw DataError("TER against an empty reference sentence");
  std::unordered_map<std::string, int> table;
  std::vector<int> cur = intern(hyp, table);
  std::vector<int> r = intern(ref, table);

  SentenceEdits out;
  long dist = levenshtein_ids(cur, r);
  while (dist > 0) {
    ShiftCand cand = best_shift(cur, r);
    if (!cand.valid || cand.dist + 1 >= dist) break;
    cur = std::move(cand.seq);
    dist = cand.dist;
    ++out.shifts;
  }
  levenshtein_counts(cur, r, out);
  out.edits = out.shifts + out.insertions + out.deletions + out.substitutions;
  return out;
}

TerReport ter(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references,
              int threads) {
  if (hypotheses.empty()) throw DataError("TER of an empty corpus");
  if (hypotheses.size() != references.size())
    throw DataError("TER needs one reference per hypothesis: " +
                    std::to_string(hypotheses.size()) + " vs " +
                    std::to_string(references.size()));
  const int n = static_cast<int>(hypotheses.size());
  std::vector<SentenceEdits> per(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  auto one = [&](int i) {
    try {
      per[static_cast<std::size_t>(i)] =
          ter_sentence(hypotheses[static_cast<std::size_t>(i)], references[static_cast<std::size_t>(i)]);
    } catch (const Error& err) {
      errors[static_cast<std::size_t>(i)] = err.what();
    }
  };
  if (threads == 0) {
    for (int i = 0; i < n; ++i) one(i);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(threads)
#endif
    for (int i = 0; i < n; ++i) one(i);
  }
  TerReport rep;
  for (int i = 0; i < n; ++i) {
    if (!errors[static_cast<std::size_t>(i)].empty())
      throw DataError(errors[static_cast<std::size_t>(i)] + " (sentence " + std::to_string(i + 1) + ")");
    const auto& e = per[static_cast<std::size_t>(i)];
    rep.edits += e.edits;
    rep.insertions += e.insertions;
    rep.deletions += e.deletions;
    rep.substitutions += e.substitutions;
    rep.shifts += e.shifts;
    rep.ref_words += static_cast<long>(references[static_cast<std::size_t>(i)].size());
  }
  rep.ter = static_cast<double>(rep.edits) / static_cast<double>(rep.ref_words);
  return rep;
}

std::string format_score_line(const BleuReport& b, const TerReport& t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "BLEU=%.2f TER=%.2f", b.bleu, t.ter * 100.0);
  return buf;
}

}  // namespace rnmt
