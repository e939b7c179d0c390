#ifndef RNMT_ALIGN_HPP
#define RNMT_ALIGN_HPP

#include <cstdint>
#include <iosfwd>
#include <set>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rnmt/corpus.hpp"

namespace rnmt {

// Many-to-many link set between source positions 1..n and target
// positions 1..m.
struct AlignmentMatrix {
  int n = 0;
  int m = 0;
  std::set<std::pair<int, int>> links;

  bool in_bounds() const;
};

// IBM Model 1 translation table t(f|e): for each source word e (rows), a
// distribution over target words f. The virtual NULL word reuses id 0
// (the PAD id, which never occurs in text). An untrained table has no
// stored rows and every lookup falls back to the uniform value 1/|V_t|;
// a trained table returns 0 for target words a stored row never saw.
class LexicalTable {
 public:
  static constexpr int kNullWord = 0;

  LexicalTable() = default;
  LexicalTable(int src_vocab, int tgt_vocab);

  double prob(int src, int tgt) const;
  double uniform() const { return uniform_; }
  bool has_row(int src) const;
  void set(int src, int tgt, double p);
  std::size_t entries() const { return t_.size(); }
  int target_vocab() const { return tgt_vocab_; }

  // Row sums over stored entries; 0 for absent rows.
  double row_sum(int src) const;

 private:
  static std::uint64_t key(int src, int tgt) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src)) << 32) |
           static_cast<std::uint32_t>(tgt);
  }

  std::unordered_map<std::uint64_t, double> t_;
  std::vector<std::uint32_t> row_entries_;
  double uniform_ = 0.0;
  int tgt_vocab_ = 0;
};

struct Model1Result {
  LexicalTable table;
  // log_likelihood[k] is the corpus log-likelihood under the parameters
  // entering iteration k; the last entry is under the final parameters.
  std::vector<double> log_likelihood;
};

// EM for IBM Model 1 in the p(target | source) direction: each target
// word is explained by one source word (or NULL when use_null).
// threads == 0 runs the serial reference; otherwise the E step fans out
// across pairs with an ordered merge, so results are bit-identical.
Model1Result train_model1(const ParallelCorpus& corpus, int iterations,
                          bool use_null, int threads = 0);

// Links every source position to its argmax target position (ties go to
// the lowest target position). With use_null, a link is dropped when the
// NULL row explains the chosen target word strictly better than the
// source word does.
AlignmentMatrix viterbi_align(const LexicalTable& table, const SentencePair& pair,
                              bool use_null);

enum class SymMethod { kIntersection, kGdfa };

SymMethod parse_sym_method(const std::string& name);

// intersection = fwd ∩ bwd; gdfa = grow-diag-final-and over fwd ∪ bwd.
// Both arguments must already be in (source, target) orientation.
AlignmentMatrix symmetrize(const AlignmentMatrix& fwd, const AlignmentMatrix& bwd,
                           SymMethod method);

// Pharaoh text format: one line per pair, space-separated `i-j` links,
// 0-based, sorted. Writer and reader round-trip bit-exactly.
void write_pharaoh(std::ostream& out, const std::vector<AlignmentMatrix>& as);
// Returns 1-based link lists; sentence lengths are not part of the format.
std::vector<std::vector<std::pair<int, int>>> read_pharaoh(std::istream& in);

}  // namespace rnmt

#endif
