#ifndef RNMT_CORPUS_HPP
#define RNMT_CORPUS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rnmt/permutation.hpp"

namespace rnmt {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary();

  // Inserts the token if new and returns its id.
  int add(const std::string& tok);
  // Returns kUnk for tokens outside the vocabulary.
  int lookup(const std::string& tok) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(toks_.size()); }
  const std::vector<std::string>& tokens() const { return toks_; }

  // Rebuilds a vocabulary from a saved token list; the list must start
  // with the four reserved symbols.
  static Vocabulary from_tokens(const std::vector<std::string>& toks);

  bool operator==(const Vocabulary& other) const { return toks_ == other.toks_; }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> toks_;
};

struct Sentence {
  std::vector<int> ids;
  std::vector<std::string> surface;

  int size() const { return static_cast<int>(ids.size()); }
};

struct SentencePair {
  Sentence source;
  Sentence target;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  Vocabulary source_vocab;
  Vocabulary target_vocab;

  int size() const { return static_cast<int>(pairs.size()); }
};

// Whitespace tokenization; UTF-8 passes through untouched.
std::vector<std::string> split_tokens(const std::string& line);

Sentence numberize(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<std::string> denumberize(const Sentence& s, const Vocabulary& vocab);

// One sentence per line, tokens joined by single spaces. Lines must be
// non-empty and the two files must have equal line counts; tokens seen
// fewer than min_count times numberize as UNK.
ParallelCorpus load_parallel(const std::string& src_path,
                             const std::string& tgt_path, int min_count);

ParallelCorpus load_parallel_text(std::istream& src, std::istream& tgt,
                                  int min_count);

enum class ReorderRule { kIdentity, kReversal, kVerbFinal };

ReorderRule parse_reorder_rule(const std::string& name);  // rejects unknown ids

struct SyntheticCorpus {
  ParallelCorpus corpus;
  std::vector<Reordering> gold;  // ground-truth permutation per pair
};

// Deterministic toy corpus: random source sentences over vocab_size word
// types, target = dictionary image of the rule-reordered source.
SyntheticCorpus generate_synthetic(int n_pairs, int vocab_size, int max_len,
                                   ReorderRule rule, std::uint64_t seed);

struct Batch {
  std::vector<int> pair_index;  // row -> corpus pair
  std::vector<std::vector<int>> src, tgt;            // padded with kPad
  std::vector<std::vector<std::uint8_t>> src_mask, tgt_mask;
  std::vector<int> src_len, tgt_len;

  int rows() const { return static_cast<int>(pair_index.size()); }
};

Batch make_batch(const ParallelCorpus& corpus, const std::vector<int>& indices);

// Sequential batches covering every pair exactly once, in corpus order.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, int batch_size);

void write_text(std::ostream& out, const std::vector<Sentence>& sents);
std::vector<std::vector<std::string>> read_tokenized_lines(std::istream& in);
std::vector<std::vector<std::string>> read_tokenized_file(const std::string& path);

}  // namespace rnmt

#endif
