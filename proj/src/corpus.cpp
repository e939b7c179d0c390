#include "rnmt/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rnmt/error.hpp"
#include "rnmt/rng.hpp"

namespace rnmt {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<s>");
  add("</s>");
}

int Vocabulary::add(const std::string& tok) {
  auto it = ids_.find(tok);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(toks_.size());
  ids_.emplace(tok, id);
  toks_.push_back(tok);
  return id;
}

int Vocabulary::lookup(const std::string& tok) const {
  auto it = ids_.find(tok);
  return it == ids_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& toks) {
  Vocabulary v;
  if (toks.size() < 4 || toks[0] != "<pad>" || toks[1] != "<unk>" || toks[2] != "<s>" ||
      toks[3] != "</s>")
    throw DataError("vocabulary list does not start with the reserved symbols");
  for (std::size_t i = 4; i < toks.size(); ++i) v.add(toks[i]);
  if (v.size() != static_cast<int>(toks.size()))
    throw DataError("vocabulary list contains duplicate tokens");
  return v;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
  return toks_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

Sentence numberize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  Sentence s;
  s.surface = tokens;
  s.ids.reserve(tokens.size());
  for (const auto& tok : tokens) s.ids.push_back(vocab.lookup(tok));
  return s;
}

std::vector<std::string> denumberize(const Sentence& s, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(s.ids.size());
  for (int id : s.ids) out.push_back(vocab.token(id));
  return out;
}

std::vector<std::vector<std::string>> read_tokenized_lines(std::istream& in) {
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(split_tokens(line));
  return lines;
}

std::vector<std::vector<std::string>> read_tokenized_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  return read_tokenized_lines(in);
}

namespace {

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& lines, int min_count) {
  std::unordered_map<std::string, int> freq;
  for (const auto& toks : lines)
    for (const auto& tok : toks) ++freq[tok];
  Vocabulary vocab;
  // Insertion in corpus order keeps ids deterministic.
  for (const auto& toks : lines)
    for (const auto& tok : toks)
      if (freq[tok] >= min_count) vocab.add(tok);
  return vocab;
}

}  // namespace

ParallelCorpus load_parallel_text(std::istream& src, std::istream& tgt, int min_count) {
  auto src_lines = read_tokenized_lines(src);
  auto tgt_lines = read_tokenized_lines(tgt);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("line-count mismatch: source has " + std::to_string(src_lines.size()) +
                    " lines, target has " + std::to_string(tgt_lines.size()));
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    if (src_lines[i].empty())
      throw DataError("empty source line at line " + std::to_string(i + 1));
    if (tgt_lines[i].empty())
      throw DataError("empty target line at line " + std::to_string(i + 1));
  }
  ParallelCorpus corpus;
  corpus.source_vocab = build_vocab(src_lines, min_count);
  corpus.target_vocab = build_vocab(tgt_lines, min_count);
  corpus.pairs.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i)
    corpus.pairs.push_back({numberize(src_lines[i], corpus.source_vocab),
                            numberize(tgt_lines[i], corpus.target_vocab)});
  return corpus;
}

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             int min_count) {
  std::ifstream src(src_path);
  if (!src) throw DataError("cannot open source file: " + src_path);
  std::ifstream tgt(tgt_path);
  if (!tgt) throw DataError("cannot open target file: " + tgt_path);
  return load_parallel_text(src, tgt, min_count);
}

ReorderRule parse_reorder_rule(const std::string& name) {
  if (name == "identity") return ReorderRule::kIdentity;
  if (name == "reversal") return ReorderRule::kReversal;
  if (name == "verbfinal") return ReorderRule::kVerbFinal;
  throw DataError("unknown reorder rule '" + name +
                  "' (valid: identity, reversal, verbfinal)");
}

namespace {

Reordering rule_permutation(ReorderRule rule, int n) {
  switch (rule) {
    case ReorderRule::kIdentity: return Reordering::identity(n);
    case ReorderRule::kReversal: return Reordering::reversal(n);
    case ReorderRule::kVerbFinal: return Reordering::rotate_first_to_last(n);
  }
  throw DataError("unknown reorder rule");
}

}  // namespace

SyntheticCorpus generate_synthetic(int n_pairs, int vocab_size, int max_len,
                                   ReorderRule rule, std::uint64_t seed) {
  if (vocab_size < 4) throw DataError("synthetic vocab_size must be >= 4");
  if (max_len < 2) throw DataError("synthetic max_len must be >= 2");

  SyntheticCorpus out;
  Rng rng(seed);
  std::vector<std::string> src_words, tgt_words;
  for (int k = 0; k < vocab_size; ++k) {
    src_words.push_back("s" + std::to_string(k));
    tgt_words.push_back("t" + std::to_string(k));
    out.corpus.source_vocab.add(src_words.back());
    out.corpus.target_vocab.add(tgt_words.back());
  }

  out.corpus.pairs.reserve(static_cast<std::size_t>(n_pairs));
  out.gold.reserve(static_cast<std::size_t>(n_pairs));
  for (int p = 0; p < n_pairs; ++p) {
    int len = rng.uniform_int(1, max_len);
    std::vector<int> word(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) word[static_cast<std::size_t>(i)] = rng.uniform_int(0, vocab_size - 1);

    Reordering perm = rule_permutation(rule, len);
    Sentence src, tgt;
    tgt.ids.resize(static_cast<std::size_t>(len));
    tgt.surface.resize(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      const std::string& sw = src_words[static_cast<std::size_t>(word[static_cast<std::size_t>(i)])];
      src.surface.push_back(sw);
      src.ids.push_back(out.corpus.source_vocab.lookup(sw));
      // Source word i+1 lands at target slot perm.rank[i].
      const std::string& tw = tgt_words[static_cast<std::size_t>(word[static_cast<std::size_t>(i)])];
      tgt.surface[static_cast<std::size_t>(perm.rank[static_cast<std::size_t>(i)] - 1)] = tw;
      tgt.ids[static_cast<std::size_t>(perm.rank[static_cast<std::size_t>(i)] - 1)] =
          out.corpus.target_vocab.lookup(tw);
    }
    out.corpus.pairs.push_back({std::move(src), std::move(tgt)});
    out.gold.push_back(std::move(perm));
  }
  return out;
}

Batch make_batch(const ParallelCorpus& corpus, const std::vector<int>& indices) {
  Batch b;
  b.pair_index = indices;
  int max_src = 0, max_tgt = 0;
  for (int idx : indices) {
    const auto& pair = corpus.pairs[static_cast<std::size_t>(idx)];
    max_src = std::max(max_src, pair.source.size());
    max_tgt = std::max(max_tgt, pair.target.size());
  }
  for (int idx : indices) {
    const auto& pair = corpus.pairs[static_cast<std::size_t>(idx)];
    std::vector<int> s(static_cast<std::size_t>(max_src), Vocabulary::kPad);
    std::vector<int> t(static_cast<std::size_t>(max_tgt), Vocabulary::kPad);
    std::vector<std::uint8_t> sm(static_cast<std::size_t>(max_src), 0);
    std::vector<std::uint8_t> tm(static_cast<std::size_t>(max_tgt), 0);
    for (int i = 0; i < pair.source.size(); ++i) {
      s[static_cast<std::size_t>(i)] = pair.source.ids[static_cast<std::size_t>(i)];
      sm[static_cast<std::size_t>(i)] = 1;
    }
    for (int i = 0; i < pair.target.size(); ++i) {
      t[static_cast<std::size_t>(i)] = pair.target.ids[static_cast<std::size_t>(i)];
      tm[static_cast<std::size_t>(i)] = 1;
    }
    b.src.push_back(std::move(s));
    b.tgt.push_back(std::move(t));
    b.src_mask.push_back(std::move(sm));
    b.tgt_mask.push_back(std::move(tm));
    b.src_len.push_back(pair.source.size());
    b.tgt_len.push_back(pair.target.size());
  }
  return b;
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, int batch_size) {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  std::vector<Batch> batches;
  std::vector<int> indices;
  for (int i = 0; i < corpus.size(); ++i) {
    indices.push_back(i);
    if (static_cast<int>(indices.size()) == batch_size) {
      batches.push_back(make_batch(corpus, indices));
      indices.clear();
    }
  }
  if (!indices.empty()) batches.push_back(make_batch(corpus, indices));
  return batches;
}

void write_text(std::ostream& out, const std::vector<Sentence>& sents) {
  for (const auto& s : sents) {
    for (std::size_t i = 0; i < s.surface.size(); ++i) {
      if (i) out << ' ';
      out << s.surface[i];
    }
    out << '\n';
  }
}

}  // namespace rnmt
