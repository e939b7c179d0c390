#ifndef RNMT_METRICS_HPP
#define RNMT_METRICS_HPP

#include <array>
#include <string>
#include <vector>

namespace rnmt {

using Tokens = std::vector<std::string>;

struct BleuReport {
  double bleu = 0.0;  // 0..100
  std::array<double, 4> precisions{};
  double brevity_penalty = 1.0;
  long hyp_len = 0;
  long ref_len = 0;
};

enum class BleuSmoothing { kNone, kAddOneAboveUnigram };

// Corpus-level 4-gram BLEU with a single reference: clipped counts are
// summed over the corpus before division; BP = min(1, exp(1 - ref/hyp)).
// Unsmoothed BLEU is 0 when any order has no match.
BleuReport bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references,
                BleuSmoothing smoothing = BleuSmoothing::kNone, int threads = 0);

struct TerReport {
  double ter = 0.0;  // edits per reference word
  long edits = 0;
  long insertions = 0, deletions = 0, substitutions = 0, shifts = 0;
  long ref_words = 0;
};

// Translation edit rate: per sentence, greedily take the block shift that
// most reduces word-level edit distance (cost 1 per shift, accepted only
// when the total strictly drops), then charge the remaining Levenshtein
// edits. Corpus TER = total edits / total reference words.
TerReport ter(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references,
              int threads = 0);

struct SentenceEdits {
  long edits = 0;
  long insertions = 0, deletions = 0, substitutions = 0, shifts = 0;
};

// Exposed for the per-sentence oracle tests.
SentenceEdits ter_sentence(const Tokens& hyp, const Tokens& ref);

long levenshtein(const Tokens& a, const Tokens& b);

std::string format_score_line(const BleuReport& b, const TerReport& t);

}  // namespace rnmt

#endif
