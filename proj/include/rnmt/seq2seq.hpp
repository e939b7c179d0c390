#ifndef RNMT_SEQ2SEQ_HPP
#define RNMT_SEQ2SEQ_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "rnmt/corpus.hpp"
#include "rnmt/model.hpp"
#include "rnmt/permutation.hpp"
#include "rnmt/reorder.hpp"

namespace rnmt {

// Per-position encoder output: column i of h is the concatenated hidden
// state of source position i+1. final_concat stacks each layer's final
// state and seeds the decoder.
struct EncoderStates {
  MatrixXd h;                       // encoder_width x n
  std::vector<std::uint8_t> mask;   // 1 = real position
  VectorXd final_concat;
};

struct AttentionStep {
  VectorXd scores;   // e_j, one per source position
  VectorXd alpha;    // masked softmax of the scores; exactly 0 where masked
  VectorXd context;  // sum_j alpha_j h_j
};

// Runs the variant's recurrences over the source. RL3/RI2 require the
// reordered source; RPL3/BASE2 ignore it. perm is only consulted when
// hp.reordered_by_word is set (it maps third-layer states back to words).
EncoderStates encode(const ModelParams& params, const HyperParams& hp,
                     const Sentence& source, const Sentence* reordered,
                     const Reordering* perm = nullptr);

// Additive attention: e_j = v . tanh(Ws s_prev + Wh h_j).
AttentionStep attend(const ModelParams& params, const VectorXd& s_prev,
                     const EncoderStates& enc);

VectorXd initial_decoder_state(const ModelParams& params, const EncoderStates& enc);

struct DecodeStep {
  VectorXd state;
  VectorXd dist;  // softmax over the target vocabulary
  AttentionStep att;
};

DecodeStep decode_step(const ModelParams& params, const HyperParams& hp,
                       const VectorXd& s_prev, int y_prev, const EncoderStates& enc);

struct LossResult {
  double loss = 0.0;          // mean token cross-entropy
  double sum_neg_logp = 0.0;  // unnormalized
  long tokens = 0;            // predicted tokens, EOS included
  ModelParams grads;          // d loss / d params
};

// Teacher-forced loss and exact gradients over one padded batch.
// reorderings, when given, are indexed by corpus pair (batch rows carry
// their pair index). threads == 0 runs the serial reference; otherwise
// rows fan out across threads and per-row gradients are merged in row
// order, so both paths are bit-identical.
LossResult loss_and_gradients(const ModelParams& params, const HyperParams& hp,
                              const Batch& batch,
                              const std::vector<Reordering>* reorderings,
                              int threads = 0);

// Forward-only corpus loss (dev scoring).
double corpus_loss(const ModelParams& params, const HyperParams& hp,
                   const ParallelCorpus& corpus,
                   const std::vector<Reordering>* reorderings, int threads = 0);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.5;
  double clip_norm = 5.0;       // global-norm gradient clipping
  double init_scale = 0.1;
  std::uint64_t seed = 1;
  int threads = 0;
};

struct EpochLoss {
  double train = 0.0;
  double dev = 0.0;
};

struct TrainResult {
  std::vector<EpochLoss> loss_log;
  int best_epoch = 0;   // 1-based epoch of the checkpointed parameters
  bool diverged = false;
  std::string divergence_message;
};

// SGD with teacher forcing. model.hp and vocabularies must be set; the
// parameters are (re)initialized from cfg.seed. On return model.params
// holds the best-dev checkpoint (best-train when dev is null). A
// non-finite loss stops training and keeps the last good checkpoint.
TrainResult train(Model& model, const ParallelCorpus& train_corpus,
                  const std::vector<Reordering>* train_reorderings,
                  const ParallelCorpus* dev_corpus,
                  const std::vector<Reordering>* dev_reorderings,
                  const TrainConfig& cfg);

void write_loss_log(std::ostream& out, const std::vector<EpochLoss>& log);

enum class DecodeMethod { kGreedy, kBeam };

struct DecodeConfig {
  DecodeMethod method = DecodeMethod::kGreedy;
  int beam_width = 1;
  int max_len = 0;  // 0: use the first model's max_decode_len
};

// Decodes one source sentence, ensembling by per-step arithmetic mean of
// the models' output distributions. All models must share vocabularies.
std::vector<int> translate_ids(const std::vector<const Model*>& models,
                               const Sentence& source, const ReorderStrategy& strategy,
                               const DecodeConfig& cfg);

Sentence translate(const std::vector<const Model*>& models, const Sentence& source,
                   const ReorderStrategy& strategy, const DecodeConfig& cfg);

}  // namespace rnmt

#endif
