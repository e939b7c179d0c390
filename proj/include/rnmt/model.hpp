#ifndef RNMT_MODEL_HPP
#define RNMT_MODEL_HPP

#include <Eigen/Dense>
#include <string>

#include "rnmt/corpus.hpp"
#include "rnmt/rng.hpp"

namespace rnmt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Encoder layouts from the experimental grid: the bidirectional baseline,
// the three-layer model with a reordered layer, the three-layer model with
// a repeated forward layer, and the baseline fed reordered input.
enum class EncoderVariant { kBase2, kRl3, kRpl3, kRi2 };

EncoderVariant parse_encoder_variant(const std::string& name);
std::string encoder_variant_name(EncoderVariant v);

struct HyperParams {
  int d_emb = 32;
  int d_h = 32;
  int d_a = 32;
  EncoderVariant variant = EncoderVariant::kBase2;
  int src_vocab = 0;
  int tgt_vocab = 0;
  int max_decode_len = 64;
  // Concatenate third-layer states by the word's own reordered position
  // instead of by sequence index. Off by default: the by-index layout is
  // the literal reading of the three-layer concatenation.
  bool reordered_by_word = false;

  bool has_third_layer() const {
    return variant == EncoderVariant::kRl3 || variant == EncoderVariant::kRpl3;
  }
  bool needs_reordering() const {
    return variant == EncoderVariant::kRl3 || variant == EncoderVariant::kRi2;
  }
  int encoder_width() const { return (has_third_layer() ? 3 : 2) * d_h; }

  void validate() const;  // throws DataError on nonsense widths
};

// One GRU parameter set: update gate z, reset gate r, candidate c.
// Biases are stored as n x 1 matrices so every tensor has one type.
struct GruParams {
  MatrixXd wz, uz, bz;
  MatrixXd wr, ur, br;
  MatrixXd wc, uc, bc;

  GruParams() = default;
  GruParams(int input, int hidden);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".wz", wz); f(prefix + ".uz", uz); f(prefix + ".bz", bz);
    f(prefix + ".wr", wr); f(prefix + ".ur", ur); f(prefix + ".br", br);
    f(prefix + ".wc", wc); f(prefix + ".uc", uc); f(prefix + ".bc", bc);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    const_cast<GruParams*>(this)->visit(prefix, [&](const std::string& n, MatrixXd& m) {
      f(n, static_cast<const MatrixXd&>(m));
    });
  }
};

// Every trainable tensor of the attention encoder-decoder. The same
// struct doubles as gradient storage.
struct ModelParams {
  MatrixXd src_embed, tgt_embed;           // d_emb x vocab
  GruParams enc_fwd, enc_bwd, enc_third;   // d_h over d_emb inputs
  GruParams dec;                           // d_h over [emb; context]
  MatrixXd att_ws, att_wh, att_v;          // additive attention
  MatrixXd init_w, init_b;                 // decoder initial state
  MatrixXd read_w, read_b;                 // tanh readout
  MatrixXd out_w, out_b;                   // output projection

  ModelParams() = default;
  explicit ModelParams(const HyperParams& hp);  // zero-initialized

  template <typename F>
  void visit(F&& f) {
    f("src_embed", src_embed);
    f("tgt_embed", tgt_embed);
    enc_fwd.visit("enc_fwd", f);
    enc_bwd.visit("enc_bwd", f);
    enc_third.visit("enc_third", f);
    dec.visit("dec", f);
    f("att_ws", att_ws); f("att_wh", att_wh); f("att_v", att_v);
    f("init_w", init_w); f("init_b", init_b);
    f("read_w", read_w); f("read_b", read_b);
    f("out_w", out_w); f("out_b", out_b);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit([&](const std::string& n, MatrixXd& m) {
      f(n, static_cast<const MatrixXd&>(m));
    });
  }

  void init_uniform(Rng& rng, double scale);
  void set_zero();
  void add(const ModelParams& other);            // this += other
  void add_scaled(double alpha, const ModelParams& other);
  double squared_norm() const;
};

struct Model {
  HyperParams hp;
  Vocabulary src_vocab;
  Vocabulary tgt_vocab;
  ModelParams params;
};

// Binary model file: magic "RNMT", format version, hyperparameters, both
// vocabularies, then named tensors as (name, rows, cols, row-major
// little-endian doubles).
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace rnmt

#endif
