#include "rnmt/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rnmt/error.hpp"

namespace rnmt {

namespace {

VectorXd sigmoid(const VectorXd& v) {
  return (1.0 / (1.0 + (-v.array()).exp())).matrix();
}

struct GruStep {
  VectorXd x, h_prev, z, r, c, h;
};

GruStep gru_forward(const GruParams& p, VectorXd h_prev, VectorXd x) {
  GruStep s;
  s.x = std::move(x);
  s.h_prev = std::move(h_prev);
  s.z = sigmoid(p.wz * s.x + p.uz * s.h_prev + p.bz.col(0));
  s.r = sigmoid(p.wr * s.x + p.ur * s.h_prev + p.br.col(0));
  s.c = (p.wc * s.x + p.uc * s.r.cwiseProduct(s.h_prev) + p.bc.col(0)).array().tanh().matrix();
  s.h = (1.0 - s.z.array()).matrix().cwiseProduct(s.h_prev) + s.z.cwiseProduct(s.c);
  return s;
}

// Accumulates parameter gradients into g and input gradients into
// dh_prev / dx (callers pass zeroed or running buffers).
void gru_backward(const GruParams& p, const GruStep& s, const VectorXd& dh, GruParams& g,
                  VectorXd& dh_prev, VectorXd& dx) {
  VectorXd dzpre =
      (dh.array() * (s.c - s.h_prev).array() * s.z.array() * (1.0 - s.z.array())).matrix();
  VectorXd dcpre = (dh.array() * s.z.array() * (1.0 - s.c.array().square())).matrix();
  dh_prev += (dh.array() * (1.0 - s.z.array())).matrix();

  VectorXd rh = s.r.cwiseProduct(s.h_prev);
  g.wc += dcpre * s.x.transpose();
  g.uc += dcpre * rh.transpose();
  g.bc.col(0) += dcpre;
  VectorXd drh = p.uc.transpose() * dcpre;
  dh_prev += drh.cwiseProduct(s.r);
  VectorXd drpre =
      (drh.array() * s.h_prev.array() * s.r.array() * (1.0 - s.r.array())).matrix();

  g.wz += dzpre * s.x.transpose();
  g.uz += dzpre * s.h_prev.transpose();
  g.bz.col(0) += dzpre;
  g.wr += drpre * s.x.transpose();
  g.ur += drpre * s.h_prev.transpose();
  g.br.col(0) += drpre;

  dh_prev += p.uz.transpose() * dzpre;
  dh_prev += p.ur.transpose() * drpre;
  dx += p.wc.transpose() * dcpre + p.wz.transpose() * dzpre + p.wr.transpose() * drpre;
}

std::vector<int> reorder_ids(const std::vector<int>& ids, const Reordering& r) {
  if (static_cast<int>(ids.size()) != r.size())
    throw DataError("reordering length " + std::to_string(r.size()) +
                    " does not match sentence length " + std::to_string(ids.size()));
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[static_cast<std::size_t>(r.rank[i] - 1)] = ids[i];
  return out;
}

struct EncCache {
  std::vector<GruStep> fwd, bwd, third;  // indexed by source position (fwd/bwd)
                                         // resp. reordered step (third)
  std::vector<int> third_col;            // position column -> third step index
  std::vector<int> main_ids, third_ids;  // embedding rows fed to each layer
  MatrixXd H;
  VectorXd final_concat;
  MatrixXd whh;  // att_wh * H, shared across decoder steps
};

EncCache encode_cached(const ModelParams& p, const HyperParams& hp,
                       const std::vector<int>& src_ids,
                       const std::vector<int>* reordered_ids, const Reordering* perm) {
  const int n = static_cast<int>(src_ids.size());
  if (n == 0) throw DataError("cannot encode an empty sentence");
  if (hp.needs_reordering() && !reordered_ids)
    throw DataError("encoder variant " + encoder_variant_name(hp.variant) +
                    " requires a reordered source");
  if (reordered_ids && static_cast<int>(reordered_ids->size()) != n)
    throw DataError("reordered source length " + std::to_string(reordered_ids->size()) +
                    " does not match source length " + std::to_string(n));

  EncCache c;
  c.main_ids = (hp.variant == EncoderVariant::kRi2) ? *reordered_ids : src_ids;
  const int d = hp.d_h;

  c.fwd.resize(static_cast<std::size_t>(n));
  VectorXd h = VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    c.fwd[static_cast<std::size_t>(i)] =
        gru_forward(p.enc_fwd, h, p.src_embed.col(c.main_ids[static_cast<std::size_t>(i)]));
    h = c.fwd[static_cast<std::size_t>(i)].h;
  }
  c.bwd.resize(static_cast<std::size_t>(n));
  h = VectorXd::Zero(d);
  for (int i = n - 1; i >= 0; --i) {
    c.bwd[static_cast<std::size_t>(i)] =
        gru_forward(p.enc_bwd, h, p.src_embed.col(c.main_ids[static_cast<std::size_t>(i)]));
    h = c.bwd[static_cast<std::size_t>(i)].h;
  }

  if (hp.has_third_layer()) {
    c.third_ids = (hp.variant == EncoderVariant::kRl3) ? *reordered_ids : src_ids;
    c.third.resize(static_cast<std::size_t>(n));
    h = VectorXd::Zero(d);
    for (int k = 0; k < n; ++k) {
      c.third[static_cast<std::size_t>(k)] =
          gru_forward(p.enc_third, h, p.src_embed.col(c.third_ids[static_cast<std::size_t>(k)]));
      h = c.third[static_cast<std::size_t>(k)].h;
    }
    c.third_col.resize(static_cast<std::size_t>(n));
    if (hp.reordered_by_word && hp.variant == EncoderVariant::kRl3) {
      if (!perm)
        throw DataError("reordered_by_word concatenation requires the reordering itself");
      if (perm->size() != n) throw DataError("reordering length does not match source length");
      for (int i = 0; i < n; ++i)
        c.third_col[static_cast<std::size_t>(i)] = perm->rank[static_cast<std::size_t>(i)] - 1;
    } else {
      for (int i = 0; i < n; ++i) c.third_col[static_cast<std::size_t>(i)] = i;
    }
  }

  const int width = hp.encoder_width();
  c.H.resize(width, n);
  for (int i = 0; i < n; ++i) {
    c.H.col(i).head(d) = c.fwd[static_cast<std::size_t>(i)].h;
    c.H.col(i).segment(d, d) = c.bwd[static_cast<std::size_t>(i)].h;
    if (hp.has_third_layer())
      c.H.col(i).tail(d) = c.third[static_cast<std::size_t>(c.third_col[static_cast<std::size_t>(i)])].h;
  }
  c.final_concat.resize(width);
  c.final_concat.head(d) = c.fwd[static_cast<std::size_t>(n - 1)].h;
  c.final_concat.segment(d, d) = c.bwd[0].h;
  if (hp.has_third_layer()) c.final_concat.tail(d) = c.third[static_cast<std::size_t>(n - 1)].h;
  c.whh = p.att_wh * c.H;
  return c;
}

// tanh layer of the additive attention, one column per source position.
void attention_forward(const ModelParams& p, const MatrixXd& whh, const MatrixXd& H,
                       const std::vector<std::uint8_t>& mask, const VectorXd& s_prev,
                       MatrixXd& a, VectorXd& e, VectorXd& alpha, VectorXd& ctx) {
  const Eigen::Index n = H.cols();
  VectorXd wss = p.att_ws * s_prev;
  a = (whh.colwise() + wss).array().tanh().matrix();
  e = a.transpose() * p.att_v.col(0);

  double mx = -std::numeric_limits<double>::infinity();
  bool any_unmasked = false;
  for (Eigen::Index j = 0; j < n; ++j)
    if (mask[static_cast<std::size_t>(j)]) {
      any_unmasked = true;
      mx = std::max(mx, e(j));
    }
  if (!any_unmasked) throw DataError("attention over a fully masked input");
  alpha = VectorXd::Zero(n);
  double denom = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    if (mask[static_cast<std::size_t>(j)]) {
      alpha(j) = std::exp(e(j) - mx);
      denom += alpha(j);
    }
  alpha /= denom;
  ctx = H * alpha;
}

void attention_backward(const ModelParams& p, const MatrixXd& a, const VectorXd& alpha,
                        const VectorXd& s_prev, const MatrixXd& H, const VectorXd& dctx,
                        ModelParams& g, MatrixXd& dH, VectorXd& ds_prev) {
  VectorXd dalpha = H.transpose() * dctx;
  dH += dctx * alpha.transpose();
  double dot = alpha.dot(dalpha);
  VectorXd de = (alpha.array() * (dalpha.array() - dot)).matrix();  // 0 where masked
  g.att_v.col(0) += a * de;
  MatrixXd dpre = ((p.att_v.col(0) * de.transpose()).array() * (1.0 - a.array().square())).matrix();
  VectorXd sum_dpre = dpre.rowwise().sum();
  g.att_ws += sum_dpre * s_prev.transpose();
  ds_prev += p.att_ws.transpose() * sum_dpre;
  g.att_wh += dpre * H.transpose();
  dH += p.att_wh.transpose() * dpre;
}

struct StepFwd {
  int y_prev = 0;
  VectorXd ey, s_prev;
  MatrixXd a;
  VectorXd e, alpha, ctx;
  GruStep gru;
  VectorXd rin, rh, prob;
  double neg_logp = 0.0;
};

StepFwd decoder_step_fwd(const ModelParams& p, const HyperParams& hp, const EncCache& enc,
                         const std::vector<std::uint8_t>& mask, const VectorXd& s_prev,
                         int y_prev, int y_out) {
  StepFwd sf;
  sf.y_prev = y_prev;
  sf.s_prev = s_prev;
  sf.ey = p.tgt_embed.col(y_prev);
  attention_forward(p, enc.whh, enc.H, mask, s_prev, sf.a, sf.e, sf.alpha, sf.ctx);
  VectorXd gin(hp.d_emb + hp.encoder_width());
  gin.head(hp.d_emb) = sf.ey;
  gin.tail(hp.encoder_width()) = sf.ctx;
  sf.gru = gru_forward(p.dec, s_prev, std::move(gin));
  sf.rin.resize(hp.d_emb + hp.d_h + hp.encoder_width());
  sf.rin.head(hp.d_emb) = sf.ey;
  sf.rin.segment(hp.d_emb, hp.d_h) = sf.gru.h;
  sf.rin.tail(hp.encoder_width()) = sf.ctx;
  sf.rh = (p.read_w * sf.rin + p.read_b.col(0)).array().tanh().matrix();
  VectorXd logits = p.out_w * sf.rh + p.out_b.col(0);
  double mx = logits.maxCoeff();
  VectorXd ex = (logits.array() - mx).exp().matrix();
  double z = ex.sum();
  sf.prob = ex / z;
  if (y_out >= 0) sf.neg_logp = mx + std::log(z) - logits(y_out);
  return sf;
}

// One teacher-forced sentence: returns the summed negative log-likelihood
// and, when g is non-null, accumulates exact gradients of that sum.
double sentence_pass(const ModelParams& p, const HyperParams& hp,
                     const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
                     const Reordering* reo, ModelParams* g, long& tokens) {
  if (tgt_ids.empty()) throw DataError("cannot score an empty target sentence");
  std::vector<int> reordered;
  const std::vector<int>* rptr = nullptr;
  if (hp.needs_reordering()) {
    if (!reo)
      throw DataError("encoder variant " + encoder_variant_name(hp.variant) +
                      " requires a reordering per pair");
    reordered = reorder_ids(src_ids, *reo);
    rptr = &reordered;
  }
  EncCache enc = encode_cached(p, hp, src_ids, rptr, reo);
  const int n = static_cast<int>(src_ids.size());
  const int d = hp.d_h;
  const std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 1);

  VectorXd init_pre = p.init_w * enc.final_concat + p.init_b.col(0);
  VectorXd s0 = init_pre.array().tanh().matrix();

  const int steps = static_cast<int>(tgt_ids.size()) + 1;  // EOS predicted last
  std::vector<int> ins(static_cast<std::size_t>(steps)), outs(static_cast<std::size_t>(steps));
  ins[0] = Vocabulary::kBos;
  for (std::size_t t = 0; t + 1 < ins.size(); ++t) ins[t + 1] = tgt_ids[t];
  for (std::size_t t = 0; t + 1 < outs.size(); ++t) outs[t] = tgt_ids[t];
  outs[static_cast<std::size_t>(steps - 1)] = Vocabulary::kEos;

  std::vector<StepFwd> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  double sum_neg_logp = 0.0;
  VectorXd s = s0;
  for (int t = 0; t < steps; ++t) {
    trace.push_back(decoder_step_fwd(p, hp, enc, mask, s, ins[static_cast<std::size_t>(t)],
                                     outs[static_cast<std::size_t>(t)]));
    s = trace.back().gru.h;
    sum_neg_logp += trace.back().neg_logp;
  }
  tokens += steps;
  if (!g) return sum_neg_logp;

  // Backward through the decoder.
  const int width = hp.encoder_width();
  MatrixXd dH = MatrixXd::Zero(width, n);
  VectorXd ds_carry = VectorXd::Zero(d);
  for (int t = steps - 1; t >= 0; --t) {
    const StepFwd& sf = trace[static_cast<std::size_t>(t)];
    VectorXd dlogits = sf.prob;
    dlogits(outs[static_cast<std::size_t>(t)]) -= 1.0;
    g->out_w += dlogits * sf.rh.transpose();
    g->out_b.col(0) += dlogits;
    VectorXd drh = p.out_w.transpose() * dlogits;
    VectorXd dpre = (drh.array() * (1.0 - sf.rh.array().square())).matrix();
    g->read_w += dpre * sf.rin.transpose();
    g->read_b.col(0) += dpre;
    VectorXd drin = p.read_w.transpose() * dpre;

    VectorXd dey = drin.head(hp.d_emb);
    VectorXd ds = drin.segment(hp.d_emb, d) + ds_carry;
    VectorXd dctx = drin.tail(width);

    VectorXd dh_prev = VectorXd::Zero(d);
    VectorXd dgin = VectorXd::Zero(hp.d_emb + width);
    gru_backward(p.dec, sf.gru, ds, g->dec, dh_prev, dgin);
    dey += dgin.head(hp.d_emb);
    dctx += dgin.tail(width);

    VectorXd ds_prev = VectorXd::Zero(d);
    attention_backward(p, sf.a, sf.alpha, sf.s_prev, enc.H, dctx, *g, dH, ds_prev);
    ds_carry = dh_prev + ds_prev;
    g->tgt_embed.col(sf.y_prev) += dey;
  }

  // Decoder initial state.
  VectorXd dpre0 = (ds_carry.array() * (1.0 - s0.array().square())).matrix();
  g->init_w += dpre0 * enc.final_concat.transpose();
  g->init_b.col(0) += dpre0;
  VectorXd dfc = p.init_w.transpose() * dpre0;

  // Per-layer state gradients.
  MatrixXd dF = MatrixXd::Zero(d, n), dB = MatrixXd::Zero(d, n);
  MatrixXd dR;
  if (hp.has_third_layer()) dR = MatrixXd::Zero(d, n);
  for (int i = 0; i < n; ++i) {
    dF.col(i) += dH.col(i).head(d);
    dB.col(i) += dH.col(i).segment(d, d);
    if (hp.has_third_layer())
      dR.col(enc.third_col[static_cast<std::size_t>(i)]) += dH.col(i).tail(d);
  }
  dF.col(n - 1) += dfc.head(d);
  dB.col(0) += dfc.segment(d, d);
  if (hp.has_third_layer()) dR.col(n - 1) += dfc.tail(d);

  // BPTT through the three recurrences.
  VectorXd carry = VectorXd::Zero(d);
  VectorXd dx = VectorXd::Zero(hp.d_emb);
  for (int i = n - 1; i >= 0; --i) {
    VectorXd dh = dF.col(i) + carry;
    carry.setZero();
    dx.setZero();
    gru_backward(p.enc_fwd, enc.fwd[static_cast<std::size_t>(i)], dh, g->enc_fwd, carry, dx);
    g->src_embed.col(enc.main_ids[static_cast<std::size_t>(i)]) += dx;
  }
  carry.setZero();
  for (int i = 0; i < n; ++i) {
    VectorXd dh = dB.col(i) + carry;
    carry.setZero();
    dx.setZero();
    gru_backward(p.enc_bwd, enc.bwd[static_cast<std::size_t>(i)], dh, g->enc_bwd, carry, dx);
    g->src_embed.col(enc.main_ids[static_cast<std::size_t>(i)]) += dx;
  }
  if (hp.has_third_layer()) {
    carry.setZero();
    for (int k = n - 1; k >= 0; --k) {
      VectorXd dh = dR.col(k) + carry;
      carry.setZero();
      dx.setZero();
      gru_backward(p.enc_third, enc.third[static_cast<std::size_t>(k)], dh, g->enc_third, carry, dx);
      g->src_embed.col(enc.third_ids[static_cast<std::size_t>(k)]) += dx;
    }
  }
  return sum_neg_logp;
}

std::vector<int> row_ids(const std::vector<int>& padded, int len) {
  return std::vector<int>(padded.begin(), padded.begin() + len);
}

const Reordering* row_reordering(const std::vector<Reordering>* reorderings, int pair_idx) {
  if (!reorderings) return nullptr;
  if (pair_idx < 0 || pair_idx >= static_cast<int>(reorderings->size()))
    throw DataError("no reordering for corpus pair " + std::to_string(pair_idx));
  return &(*reorderings)[static_cast<std::size_t>(pair_idx)];
}

}  // namespace

EncoderStates encode(const ModelParams& params, const HyperParams& hp, const Sentence& source,
                     const Sentence* reordered, const Reordering* perm) {
  const std::vector<int>* rids = nullptr;
  std::vector<int> tmp;
  if (reordered) {
    tmp = reordered->ids;
    rids = &tmp;
  }
  EncCache c = encode_cached(params, hp, source.ids, rids, perm);
  EncoderStates out;
  out.h = std::move(c.H);
  out.mask.assign(source.ids.size(), 1);
  out.final_concat = std::move(c.final_concat);
  return out;
}

AttentionStep attend(const ModelParams& params, const VectorXd& s_prev,
                     const EncoderStates& enc) {
  MatrixXd whh = params.att_wh * enc.h;
  AttentionStep out;
  MatrixXd a;
  attention_forward(params, whh, enc.h, enc.mask, s_prev, a, out.scores, out.alpha, out.context);
  return out;
}

VectorXd initial_decoder_state(const ModelParams& params, const EncoderStates& enc) {
  return (params.init_w * enc.final_concat + params.init_b.col(0)).array().tanh().matrix();
}

DecodeStep decode_step(const ModelParams& params, const HyperParams& hp, const VectorXd& s_prev,
                       int y_prev, const EncoderStates& enc) {
  if (y_prev < 0 || y_prev >= hp.tgt_vocab)
    throw DataError("decoder token id out of range: " + std::to_string(y_prev));
  if (enc.h.rows() != hp.encoder_width())
    throw DataError("encoder state width " + std::to_string(enc.h.rows()) +
                    " does not match the variant's width " + std::to_string(hp.encoder_width()));
  EncCache c;
  c.H = enc.h;
  c.whh = params.att_wh * enc.h;
  StepFwd sf = decoder_step_fwd(params, hp, c, enc.mask, s_prev, y_prev, -1);
  DecodeStep out;
  out.state = sf.gru.h;
  out.dist = sf.prob;
  out.att = AttentionStep{std::move(sf.e), std::move(sf.alpha), std::move(sf.ctx)};
  return out;
}

LossResult loss_and_gradients(const ModelParams& params, const HyperParams& hp,
                              const Batch& batch, const std::vector<Reordering>* reorderings,
                              int threads) {
  const int rows = batch.rows();
  if (rows == 0) throw DataError("empty batch");
  LossResult result;
  result.grads = ModelParams(hp);

  std::vector<double> row_loss(static_cast<std::size_t>(rows), 0.0);
  std::vector<long> row_tokens(static_cast<std::size_t>(rows), 0);

  if (threads == 0) {
    // Serial reference: per-row gradients merged in row order.
    ModelParams g_row(hp);
    for (int r = 0; r < rows; ++r) {
      g_row.set_zero();
      row_loss[static_cast<std::size_t>(r)] = sentence_pass(
          params, hp, row_ids(batch.src[static_cast<std::size_t>(r)], batch.src_len[static_cast<std::size_t>(r)]),
          row_ids(batch.tgt[static_cast<std::size_t>(r)], batch.tgt_len[static_cast<std::size_t>(r)]),
          row_reordering(reorderings, batch.pair_index[static_cast<std::size_t>(r)]), &g_row,
          row_tokens[static_cast<std::size_t>(r)]);
      if (!std::isfinite(row_loss[static_cast<std::size_t>(r)]))
        throw NumericError("non-finite loss at batch row " + std::to_string(r) +
                           " (corpus pair " + std::to_string(batch.pair_index[static_cast<std::size_t>(r)]) + ")");
      result.grads.add(g_row);
    }
  } else {
    std::vector<ModelParams> g_rows(static_cast<std::size_t>(rows));
    std::vector<std::string> row_error(static_cast<std::size_t>(rows));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
    for (int r = 0; r < rows; ++r) {
      try {
        g_rows[static_cast<std::size_t>(r)] = ModelParams(hp);
        row_loss[static_cast<std::size_t>(r)] = sentence_pass(
            params, hp, row_ids(batch.src[static_cast<std::size_t>(r)], batch.src_len[static_cast<std::size_t>(r)]),
            row_ids(batch.tgt[static_cast<std::size_t>(r)], batch.tgt_len[static_cast<std::size_t>(r)]),
            row_reordering(reorderings, batch.pair_index[static_cast<std::size_t>(r)]),
            &g_rows[static_cast<std::size_t>(r)], row_tokens[static_cast<std::size_t>(r)]);
      } catch (const Error& err) {
        row_error[static_cast<std::size_t>(r)] = err.what();
      }
    }
    for (int r = 0; r < rows; ++r) {
      if (!row_error[static_cast<std::size_t>(r)].empty())
        throw DataError(row_error[static_cast<std::size_t>(r)]);
      if (!std::isfinite(row_loss[static_cast<std::size_t>(r)]))
        throw NumericError("non-finite loss at batch row " + std::to_string(r) +
                           " (corpus pair " + std::to_string(batch.pair_index[static_cast<std::size_t>(r)]) + ")");
    }
    // Tensor-parallel merge: every accumulator folds its rows in row
    // order, so each tensor comes out bit-identical to the serial fold.
    std::vector<MatrixXd*> acc;
    result.grads.visit([&](const std::string&, MatrixXd& m) { acc.push_back(&m); });
    std::vector<std::vector<const MatrixXd*>> row_tensors(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r)
      g_rows[static_cast<std::size_t>(r)].visit([&](const std::string&, const MatrixXd& m) {
        row_tensors[static_cast<std::size_t>(r)].push_back(&m);
      });
    const int ntensors = static_cast<int>(acc.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
    for (int k = 0; k < ntensors; ++k)
      for (int r = 0; r < rows; ++r)
        *acc[static_cast<std::size_t>(k)] += *row_tensors[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
  }

  for (int r = 0; r < rows; ++r) {
    result.sum_neg_logp += row_loss[static_cast<std::size_t>(r)];
    result.tokens += row_tokens[static_cast<std::size_t>(r)];
  }
  result.loss = result.sum_neg_logp / static_cast<double>(result.tokens);
  // Gradients of the summed loss become gradients of the mean.
  std::vector<MatrixXd*> gs;
  result.grads.visit([&](const std::string&, MatrixXd& m) { gs.push_back(&m); });
  for (MatrixXd* m : gs) *m /= static_cast<double>(result.tokens);
  return result;
}

double corpus_loss(const ModelParams& params, const HyperParams& hp,
                   const ParallelCorpus& corpus, const std::vector<Reordering>* reorderings,
                   int threads) {
  const int n = corpus.size();
  if (n == 0) throw DataError("empty corpus");
  std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
  std::vector<long> tokens(static_cast<std::size_t>(n), 0);
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  auto score_one = [&](int i) {
    try {
      losses[static_cast<std::size_t>(i)] = sentence_pass(
          params, hp, corpus.pairs[static_cast<std::size_t>(i)].source.ids,
          corpus.pairs[static_cast<std::size_t>(i)].target.ids,
          row_reordering(reorderings, i), nullptr, tokens[static_cast<std::size_t>(i)]);
    } catch (const Error& err) {
      errors[static_cast<std::size_t>(i)] = err.what();
    }
  };
  if (threads == 0) {
    for (int i = 0; i < n; ++i) score_one(i);
  } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
#endif
    for (int i = 0; i < n; ++i) score_one(i);
  }
  for (int i = 0; i < n; ++i)
    if (!errors[static_cast<std::size_t>(i)].empty()) throw DataError(errors[static_cast<std::size_t>(i)]);
  double sum = 0.0;
  long tok = 0;
  for (int i = 0; i < n; ++i) {
    sum += losses[static_cast<std::size_t>(i)];
    tok += tokens[static_cast<std::size_t>(i)];
  }
  return sum / static_cast<double>(tok);
}

TrainResult train(Model& model, const ParallelCorpus& train_corpus,
                  const std::vector<Reordering>* train_reorderings,
                  const ParallelCorpus* dev_corpus,
                  const std::vector<Reordering>* dev_reorderings, const TrainConfig& cfg) {
  if (train_corpus.size() == 0) throw DataError("empty training corpus");
  if (model.hp.needs_reordering() && !train_reorderings)
    throw DataError("encoder variant " + encoder_variant_name(model.hp.variant) +
                    " requires training reorderings");
  model.hp.validate();

  Rng rng(cfg.seed);
  model.params = ModelParams(model.hp);
  model.params.init_uniform(rng, cfg.init_scale);

  TrainResult result;
  ModelParams best = model.params;
  double best_dev = std::numeric_limits<double>::infinity();

  std::vector<int> order(static_cast<std::size_t>(train_corpus.size()));
  for (int i = 0; i < train_corpus.size(); ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0.0;
    long epoch_tokens = 0;
    bool failed = false;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(
                               order.size(), start + static_cast<std::size_t>(cfg.batch_size))));
      Batch batch = make_batch(train_corpus, idx);
      LossResult lr;
      try {
        lr = loss_and_gradients(model.params, model.hp, batch, train_reorderings, cfg.threads);
      } catch (const NumericError& err) {
        result.diverged = true;
        result.divergence_message = err.what();
        failed = true;
        break;
      }
      epoch_sum += lr.sum_neg_logp;
      epoch_tokens += lr.tokens;
      double norm = std::sqrt(lr.grads.squared_norm());
      double factor = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
      model.params.add_scaled(-cfg.learning_rate * factor, lr.grads);
    }
    if (failed) break;

    EpochLoss el;
    el.train = epoch_sum / static_cast<double>(epoch_tokens);
    if (dev_corpus)
      el.dev = corpus_loss(model.params, model.hp, *dev_corpus, dev_reorderings, cfg.threads);
    else
      el.dev = el.train;
    result.loss_log.push_back(el);
    if (!std::isfinite(el.dev)) {
      result.diverged = true;
      result.divergence_message = "non-finite dev loss at epoch " + std::to_string(epoch);
      break;
    }
    if (el.dev < best_dev) {
      best_dev = el.dev;
      best = model.params;
      result.best_epoch = epoch;
    }
  }
  model.params = best;  // last good checkpoint on divergence, best dev otherwise
  return result;
}

void write_loss_log(std::ostream& out, const std::vector<EpochLoss>& log) {
  for (std::size_t i = 0; i < log.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\n", i + 1, log[i].train, log[i].dev);
    out << buf;
  }
}

namespace {

struct DecoderContext {
  const Model* model;
  EncCache enc;
  std::vector<std::uint8_t> mask;
};

// Mean of the member distributions after one step from each model.
VectorXd ensemble_step(const std::vector<DecoderContext>& ctxs,
                       const std::vector<VectorXd>& states, int y_prev,
                       std::vector<VectorXd>& new_states) {
  VectorXd mean;
  new_states.resize(ctxs.size());
  for (std::size_t m = 0; m < ctxs.size(); ++m) {
    StepFwd sf = decoder_step_fwd(ctxs[m].model->params, ctxs[m].model->hp, ctxs[m].enc,
                                  ctxs[m].mask, states[m], y_prev, -1);
    new_states[m] = sf.gru.h;
    if (m == 0)
      mean = sf.prob;
    else
      mean += sf.prob;
  }
  mean /= static_cast<double>(ctxs.size());
  return mean;
}

}  // namespace

std::vector<int> translate_ids(const std::vector<const Model*>& models, const Sentence& source,
                               const ReorderStrategy& strategy, const DecodeConfig& cfg) {
  if (models.empty()) throw DataError("translate requires at least one model");
  if (cfg.beam_width < 1) throw DataError("beam width must be >= 1");
  for (const Model* m : models) {
    if (!(m->tgt_vocab == models[0]->tgt_vocab))
      throw DataError("ensemble models must share the target vocabulary");
    if (!(m->src_vocab == models[0]->src_vocab))
      throw DataError("ensemble models must share the source vocabulary");
  }
  const int max_len = cfg.max_len > 0 ? cfg.max_len : models[0]->hp.max_decode_len;

  // A reordered view of the source for the variants that consume one.
  Sentence reordered = test_time_reorder(source, strategy);
  Reordering identity_perm = Reordering::identity(source.size());
  const Reordering* perm =
      strategy.kind == ReorderStrategy::kOracle ? strategy.oracle : &identity_perm;

  std::vector<DecoderContext> ctxs;
  std::vector<VectorXd> init_states;
  for (const Model* m : models) {
    DecoderContext ctx;
    ctx.model = m;
    const std::vector<int>* rids = nullptr;
    if (m->hp.needs_reordering()) rids = &reordered.ids;
    ctx.enc = encode_cached(m->params, m->hp, source.ids, rids, perm);
    ctx.mask.assign(source.ids.size(), 1);
    VectorXd s0 = (m->params.init_w * ctx.enc.final_concat + m->params.init_b.col(0))
                      .array().tanh().matrix();
    ctxs.push_back(std::move(ctx));
    init_states.push_back(std::move(s0));
  }

  if (cfg.method == DecodeMethod::kGreedy) {
    std::vector<int> out;
    std::vector<VectorXd> states = init_states;
    int y_prev = Vocabulary::kBos;
    for (int t = 0; t < max_len; ++t) {
      std::vector<VectorXd> next;
      VectorXd p = ensemble_step(ctxs, states, y_prev, next);
      int best = 0;
      for (int v = 1; v < static_cast<int>(p.size()); ++v)
        if (p(v) > p(best)) best = v;  // ties keep the lowest id
      if (best == Vocabulary::kEos) break;
      out.push_back(best);
      y_prev = best;
      states = std::move(next);
    }
    return out;
  }

  struct Hyp {
    std::vector<int> toks;
    double score = 0.0;
    std::vector<VectorXd> states;
    bool done = false;
  };
  std::vector<Hyp> beam{Hyp{{}, 0.0, init_states, false}};
  for (int t = 0; t < max_len; ++t) {
    bool all_done = true;
    for (const Hyp& h : beam) all_done = all_done && h.done;
    if (all_done) break;

    struct Cand {
      double score;
      int hyp;
      int tok;  // -1 carries a finished hypothesis through
    };
    std::vector<Cand> cands;
    std::vector<std::vector<VectorXd>> fresh(beam.size());
    for (std::size_t h = 0; h < beam.size(); ++h) {
      if (beam[h].done) {
        cands.push_back({beam[h].score, static_cast<int>(h), -1});
        continue;
      }
      int y_prev = beam[h].toks.empty() ? Vocabulary::kBos : beam[h].toks.back();
      VectorXd p = ensemble_step(ctxs, beam[h].states, y_prev, fresh[h]);
      for (int v = 0; v < static_cast<int>(p.size()); ++v)
        cands.push_back({beam[h].score + std::log(p(v)), static_cast<int>(h), v});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.tok != b.tok) return a.tok < b.tok;
      return a.hyp < b.hyp;
    });

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) == cfg.beam_width) break;
      const Hyp& parent = beam[static_cast<std::size_t>(c.hyp)];
      if (c.tok < 0) {
        next.push_back(parent);
        continue;
      }
      Hyp h;
      h.toks = parent.toks;
      h.score = c.score;
      if (c.tok == Vocabulary::kEos) {
        h.done = true;
      } else {
        h.toks.push_back(c.tok);
        h.states = fresh[static_cast<std::size_t>(c.hyp)];
      }
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  const Hyp* best = nullptr;
  for (const Hyp& h : beam)
    if (h.done && (!best || h.score > best->score)) best = &h;
  if (!best)
    for (const Hyp& h : beam)
      if (!best || h.score > best->score) best = &h;
  return best->toks;
}

Sentence translate(const std::vector<const Model*>& models, const Sentence& source,
                   const ReorderStrategy& strategy, const DecodeConfig& cfg) {
  std::vector<int> ids = translate_ids(models, source, strategy, cfg);
  Sentence out;
  out.ids = ids;
  for (int id : ids) out.surface.push_back(models[0]->tgt_vocab.token(id));
  return out;
}

}  // namespace rnmt
