// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion pins its tolerances and time budget in code.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "oracles.hpp"
#include "rnmt/align.hpp"
#include "rnmt/corpus.hpp"
#include "rnmt/error.hpp"
#include "rnmt/metrics.hpp"
#include "rnmt/model.hpp"
#include "rnmt/reorder.hpp"
#include "rnmt/rng.hpp"
#include "rnmt/seq2seq.hpp"

using namespace rnmt;

namespace {

int threads() {
#ifdef _OPENMP
  return std::min(omp_get_max_threads(), 8);
#else
  return 0;
#endif
}

struct Criterion {
  std::string name;
  double time_budget_s;  // 0 = no budget stated
  std::function<bool(std::string&)> run;
};

double now_s() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// --- reordering soundness -------------------------------------------------

bool reordering_soundness(std::string& detail) {
  Rng rng(20240001);
  int checked = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    int n = rng.uniform_int(1, 12), m = rng.uniform_int(1, 12);
    AlignmentMatrix a;
    a.n = n;
    a.m = m;
    int links = rng.uniform_int(0, n * m);
    for (int k = 0; k < links; ++k) a.links.emplace(rng.uniform_int(1, n), rng.uniform_int(1, m));
    Reordering r = alignment_to_reordering(a);
    if (r.size() != n || !r.is_permutation()) {
      detail = "non-bijective permutation at trial " + std::to_string(trial);
      return false;
    }
    ++checked;
  }
  // Monotone 1:1 alignments must come out as the identity.
  for (int trial = 0; trial < 2000; ++trial) {
    int n = rng.uniform_int(1, 12);
    int m = n + rng.uniform_int(0, 4);
    std::vector<int> cols(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) cols[static_cast<std::size_t>(j)] = j + 1;
    rng.shuffle(cols);
    cols.resize(static_cast<std::size_t>(n));
    std::sort(cols.begin(), cols.end());
    AlignmentMatrix a;
    a.n = n;
    a.m = m;
    for (int i = 1; i <= n; ++i) a.links.emplace(i, cols[static_cast<std::size_t>(i - 1)]);
    if (!(alignment_to_reordering(a) == Reordering::identity(n))) {
      detail = "monotone alignment did not map to identity at trial " + std::to_string(trial);
      return false;
    }
  }
  detail = std::to_string(checked) + " random matrices all bijective, monotone cases identity";
  return true;
}

// --- footnote reproduction ------------------------------------------------

bool footnote_reproduction(std::string& detail) {
  int got = middle_position({1, 3, 5, 7});
  detail = "middle_position((1,3,5,7)) = " + std::to_string(got);
  return got == 3;
}

// --- EM monotonicity + recovery -------------------------------------------

bool em_monotonicity_recovery(std::string& detail) {
  SyntheticCorpus syn = generate_synthetic(150, 25, 7, ReorderRule::kReversal, 20240002);
  Model1Result res = train_model1(syn.corpus, 10, true, threads());
  for (std::size_t k = 1; k < res.log_likelihood.size(); ++k) {
    double prev = res.log_likelihood[k - 1], next = res.log_likelihood[k];
    if (next < prev - 1e-9 * std::abs(prev)) {
      detail = "log-likelihood decreased at iteration " + std::to_string(k) + ": " +
               std::to_string(prev) + " -> " + std::to_string(next);
      return false;
    }
  }

  // Unambiguous 1:1 dictionary corpus, tokens unique within a sentence.
  Rng rng(20240003);
  ParallelCorpus dict;
  const int vocab = 40;
  std::vector<std::string> sw, tw;
  for (int k = 0; k < vocab; ++k) {
    sw.push_back("s" + std::to_string(k));
    tw.push_back("t" + std::to_string(k));
    dict.source_vocab.add(sw.back());
    dict.target_vocab.add(tw.back());
  }
  for (int p = 0; p < 200; ++p) {
    std::vector<int> perm(static_cast<std::size_t>(vocab));
    for (int k = 0; k < vocab; ++k) perm[static_cast<std::size_t>(k)] = k;
    rng.shuffle(perm);
    int len = rng.uniform_int(3, 8);
    SentencePair pair;
    for (int i = 0; i < len; ++i) {
      int w = perm[static_cast<std::size_t>(i)];
      pair.source.surface.push_back(sw[static_cast<std::size_t>(w)]);
      pair.source.ids.push_back(dict.source_vocab.lookup(sw[static_cast<std::size_t>(w)]));
      pair.target.surface.push_back(tw[static_cast<std::size_t>(w)]);
      pair.target.ids.push_back(dict.target_vocab.lookup(tw[static_cast<std::size_t>(w)]));
    }
    dict.pairs.push_back(std::move(pair));
  }
  Model1Result trained = train_model1(dict, 10, true, threads());
  long correct = 0, total = 0;
  for (const auto& pair : dict.pairs) {
    AlignmentMatrix a = viterbi_align(trained.table, pair, true);
    for (int i = 1; i <= pair.source.size(); ++i) {
      ++total;
      if (a.links.count({i, i})) ++correct;
    }
  }
  double recovery = static_cast<double>(correct) / static_cast<double>(total);
  char buf[128];
  std::snprintf(buf, sizeof buf, "LL non-decreasing over 10 iterations; link recovery %.2f%%",
                100.0 * recovery);
  detail = buf;
  return recovery >= 0.95;
}

// --- gradient correctness ---------------------------------------------------

bool gradient_correctness(std::string& detail) {
  SyntheticCorpus syn = generate_synthetic(2, 5, 4, ReorderRule::kReversal, 20240004);
  Batch batch = make_batch(syn.corpus, {0, 1});
  double worst = 0.0;
  std::string worst_at;
  for (auto variant : {EncoderVariant::kBase2, EncoderVariant::kRi2, EncoderVariant::kRpl3,
                       EncoderVariant::kRl3}) {
    HyperParams hp;
    hp.d_emb = hp.d_h = hp.d_a = 4;
    hp.variant = variant;
    hp.src_vocab = syn.corpus.source_vocab.size();
    hp.tgt_vocab = syn.corpus.target_vocab.size();
    ModelParams p(hp);
    Rng rng(11 + static_cast<std::uint64_t>(variant));
    p.init_uniform(rng, 0.4);
    const std::vector<Reordering>* reo = hp.needs_reordering() ? &syn.gold : nullptr;
    oracles::GradCheck gc = oracles::finite_difference_check(hp, p, batch, reo, 1e-5);
    if (gc.worst_rel > worst) {
      worst = gc.worst_rel;
      worst_at = encoder_variant_name(variant) + "/" + gc.worst_tensor;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "worst relative error %.3e at %s (threshold 1e-4)", worst,
                worst_at.c_str());
  detail = buf;
  return worst < 1e-4;
}

// --- attention simplex ------------------------------------------------------

bool attention_simplex(std::string& detail) {
  Rng rng(20240005);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = rng.uniform_int(2, 8);
    HyperParams hp;
    hp.d_emb = hp.d_h = hp.d_a = d;
    hp.variant = EncoderVariant::kBase2;
    hp.src_vocab = 8;
    hp.tgt_vocab = 8;
    ModelParams p(hp);
    Rng prng(40000 + static_cast<std::uint64_t>(trial));
    p.init_uniform(prng, 1.0);
    int n = rng.uniform_int(1, 14);
    EncoderStates enc;
    enc.h.resize(2 * d, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < 2 * d; ++i) enc.h(i, j) = rng.uniform(-3.0, 3.0);
    enc.mask.assign(static_cast<std::size_t>(n), 0);
    int unmasked = rng.uniform_int(1, n);
    for (int k = 0; k < unmasked; ++k) enc.mask[static_cast<std::size_t>(k)] = 1;
    rng.shuffle(enc.mask);
    VectorXd s_prev(d);
    for (int i = 0; i < d; ++i) s_prev(i) = rng.uniform(-2.0, 2.0);

    AttentionStep att = attend(p, s_prev, enc);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (!enc.mask[static_cast<std::size_t>(j)]) {
        if (att.alpha(j) != 0.0) {
          detail = "masked position carries weight at trial " + std::to_string(trial);
          return false;
        }
      } else {
        if (att.alpha(j) < 0.0) {
          detail = "negative weight at trial " + std::to_string(trial);
          return false;
        }
        sum += att.alpha(j);
      }
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      detail = "weights sum to " + std::to_string(sum) + " at trial " + std::to_string(trial);
      return false;
    }
  }
  detail = "1000 random shapes: sums within 1e-9, masked weights exactly 0";
  return true;
}

// --- overfit capacity -------------------------------------------------------

bool overfit_capacity(std::string& detail) {
  SyntheticCorpus syn = generate_synthetic(50, 20, 6, ReorderRule::kReversal, 20240006);
  char buf[200];
  std::string note;
  for (auto variant : {EncoderVariant::kBase2, EncoderVariant::kRl3}) {
    Model m;
    m.hp.d_emb = m.hp.d_h = m.hp.d_a = 24;
    m.hp.variant = variant;
    m.hp.src_vocab = syn.corpus.source_vocab.size();
    m.hp.tgt_vocab = syn.corpus.target_vocab.size();
    m.src_vocab = syn.corpus.source_vocab;
    m.tgt_vocab = syn.corpus.target_vocab;
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.5;
    cfg.seed = 9;
    cfg.threads = threads();
    const std::vector<Reordering>* reo = m.hp.needs_reordering() ? &syn.gold : nullptr;
    TrainResult r = train(m, syn.corpus, reo, nullptr, nullptr, cfg);
    double final_loss = r.loss_log.back().train;
    if (r.diverged || final_loss >= 0.1) {
      std::snprintf(buf, sizeof buf, "%s train loss %.4f after %zu epochs (need < 0.1)",
                    encoder_variant_name(variant).c_str(), final_loss, r.loss_log.size());
      detail = buf;
      return false;
    }
    int exact = 0;
    for (int i = 0; i < syn.corpus.size(); ++i) {
      ReorderStrategy strat;
      if (m.hp.needs_reordering())
        strat = ReorderStrategy{ReorderStrategy::kOracle, &syn.gold[static_cast<std::size_t>(i)]};
      Sentence hyp =
          translate({&m}, syn.corpus.pairs[static_cast<std::size_t>(i)].source, strat, DecodeConfig{});
      if (hyp.ids == syn.corpus.pairs[static_cast<std::size_t>(i)].target.ids) ++exact;
    }
    if (exact != syn.corpus.size()) {
      std::snprintf(buf, sizeof buf, "%s greedy decode reproduced %d/%d training targets",
                    encoder_variant_name(variant).c_str(), exact, syn.corpus.size());
      detail = buf;
      return false;
    }
    std::snprintf(buf, sizeof buf, "%s loss %.4f, 50/50 reproduced; ",
                  encoder_variant_name(variant).c_str(), final_loss);
    note += buf;
  }
  detail = note;
  return true;
}

// --- direction of the claim at desk scale -----------------------------------

bool direction_of_claim(std::string& detail) {
  SyntheticCorpus train_c = generate_synthetic(1000, 50, 8, ReorderRule::kReversal, 7001);
  SyntheticCorpus test_c = generate_synthetic(100, 50, 8, ReorderRule::kReversal, 7002);

  auto run_variant = [&](EncoderVariant variant) {
    std::vector<double> bleus;
    for (std::uint64_t seed : {1, 2, 3}) {
      Model m;
      m.hp.d_emb = m.hp.d_h = m.hp.d_a = 32;
      m.hp.variant = variant;
      m.hp.src_vocab = train_c.corpus.source_vocab.size();
      m.hp.tgt_vocab = train_c.corpus.target_vocab.size();
      m.src_vocab = train_c.corpus.source_vocab;
      m.tgt_vocab = train_c.corpus.target_vocab;
      TrainConfig cfg;
      cfg.epochs = 50;
      cfg.batch_size = 16;
      cfg.learning_rate = 1.0;
      cfg.seed = seed;
      cfg.threads = threads();
      const std::vector<Reordering>* reo = m.hp.needs_reordering() ? &train_c.gold : nullptr;
      TrainResult r = train(m, train_c.corpus, reo, nullptr, nullptr, cfg);
      (void)r;
      std::vector<Tokens> hyps, refs;
      for (int i = 0; i < test_c.corpus.size(); ++i) {
        ReorderStrategy strat;
        if (m.hp.needs_reordering())
          strat = ReorderStrategy{ReorderStrategy::kOracle, &test_c.gold[static_cast<std::size_t>(i)]};
        Sentence hyp = translate({&m}, test_c.corpus.pairs[static_cast<std::size_t>(i)].source,
                                 strat, DecodeConfig{});
        hyps.push_back(hyp.surface);
        refs.push_back(test_c.corpus.pairs[static_cast<std::size_t>(i)].target.surface);
      }
      bleus.push_back(bleu(hyps, refs, BleuSmoothing::kNone, threads()).bleu);
    }
    std::sort(bleus.begin(), bleus.end());
    return bleus;
  };

  std::vector<double> base = run_variant(EncoderVariant::kBase2);
  std::vector<double> rl3 = run_variant(EncoderVariant::kRl3);
  double base_median = base[1], rl3_median = rl3[1];
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "median BLEU over 3 seeds: RL3+oracle %.2f vs BASE2 %.2f (all RL3: %.1f/%.1f/%.1f)",
                rl3_median, base_median, rl3[0], rl3[1], rl3[2]);
  detail = buf;
  return rl3_median >= base_median;
}

// --- metrics oracles ----------------------------------------------------------

bool metrics_oracles(std::string& detail) {
  std::vector<Tokens> same{{"the", "cat", "sat"}, {"a", "b", "c", "d"}};
  if (std::abs(bleu(same, same).bleu - 100.0) > 1e-9) {
    detail = "identical corpora did not score 100";
    return false;
  }
  BleuReport clipped = bleu({{"the", "the", "the"}}, {{"the", "cat", "sat"}});
  if (std::abs(clipped.precisions[0] - 1.0 / 3.0) > 1e-12 || clipped.bleu != 0.0) {
    detail = "clipped-precision example did not score 0 unsmoothed";
    return false;
  }
  TerReport shift = ter({{"d", "a", "b", "c"}}, {{"a", "b", "c", "d"}});
  if (std::abs(shift.ter - 0.25) > 1e-12 || shift.shifts != 1) {
    detail = "shift example TER was " + std::to_string(shift.ter) + " (want 0.25)";
    return false;
  }

  Rng rng(20240007);
  for (int trial = 0; trial < 250; ++trial) {
    int hl = rng.uniform_int(1, 6), rl = rng.uniform_int(1, 6);
    Tokens hyp, ref;
    for (int i = 0; i < hl; ++i) hyp.push_back("w" + std::to_string(rng.uniform_int(0, 3)));
    for (int i = 0; i < rl; ++i) ref.push_back("w" + std::to_string(rng.uniform_int(0, 3)));
    SentenceEdits e = ter_sentence(hyp, ref);
    long wer = levenshtein(hyp, ref);
    long opt = oracles::ter_optimum(hyp, ref, 2);
    if (e.edits > wer || e.edits < opt) {
      detail = "greedy TER " + std::to_string(e.edits) + " outside [optimum " +
               std::to_string(opt) + ", WER " + std::to_string(wer) + "] at trial " +
               std::to_string(trial);
      return false;
    }
  }
  detail = "BLEU=100 on identical corpora, clipped example 0, shift example 0.25, "
           "250 small instances within [optimum, WER]";
  return true;
}

// --- variant equivalence -------------------------------------------------------

bool variant_equivalence(std::string& detail) {
  SyntheticCorpus syn = generate_synthetic(10, 12, 7, ReorderRule::kIdentity, 20240008);
  HyperParams rl3;
  rl3.d_emb = rl3.d_h = rl3.d_a = 12;
  rl3.variant = EncoderVariant::kRl3;
  rl3.src_vocab = syn.corpus.source_vocab.size();
  rl3.tgt_vocab = syn.corpus.target_vocab.size();
  HyperParams rpl3 = rl3;
  rpl3.variant = EncoderVariant::kRpl3;
  ModelParams p(rl3);
  Rng rng(20240009);
  p.init_uniform(rng, 0.5);

  for (const auto& pair : syn.corpus.pairs) {
    Reordering id = Reordering::identity(pair.source.size());
    Sentence sr = apply_reordering(pair.source, id);
    EncoderStates a = encode(p, rl3, pair.source, &sr, &id);
    EncoderStates b = encode(p, rpl3, pair.source, nullptr);
    if (!(a.h.array() == b.h.array()).all() ||
        !(a.final_concat.array() == b.final_concat.array()).all()) {
      detail = "states differ between RL3(identity) and RPL3 under shared weights";
      return false;
    }
  }
  detail = "RL3 with identity reordering matches RPL3 bit for bit on 10 sentences";
  return true;
}

// --- serialization ---------------------------------------------------------------

bool serialization(std::string& detail) {
  SyntheticCorpus syn = generate_synthetic(3, 8, 5, ReorderRule::kReversal, 20240010);
  Model m;
  m.hp.d_emb = 6;
  m.hp.d_h = 5;
  m.hp.d_a = 4;
  m.hp.variant = EncoderVariant::kRl3;
  m.hp.src_vocab = syn.corpus.source_vocab.size();
  m.hp.tgt_vocab = syn.corpus.target_vocab.size();
  m.src_vocab = syn.corpus.source_vocab;
  m.tgt_vocab = syn.corpus.target_vocab;
  m.params = ModelParams(m.hp);
  Rng rng(20240011);
  m.params.init_uniform(rng, 0.7);

  const std::string path = "acceptance_model.bin";
  save_model(m, path);
  Model back = load_model(path);

  bool equal = back.src_vocab == m.src_vocab && back.tgt_vocab == m.tgt_vocab &&
               back.hp.variant == m.hp.variant;
  std::vector<const MatrixXd*> orig, loaded;
  m.params.visit([&](const std::string&, const MatrixXd& t) { orig.push_back(&t); });
  back.params.visit([&](const std::string&, const MatrixXd& t) { loaded.push_back(&t); });
  for (std::size_t k = 0; k < orig.size() && equal; ++k)
    equal = (orig[k]->array() == loaded[k]->array()).all();
  if (!equal) {
    detail = "round trip was not bit-identical";
    std::remove(path.c_str());
    return false;
  }

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto expect_failure = [&](const std::string& mutated, const char* what,
                            const char* needle) {
    std::ofstream out(path, std::ios::binary);
    out << mutated;
    out.close();
    try {
      load_model(path);
      detail = std::string("corrupted file (") + what + ") loaded without error";
      return false;
    } catch (const ModelIoError& e) {
      if (std::string(e.what()).find(needle) == std::string::npos) {
        detail = std::string(what) + " raised the wrong message: " + e.what();
        return false;
      }
      return true;
    }
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'Z';
  std::string bad_version = bytes;
  bad_version[4] = 99;
  std::string truncated = bytes.substr(0, bytes.size() - 11);
  bool ok = expect_failure(bad_magic, "bad magic", "magic") &&
            expect_failure(bad_version, "bad version", "version") &&
            expect_failure(truncated, "truncation", "truncated tensor");
  std::remove(path.c_str());
  if (ok)
    detail = "round trip bit-identical; magic, version and truncation all rejected";
  return ok;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria{
      {"reordering-soundness", 10.0, reordering_soundness},
      {"footnote-reproduction", 0.0, footnote_reproduction},
      {"em-monotonicity-and-recovery", 30.0, em_monotonicity_recovery},
      {"gradient-correctness", 60.0, gradient_correctness},
      {"attention-simplex", 0.0, attention_simplex},
      {"overfit-capacity", 300.0, overfit_capacity},
      {"direction-of-claim", 1800.0, direction_of_claim},
      {"metrics-oracles", 0.0, metrics_oracles},
      {"variant-equivalence", 0.0, variant_equivalence},
      {"serialization", 0.0, serialization},
  };

  int failures = 0;
  for (auto& c : criteria) {
    std::string detail;
    double t0 = now_s();
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double elapsed = now_s() - t0;
    if (ok && c.time_budget_s > 0.0 && elapsed > c.time_budget_s) {
      ok = false;
      detail += " (exceeded time budget)";
    }
    std::printf("[%s] %-30s %6.1fs  %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), elapsed,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
