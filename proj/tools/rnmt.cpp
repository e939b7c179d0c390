// Pipeline front-end: synth | align | reorder | train | translate | evaluate.
// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric. Logs go to stderr, data to
// the named output files.
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "rnmt/align.hpp"
#include "rnmt/corpus.hpp"
#include "rnmt/error.hpp"
#include "rnmt/metrics.hpp"
#include "rnmt/model.hpp"
#include "rnmt/permutation.hpp"
#include "rnmt/reorder.hpp"
#include "rnmt/seq2seq.hpp"

using namespace rnmt;

namespace {

int default_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 0;
#endif
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  return in;
}

struct SynthArgs {
  int pairs = 1000, vocab = 50, max_len = 8;
  std::string rule = "reversal";
  std::uint64_t seed = 1;
  std::string out_src, out_tgt, out_perm;
};

void cmd_synth(const SynthArgs& a) {
  std::cerr << "synth: pairs=" << a.pairs << " vocab=" << a.vocab << " max-len=" << a.max_len
            << " rule=" << a.rule << " seed=" << a.seed << "\n";
  SyntheticCorpus syn = generate_synthetic(a.pairs, a.vocab, a.max_len,
                                           parse_reorder_rule(a.rule), a.seed);
  std::vector<Sentence> src, tgt;
  for (const auto& pair : syn.corpus.pairs) {
    src.push_back(pair.source);
    tgt.push_back(pair.target);
  }
  auto so = open_out(a.out_src);
  write_text(so, src);
  auto to = open_out(a.out_tgt);
  write_text(to, tgt);
  auto po = open_out(a.out_perm);
  write_permutations(po, syn.gold);
}

struct AlignArgs {
  std::string src, tgt, out_prefix;
  int iterations = 10;
  std::string method = "gdfa";
  bool no_null = false;
  int min_count = 1;
  int threads = default_threads();
};

void cmd_align(const AlignArgs& a) {
  SymMethod method = parse_sym_method(a.method);
  bool use_null = !a.no_null;
  ParallelCorpus corpus = load_parallel(a.src, a.tgt, a.min_count);
  std::cerr << "align: " << corpus.size() << " pairs, " << a.iterations
            << " EM iterations, null=" << (use_null ? "on" : "off") << "\n";

  Model1Result fwd_model = train_model1(corpus, a.iterations, use_null, a.threads);
  std::cerr << "align: forward log-likelihood " << fwd_model.log_likelihood.front() << " -> "
            << fwd_model.log_likelihood.back() << "\n";

  ParallelCorpus swapped;
  swapped.source_vocab = corpus.target_vocab;
  swapped.target_vocab = corpus.source_vocab;
  for (const auto& pair : corpus.pairs) swapped.pairs.push_back({pair.target, pair.source});
  Model1Result bwd_model = train_model1(swapped, a.iterations, use_null, a.threads);
  std::cerr << "align: backward log-likelihood " << bwd_model.log_likelihood.front() << " -> "
            << bwd_model.log_likelihood.back() << "\n";

  std::vector<AlignmentMatrix> fwd, bwd, sym;
  for (int i = 0; i < corpus.size(); ++i) {
    const auto& pair = corpus.pairs[static_cast<std::size_t>(i)];
    AlignmentMatrix f = viterbi_align(fwd_model.table, pair, use_null);
    AlignmentMatrix br = viterbi_align(bwd_model.table, swapped.pairs[static_cast<std::size_t>(i)],
                                       use_null);
    AlignmentMatrix b;  // transpose back into (source, target) orientation
    b.n = br.m;
    b.m = br.n;
    for (const auto& [j, i2] : br.links) b.links.emplace(i2, j);
    sym.push_back(symmetrize(f, b, method));
    fwd.push_back(std::move(f));
    bwd.push_back(std::move(b));
  }
  auto fo = open_out(a.out_prefix + ".fwd");
  write_pharaoh(fo, fwd);
  auto bo = open_out(a.out_prefix + ".bwd");
  write_pharaoh(bo, bwd);
  auto so = open_out(a.out_prefix + "." + a.method);
  write_pharaoh(so, sym);
}

struct ReorderArgs {
  std::string src, alignments, out_perm, out_text;
};

void cmd_reorder(const ReorderArgs& a) {
  auto lines = read_tokenized_file(a.src);
  auto in = open_in(a.alignments);
  auto links = read_pharaoh(in);
  if (lines.size() != links.size())
    throw DataError("alignment line count " + std::to_string(links.size()) +
                    " does not match corpus size " + std::to_string(lines.size()));

  std::vector<Reordering> perms;
  std::vector<Sentence> reordered;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    int n = static_cast<int>(lines[k].size());
    AlignmentMatrix m;
    m.n = n;
    for (const auto& [i, j] : links[k]) {
      if (i < 1 || i > n)
        throw DataError("alignment link source position " + std::to_string(i - 1) +
                        " out of range at line " + std::to_string(k + 1));
      m.m = std::max(m.m, j);
      m.links.emplace(i, j);
    }
    Reordering r = alignment_to_reordering(m);
    Sentence s;
    s.surface = lines[k];
    s.ids.assign(lines[k].size(), 0);  // surface-only pipeline
    reordered.push_back(apply_reordering(s, r));
    perms.push_back(std::move(r));
  }
  auto po = open_out(a.out_perm);
  write_permutations(po, perms);
  auto to = open_out(a.out_text);
  write_text(to, reordered);
}

struct TrainArgs {
  std::string src, tgt, dev_src, dev_tgt, perm, dev_perm;
  std::string encoder = "base2";
  std::string out, loss_log;
  int d_emb = 32, d_h = 32, d_a = 32;
  int max_decode_len = 64;
  bool reordered_by_word = false;
  int min_count = 1;
  TrainConfig cfg;
};

std::vector<Reordering> load_perms(const std::string& path, int expected,
                                   const char* what) {
  auto in = open_in(path);
  auto perms = read_permutations(in);
  if (static_cast<int>(perms.size()) != expected)
    throw DataError(std::string(what) + " permutation count " + std::to_string(perms.size()) +
                    " does not match corpus size " + std::to_string(expected));
  return perms;
}

int cmd_train(const TrainArgs& a) {
  Model model;
  model.hp.variant = parse_encoder_variant(a.encoder);
  if (model.hp.needs_reordering() && a.perm.empty())
    throw UsageError("--encoder " + a.encoder + " requires --perm (training reorderings)");
  if (a.dev_src.empty() != a.dev_tgt.empty())
    throw UsageError("--dev-src and --dev-tgt must be given together");

  ParallelCorpus corpus = load_parallel(a.src, a.tgt, a.min_count);
  model.hp.d_emb = a.d_emb;
  model.hp.d_h = a.d_h;
  model.hp.d_a = a.d_a;
  model.hp.max_decode_len = a.max_decode_len;
  model.hp.reordered_by_word = a.reordered_by_word;
  model.hp.src_vocab = corpus.source_vocab.size();
  model.hp.tgt_vocab = corpus.target_vocab.size();
  model.src_vocab = corpus.source_vocab;
  model.tgt_vocab = corpus.target_vocab;

  std::vector<Reordering> perms;
  const std::vector<Reordering>* perms_ptr = nullptr;
  if (!a.perm.empty()) {
    perms = load_perms(a.perm, corpus.size(), "training");
    for (int i = 0; i < corpus.size(); ++i)
      if (perms[static_cast<std::size_t>(i)].size() != corpus.pairs[static_cast<std::size_t>(i)].source.size())
        throw DataError("permutation length mismatch at line " + std::to_string(i + 1));
    perms_ptr = &perms;
  }

  std::unique_ptr<ParallelCorpus> dev;
  std::vector<Reordering> dev_perms;
  const std::vector<Reordering>* dev_perms_ptr = nullptr;
  if (!a.dev_src.empty()) {
    // Dev shares the training vocabularies.
    auto dev_src_lines = read_tokenized_file(a.dev_src);
    auto dev_tgt_lines = read_tokenized_file(a.dev_tgt);
    if (dev_src_lines.size() != dev_tgt_lines.size())
      throw DataError("dev line-count mismatch: " + std::to_string(dev_src_lines.size()) +
                      " vs " + std::to_string(dev_tgt_lines.size()));
    dev = std::make_unique<ParallelCorpus>();
    dev->source_vocab = corpus.source_vocab;
    dev->target_vocab = corpus.target_vocab;
    for (std::size_t i = 0; i < dev_src_lines.size(); ++i)
      dev->pairs.push_back({numberize(dev_src_lines[i], dev->source_vocab),
                            numberize(dev_tgt_lines[i], dev->target_vocab)});
    if (model.hp.needs_reordering()) {
      if (a.dev_perm.empty())
        throw UsageError("--encoder " + a.encoder + " with a dev set requires --dev-perm");
      dev_perms = load_perms(a.dev_perm, dev->size(), "dev");
      dev_perms_ptr = &dev_perms;
    }
  }

  std::cerr << "train: encoder=" << a.encoder << " pairs=" << corpus.size()
            << " epochs=" << a.cfg.epochs << " lr=" << a.cfg.learning_rate
            << " batch=" << a.cfg.batch_size << " clip=" << a.cfg.clip_norm
            << " seed=" << a.cfg.seed << " threads=" << a.cfg.threads << "\n";
  TrainResult result = train(model, corpus, perms_ptr, dev.get(), dev_perms_ptr, a.cfg);

  save_model(model, a.out);
  if (!a.loss_log.empty()) {
    auto lo = open_out(a.loss_log);
    write_loss_log(lo, result.loss_log);
  }
  if (result.diverged) {
    std::cerr << "train: diverged (" << result.divergence_message
              << "); last good checkpoint saved to " << a.out << "\n";
    return 3;
  }
  std::cerr << "train: best epoch " << result.best_epoch << ", final train loss "
            << (result.loss_log.empty() ? 0.0 : result.loss_log.back().train) << "\n";
  return 0;
}

struct TranslateArgs {
  std::vector<std::string> models;
  std::string input, output;
  std::string method = "greedy";
  int beam_width = 4;
  std::string strategy;  // identity | oracle
  std::string oracle_perm;
  int max_len = 0;
};

void cmd_translate(const TranslateArgs& a) {
  if (a.models.empty()) throw UsageError("at least one --model is required");
  std::vector<Model> owned;
  owned.reserve(a.models.size());
  for (const auto& path : a.models) owned.push_back(load_model(path));
  std::vector<const Model*> models;
  for (const auto& m : owned) models.push_back(&m);

  bool needs_reordering = false;
  for (const auto& m : owned) needs_reordering = needs_reordering || m.hp.needs_reordering();
  if (needs_reordering && a.strategy.empty())
    throw UsageError("a model with a reordered input requires --reorder-strategy "
                     "(identity or oracle)");

  DecodeConfig dc;
  dc.max_len = a.max_len;
  if (a.method == "greedy") {
    dc.method = DecodeMethod::kGreedy;
  } else if (a.method == "beam") {
    dc.method = DecodeMethod::kBeam;
    dc.beam_width = a.beam_width;
  } else {
    throw UsageError("unknown decode method '" + a.method + "' (greedy or beam)");
  }

  auto lines = read_tokenized_file(a.input);
  std::vector<Reordering> oracle;
  if (a.strategy == "oracle") {
    if (a.oracle_perm.empty()) throw UsageError("--reorder-strategy oracle requires --oracle-perm");
    oracle = load_perms(a.oracle_perm, static_cast<int>(lines.size()), "oracle");
  } else if (!a.strategy.empty() && a.strategy != "identity") {
    throw UsageError("unknown reorder strategy '" + a.strategy + "' (identity or oracle)");
  }

  auto out = open_out(a.output);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty())
      throw DataError("empty input line " + std::to_string(i + 1));
    Sentence s = numberize(lines[i], owned[0].src_vocab);
    ReorderStrategy strat;
    if (a.strategy == "oracle") strat = {ReorderStrategy::kOracle, &oracle[i]};
    Sentence hyp = translate(models, s, strat, dc);
    for (std::size_t k = 0; k < hyp.surface.size(); ++k) {
      if (k) out << ' ';
      out << hyp.surface[k];
    }
    out << '\n';
  }
}

struct EvaluateArgs {
  std::string hyp, ref;
  bool smooth = false;
  std::string json_out, out;
  int threads = default_threads();
};

void cmd_evaluate(const EvaluateArgs& a) {
  auto hyps = read_tokenized_file(a.hyp);
  auto refs = read_tokenized_file(a.ref);
  BleuReport b = bleu(hyps, refs,
                      a.smooth ? BleuSmoothing::kAddOneAboveUnigram : BleuSmoothing::kNone,
                      a.threads);
  TerReport t = ter(hyps, refs, a.threads);
  std::string line = format_score_line(b, t);
  std::cout << line << "\n";
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    out << line << "\n";
  }
  if (!a.json_out.empty()) {
    nlohmann::json j;
    j["bleu"] = b.bleu;
    j["precisions"] = b.precisions;
    j["brevity_penalty"] = b.brevity_penalty;
    j["hyp_len"] = b.hyp_len;
    j["ref_len"] = b.ref_len;
    j["ter"] = t.ter;
    j["edits"] = {{"insertions", t.insertions},
                  {"deletions", t.deletions},
                  {"substitutions", t.substitutions},
                  {"shifts", t.shifts},
                  {"total", t.edits}};
    j["ref_words"] = t.ref_words;
    auto out = open_out(a.json_out);
    out << j.dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reordering-augmented neural machine translation pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file with flag defaults; flags win");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic parallel corpus");
  synth_cmd->add_option("--pairs", synth.pairs, "number of sentence pairs");
  synth_cmd->add_option("--vocab", synth.vocab, "word types per side");
  synth_cmd->add_option("--max-len", synth.max_len, "maximum sentence length");
  synth_cmd->add_option("--rule", synth.rule, "identity | reversal | verbfinal");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--out-src", synth.out_src, "source side output")->required();
  synth_cmd->add_option("--out-tgt", synth.out_tgt, "target side output")->required();
  synth_cmd->add_option("--out-perm", synth.out_perm, "ground-truth permutations output")
      ->required();

  AlignArgs al;
  auto* align_cmd = app.add_subcommand("align", "train IBM Model 1 both ways and symmetrize");
  align_cmd->add_option("--src", al.src, "source corpus")->required();
  align_cmd->add_option("--tgt", al.tgt, "target corpus")->required();
  align_cmd->add_option("--out-prefix", al.out_prefix, "prefix for .fwd/.bwd/.<method>")
      ->required();
  align_cmd->add_option("--iterations", al.iterations, "EM iterations");
  align_cmd->add_option("--method", al.method, "intersection | gdfa");
  align_cmd->add_flag("--no-null", al.no_null, "disable the NULL word");
  align_cmd->add_option("--min-count", al.min_count, "UNK threshold");
  align_cmd->add_option("--threads", al.threads, "0 = serial reference");

  ReorderArgs re;
  auto* reorder_cmd = app.add_subcommand("reorder", "alignments -> one-to-one reorderings");
  reorder_cmd->add_option("--src", re.src, "source corpus")->required();
  reorder_cmd->add_option("--alignments", re.alignments, "Pharaoh alignment file")->required();
  reorder_cmd->add_option("--out-perm", re.out_perm, "permutation file output")->required();
  reorder_cmd->add_option("--out-text", re.out_text, "reordered corpus output")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train an attention encoder-decoder");
  train_cmd->add_option("--src", tr.src, "training source")->required();
  train_cmd->add_option("--tgt", tr.tgt, "training target")->required();
  train_cmd->add_option("--dev-src", tr.dev_src, "dev source");
  train_cmd->add_option("--dev-tgt", tr.dev_tgt, "dev target");
  train_cmd->add_option("--encoder", tr.encoder, "base2 | rl3 | rpl3 | ri2");
  train_cmd->add_option("--perm", tr.perm, "training reorderings (rl3/ri2)");
  train_cmd->add_option("--dev-perm", tr.dev_perm, "dev reorderings (rl3/ri2)");
  train_cmd->add_option("--out", tr.out, "model file output")->required();
  train_cmd->add_option("--loss-log", tr.loss_log, "epoch<TAB>train<TAB>dev log");
  train_cmd->add_option("--d-emb", tr.d_emb, "embedding width");
  train_cmd->add_option("--d-h", tr.d_h, "recurrent width per layer");
  train_cmd->add_option("--d-a", tr.d_a, "attention width");
  train_cmd->add_option("--max-decode-len", tr.max_decode_len, "decode length cap");
  train_cmd->add_flag("--reordered-by-word", tr.reordered_by_word,
                      "concatenate third-layer states by word instead of by index");
  train_cmd->add_option("--min-count", tr.min_count, "UNK threshold");
  train_cmd->add_option("--epochs", tr.cfg.epochs, "training epochs");
  train_cmd->add_option("--batch", tr.cfg.batch_size, "batch size");
  train_cmd->add_option("--lr", tr.cfg.learning_rate, "SGD learning rate");
  train_cmd->add_option("--clip", tr.cfg.clip_norm, "global-norm gradient clip (0 = off)");
  train_cmd->add_option("--init-scale", tr.cfg.init_scale, "uniform init range");
  train_cmd->add_option("--seed", tr.cfg.seed, "RNG seed");
  train_cmd->add_option("--threads", tr.cfg.threads, "0 = serial reference");
  tr.cfg.threads = default_threads();

  TranslateArgs ts;
  auto* translate_cmd = app.add_subcommand("translate", "decode a corpus");
  translate_cmd->add_option("--model", ts.models, "model file (repeat to ensemble)")
      ->required();
  translate_cmd->add_option("--input", ts.input, "source corpus")->required();
  translate_cmd->add_option("--output", ts.output, "hypothesis file")->required();
  translate_cmd->add_option("--method", ts.method, "greedy | beam");
  translate_cmd->add_option("--beam-width", ts.beam_width, "beam width for --method beam");
  translate_cmd->add_option("--reorder-strategy", ts.strategy,
                            "identity | oracle (required for rl3/ri2 models)");
  translate_cmd->add_option("--oracle-perm", ts.oracle_perm, "permutations for oracle strategy");
  translate_cmd->add_option("--max-len", ts.max_len, "decode length cap (0 = model default)");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "corpus BLEU and TER");
  evaluate_cmd->add_option("--hyp", ev.hyp, "hypothesis file")->required();
  evaluate_cmd->add_option("--ref", ev.ref, "reference file")->required();
  evaluate_cmd->add_flag("--smooth", ev.smooth, "add-one smoothing above unigrams");
  evaluate_cmd->add_option("--json", ev.json_out, "machine-readable sidecar");
  evaluate_cmd->add_option("--out", ev.out, "also write the score line here");
  evaluate_cmd->add_option("--threads", ev.threads, "0 = serial reference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are exit 1
  }

  try {
    if (synth_cmd->parsed()) cmd_synth(synth);
    if (align_cmd->parsed()) cmd_align(al);
    if (reorder_cmd->parsed()) cmd_reorder(re);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (translate_cmd->parsed()) cmd_translate(ts);
    if (evaluate_cmd->parsed()) cmd_evaluate(ev);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
