#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "rnmt/align.hpp"
#include "rnmt/error.hpp"
#include "rnmt/rng.hpp"

using namespace rnmt;

namespace {

ParallelCorpus tiny_corpus(const std::string& src, const std::string& tgt) {
  std::istringstream s(src), t(tgt);
  return load_parallel_text(s, t, 1);
}

AlignmentMatrix make_align(int n, int m, std::initializer_list<std::pair<int, int>> links) {
  AlignmentMatrix a;
  a.n = n;
  a.m = m;
  for (auto& l : links) a.links.insert(l);
  return a;
}

}  // namespace

TEST_CASE("one-pair corpus converges to t(x|a) = 1") {
  ParallelCorpus c = tiny_corpus("a\n", "x\n");
  auto res = train_model1(c, 5, true);
  int a = c.source_vocab.lookup("a");
  int x = c.target_vocab.lookup("x");
  CHECK(res.table.prob(a, x) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero iterations yields the uniform table") {
  ParallelCorpus c = tiny_corpus("a b\n", "x y\n");
  auto res = train_model1(c, 0, true);
  int a = c.source_vocab.lookup("a");
  int x = c.target_vocab.lookup("x");
  int y = c.target_vocab.lookup("y");
  double u = 1.0 / c.target_vocab.size();
  CHECK(res.table.prob(a, x) == doctest::Approx(u));
  CHECK(res.table.prob(a, y) == doctest::Approx(u));
}

TEST_CASE("two-pair corpus matches the dense EM oracle") {
  ParallelCorpus c = tiny_corpus("a b\na\n", "x y\nx\n");
  const int iters = 10;
  for (bool use_null : {false, true}) {
    auto res = train_model1(c, iters, use_null);
    oracles::DenseModel1 oracle(c.source_vocab.size(), c.target_vocab.size());
    for (int k = 0; k < iters; ++k) oracle.em_iteration(c, use_null);

    int a = c.source_vocab.lookup("a");
    int b = c.source_vocab.lookup("b");
    int x = c.target_vocab.lookup("x");
    int y = c.target_vocab.lookup("y");
    for (int e : {a, b})
      for (int f : {x, y})
        CHECK(res.table.prob(e, f) ==
              doctest::Approx(oracle.t[static_cast<std::size_t>(e)][static_cast<std::size_t>(f)])
                  .epsilon(1e-9));
    // The oracle-verified argmax claims.
    CHECK(res.table.prob(a, x) > res.table.prob(a, y));
    CHECK(res.table.prob(b, y) > res.table.prob(b, x));
  }
}

TEST_CASE("trained rows are normalized") {
  ParallelCorpus c = tiny_corpus("a b c\nb c\nc a\n", "x y z\ny z\nz x\n");
  auto res = train_model1(c, 3, true);
  for (const auto& tok : c.source_vocab.tokens()) {
    int e = c.source_vocab.lookup(tok);
    if (!res.table.has_row(e)) continue;
    CHECK(res.table.row_sum(e) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("log-likelihood is non-decreasing over EM iterations") {
  SyntheticCorpus s = generate_synthetic(60, 12, 6, ReorderRule::kReversal, 17);
  auto res = train_model1(s.corpus, 10, true);
  REQUIRE(res.log_likelihood.size() == 11);
  for (std::size_t k = 1; k < res.log_likelihood.size(); ++k) {
    double prev = res.log_likelihood[k - 1];
    double next = res.log_likelihood[k];
    CHECK(next >= prev - 1e-9 * std::abs(prev));
  }
}

TEST_CASE("log-likelihood matches the dense oracle") {
  ParallelCorpus c = tiny_corpus("a b\nb a\na\n", "x y\ny x\nx\n");
  auto res = train_model1(c, 4, true);
  oracles::DenseModel1 oracle(c.source_vocab.size(), c.target_vocab.size());
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(res.log_likelihood[k] == doctest::Approx(oracle.log_likelihood(c, true)).epsilon(1e-9));
    oracle.em_iteration(c, true);
  }
  CHECK(res.log_likelihood[4] == doctest::Approx(oracle.log_likelihood(c, true)).epsilon(1e-9));
}

TEST_CASE("empty corpus is rejected") {
  ParallelCorpus c;
  CHECK_THROWS_AS(train_model1(c, 1, true), DataError);
}

TEST_CASE("viterbi links each source word to its argmax target") {
  ParallelCorpus c = tiny_corpus("a\n", "x\n");
  auto res = train_model1(c, 5, true);
  AlignmentMatrix a = viterbi_align(res.table, c.pairs[0], true);
  CHECK(a.links == std::set<std::pair<int, int>>{{1, 1}});
}

TEST_CASE("uniform table breaks ties toward the lowest target position") {
  ParallelCorpus c = tiny_corpus("a b\n", "x y\n");
  auto res = train_model1(c, 0, true);  // uniform
  AlignmentMatrix a = viterbi_align(res.table, c.pairs[0], true);
  CHECK(a.links == std::set<std::pair<int, int>>{{1, 1}, {2, 1}});
}

TEST_CASE("trained two-pair corpus aligns the crossing-free diagonal") {
  ParallelCorpus c = tiny_corpus("a b\na\n", "x y\nx\n");
  auto res = train_model1(c, 10, true);
  AlignmentMatrix a = viterbi_align(res.table, c.pairs[0], true);
  CHECK(a.links == std::set<std::pair<int, int>>{{1, 1}, {2, 2}});
}

TEST_CASE("unknown source tokens get the uniform row") {
  ParallelCorpus c = tiny_corpus("a\n", "x\n");
  auto res = train_model1(c, 3, true);
  CHECK(!res.table.has_row(Vocabulary::kBos));
  CHECK(res.table.prob(Vocabulary::kBos, c.target_vocab.lookup("x")) ==
        doctest::Approx(res.table.uniform()));
}

TEST_CASE("symmetrize intersection and bounds") {
  auto fwd = make_align(2, 2, {{1, 1}, {2, 2}});
  auto bwd_same = make_align(2, 2, {{1, 1}, {2, 2}});
  CHECK(symmetrize(fwd, bwd_same, SymMethod::kIntersection).links == fwd.links);
  CHECK(symmetrize(fwd, bwd_same, SymMethod::kGdfa).links == fwd.links);

  auto bwd = make_align(2, 2, {{1, 1}});
  CHECK(symmetrize(fwd, bwd, SymMethod::kIntersection).links ==
        std::set<std::pair<int, int>>{{1, 1}});
}

TEST_CASE("gdfa grows diagonally within the union") {
  auto fwd = make_align(2, 2, {{1, 1}, {2, 2}});
  auto bwd = make_align(2, 2, {{1, 1}, {2, 1}});
  AlignmentMatrix g = symmetrize(fwd, bwd, SymMethod::kGdfa);
  std::set<std::pair<int, int>> uni{{1, 1}, {2, 2}, {2, 1}};
  CHECK(g.links.count({1, 1}) == 1);
  for (const auto& l : g.links) CHECK(uni.count(l) == 1);
}

TEST_CASE("symmetrize rejects dimension mismatches") {
  auto fwd = make_align(2, 2, {{1, 1}});
  auto bwd = make_align(3, 2, {{1, 1}});
  CHECK_THROWS_AS(symmetrize(fwd, bwd, SymMethod::kIntersection), DataError);
}

TEST_CASE("intersection within gdfa within union, fuzzed") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    int n = rng.uniform_int(1, 8), m = rng.uniform_int(1, 8);
    AlignmentMatrix fwd, bwd;
    fwd.n = bwd.n = n;
    fwd.m = bwd.m = m;
    int lf = rng.uniform_int(0, n), lb = rng.uniform_int(0, m);
    for (int k = 0; k < lf; ++k) fwd.links.emplace(rng.uniform_int(1, n), rng.uniform_int(1, m));
    for (int k = 0; k < lb; ++k) bwd.links.emplace(rng.uniform_int(1, n), rng.uniform_int(1, m));

    AlignmentMatrix inter = symmetrize(fwd, bwd, SymMethod::kIntersection);
    AlignmentMatrix gdfa = symmetrize(fwd, bwd, SymMethod::kGdfa);
    for (const auto& l : inter.links) CHECK(gdfa.links.count(l) == 1);
    for (const auto& l : gdfa.links)
      CHECK((fwd.links.count(l) == 1 || bwd.links.count(l) == 1));
    // Intersection is symmetric in its arguments.
    CHECK(symmetrize(bwd, fwd, SymMethod::kIntersection).links == inter.links);
  }
}

TEST_CASE("pharaoh format round-trips") {
  std::vector<AlignmentMatrix> as{make_align(3, 3, {{1, 1}, {2, 3}, {3, 2}}),
                                  make_align(1, 1, {}),
                                  make_align(2, 2, {{1, 2}, {2, 1}})};
  std::ostringstream out;
  write_pharaoh(out, as);
  CHECK(out.str() == "0-0 1-2 2-1\n\n0-1 1-0\n");
  std::istringstream in(out.str());
  auto links = read_pharaoh(in);
  REQUIRE(links.size() == 3);
  CHECK(links[0] == std::vector<std::pair<int, int>>{{1, 1}, {2, 3}, {3, 2}});
  CHECK(links[1].empty());

  // Writer output parses back to the identical byte sequence.
  std::vector<AlignmentMatrix> again;
  for (const auto& ls : links) {
    AlignmentMatrix a;
    a.n = 3;
    a.m = 3;
    a.links.insert(ls.begin(), ls.end());
    again.push_back(a);
  }
  std::ostringstream out2;
  write_pharaoh(out2, again);
  CHECK(out2.str() == out.str());
}

TEST_CASE("malformed pharaoh lines carry the line number") {
  std::istringstream in("0-0\n1_2\n");
  try {
    read_pharaoh(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("viterbi recovers an unambiguous dictionary") {
  // 1:1 token mapping, tokens unique within a sentence.
  Rng rng(31);
  ParallelCorpus c;
  const int vocab = 30;
  std::vector<std::string> sw, tw;
  for (int k = 0; k < vocab; ++k) {
    sw.push_back("s" + std::to_string(k));
    tw.push_back("t" + std::to_string(k));
    c.source_vocab.add(sw.back());
    c.target_vocab.add(tw.back());
  }
  for (int p = 0; p < 200; ++p) {
    std::vector<int> perm(vocab);
    for (int k = 0; k < vocab; ++k) perm[static_cast<std::size_t>(k)] = k;
    rng.shuffle(perm);
    int len = rng.uniform_int(3, 8);
    SentencePair pair;
    for (int i = 0; i < len; ++i) {
      int w = perm[static_cast<std::size_t>(i)];
      pair.source.surface.push_back(sw[static_cast<std::size_t>(w)]);
      pair.source.ids.push_back(c.source_vocab.lookup(sw[static_cast<std::size_t>(w)]));
      pair.target.surface.push_back(tw[static_cast<std::size_t>(w)]);
      pair.target.ids.push_back(c.target_vocab.lookup(tw[static_cast<std::size_t>(w)]));
    }
    c.pairs.push_back(std::move(pair));
  }
  auto res = train_model1(c, 10, true);
  long correct = 0, total = 0;
  for (const auto& pair : c.pairs) {
    AlignmentMatrix a = viterbi_align(res.table, pair, true);
    for (int i = 1; i <= pair.source.size(); ++i) {
      ++total;
      if (a.links.count({i, i})) ++correct;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.95);
}
