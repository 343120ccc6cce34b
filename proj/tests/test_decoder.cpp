#include <doctest.h>

#include <cmath>
#include <map>

#include "support/testutil.hpp"
#include "treelm/decoder.hpp"

using namespace treelm;
using namespace treelm::test;

namespace {

std::unique_ptr<Model> micro_model(std::uint64_t seed = 11, int max_open = 2, int max_words = 2) {
  Vocab v = make_vocab(std::vector<std::string>{"a", "b"}, std::vector<std::string>{"S", "NP"},
                       std::vector<std::string>{"T"});
  return std::make_unique<Model>(std::move(v), micro_config(max_open, max_words), Rng(seed));
}

std::unique_ptr<Model> forced_model(std::uint64_t seed = 13) {
  Vocab v = make_vocab(std::vector<std::string>{}, std::vector<std::string>{"S"},
                       std::vector<std::string>{"T"});
  // |W| = 1: only <unk>
  return std::make_unique<Model>(std::move(v), micro_config(1, 1), Rng(seed));
}

}  // namespace

TEST_CASE("initial state supports only NT; mandatory steps score zero") {
  auto m = forced_model();
  Graph g;
  DecoderRun run(g, *m);
  REQUIRE(run.legal_indices().size() == 1);
  CHECK(run.legal_indices()[0] == 2);
  Node lp0 = run.advance(Action::make_nt(0));
  CHECK(g.scalar_value(lp0) == 0.0);
  // only GEN is legal now, and |W| = 1, so action and word both cost nothing
  REQUIRE(run.legal_indices() == std::vector<int>{0});
  Node lp1 = run.advance(Action::make_gen(0));
  CHECK(g.scalar_value(lp1) == 0.0);
  REQUIRE(run.legal_indices() == std::vector<int>{1});
  Node lp2 = run.advance(Action::make_reduce());
  CHECK(g.scalar_value(lp2) == 0.0);
  CHECK(run.done());
}

TEST_CASE("action and word distributions normalize along random walks") {
  auto m = micro_model(19, 3, 4);
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    Graph g;
    DecoderRun run(g, *m);
    while (!run.done()) {
      const auto& legal = run.legal_indices();
      const auto& lp = run.action_log_probs();
      real total = 0;
      for (int i : legal) total += std::exp(lp[i]);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      bool gen_legal = false;
      for (int i : legal) gen_legal = gen_legal || i == 0;
      if (gen_legal) {
        const auto& wlp = run.word_log_probs();
        real wtotal = 0;
        for (real v : wlp) wtotal += std::exp(v);
        CHECK(wtotal == doctest::Approx(1.0).epsilon(1e-6));
      }
      int pick = legal[rng.uniform_int(legal.size())];
      Action a = pick == 0 ? Action::make_gen(static_cast<std::int32_t>(rng.uniform_int(
                                 m->vocab.num_words())))
                           : action_from_index(pick, TransitionMode::Generative);
      run.advance(a);
    }
  }
}

TEST_CASE("zeroed word output layer gives a uniform distribution") {
  auto m = micro_model(23);
  m->dec.word_w->value.zero();
  m->dec.word_b->value.zero();
  Graph g;
  DecoderRun run(g, *m);
  run.advance(Action::make_nt(0));
  const auto& wlp = run.word_log_probs();
  for (real v : wlp)
    CHECK(v == doctest::Approx(std::log(1.0 / m->vocab.num_words())).epsilon(1e-12));
}

TEST_CASE("word distribution where GEN is illegal is a contract error") {
  auto m = micro_model(29);
  Graph g;
  DecoderRun run(g, *m);
  run.advance(Action::make_nt(0));
  run.advance(Action::make_gen(1));
  run.advance(Action::make_gen(2));  // max_words reached
  CHECK_THROWS_AS(run.word_log_probs(), Error);
}

TEST_CASE("score_joint splits into action and word terms") {
  auto m = micro_model(31, 2, 3);
  std::vector<std::int32_t> words = {1, 2};
  std::vector<Action> actions = {Action::make_nt(0), Action::make_gen(1), Action::make_nt(1),
                                 Action::make_gen(2), Action::make_reduce(),
                                 Action::make_reduce()};
  Graph g;
  JointScore score = decoder_score_node(g, *m, words, actions);
  real pa = g.scalar_value(score.log_p_actions);
  real pw = g.scalar_value(score.log_p_words);
  real joint = g.scalar_value(score.log_joint);
  CHECK(joint == doctest::Approx(pa + pw).epsilon(1e-12));
  CHECK(joint <= std::min(pa, pw));
  CHECK(pa <= 0.0);
  CHECK(pw <= 0.0);
}

TEST_CASE("word/GEN mismatches are contract errors") {
  auto m = micro_model(37);
  std::vector<Action> actions = {Action::make_nt(0), Action::make_gen(1),
                                 Action::make_reduce()};
  std::vector<std::int32_t> two_words = {1, 2};
  CHECK_THROWS_AS(decoder_score(*m, two_words, actions), Error);
  std::vector<std::int32_t> wrong_word = {2};
  CHECK_THROWS_WITH_AS(decoder_score(*m, wrong_word, actions),
                       doctest::Contains("GEN word mismatch"), Error);
}

TEST_CASE("joint distribution sums to one over the whole enumerable space") {
  auto m = micro_model(41);
  auto derivations = enumerate_gen_derivations(m->vocab.num_nts(), m->vocab.num_words(),
                                               m->cfg.constraints(), {});
  REQUIRE(derivations.size() > 10);
  real total = 0;
  for (const auto& d : derivations) {
    std::vector<std::int32_t> words;
    for (const Action& a : d)
      if (a.kind == ActionKind::Gen) words.push_back(a.word);
    total += std::exp(decoder_score(*m, words, d));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("prefix invariance: shared prefixes score identically step by step") {
  auto m = micro_model(43, 2, 3);
  std::vector<Action> prefix = {Action::make_nt(0), Action::make_gen(1)};
  std::vector<Action> cont_a = {Action::make_gen(1), Action::make_reduce()};
  std::vector<Action> cont_b = {Action::make_nt(1), Action::make_gen(2), Action::make_reduce(),
                                Action::make_reduce()};
  auto step_values = [&](const std::vector<Action>& continuation) {
    std::vector<Action> full = prefix;
    full.insert(full.end(), continuation.begin(), continuation.end());
    Graph g;
    DecoderRun run(g, *m);
    std::vector<real> values;
    for (const Action& a : full) values.push_back(g.scalar_value(run.advance(a)));
    REQUIRE(run.done());
    return values;
  };
  auto va = step_values(cont_a);
  auto vb = step_values(cont_b);
  for (size_t t = 0; t < prefix.size(); ++t) CHECK(va[t] == vb[t]);  // bitwise
}

TEST_CASE("samples replay to the identical joint score") {
  auto m = micro_model(47, 3, 4);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    Graph g;
    auto sample = decoder_sample(g, *m, rng, 100);
    REQUIRE(sample.has_value());
    real sampled = g.scalar_value(sample->log_joint);
    real rescored = decoder_score(*m, sample->words, sample->actions);
    CHECK(sampled == rescored);  // bitwise
  }
}

TEST_CASE("sampled sentence frequencies match enumerated marginals within 3 sigma") {
  auto m = micro_model(53);
  // p(x) for every possible yield, by enumeration
  std::map<std::vector<std::int32_t>, real> px;
  auto derivations = enumerate_gen_derivations(m->vocab.num_nts(), m->vocab.num_words(),
                                               m->cfg.constraints(), {});
  for (const auto& d : derivations) {
    std::vector<std::int32_t> words;
    for (const Action& a : d)
      if (a.kind == ActionKind::Gen) words.push_back(a.word);
    px[words] += std::exp(decoder_score(*m, words, d));
  }
  const int n = 50000;
  Rng rng(321);
  std::map<std::vector<std::int32_t>, int> counts;
  for (int i = 0; i < n; ++i) {
    Graph g;
    auto sample = decoder_sample(g, *m, rng, 100);
    REQUIRE(sample.has_value());
    ++counts[sample->words];
  }
  for (const auto& [sentence, p] : px) {
    real se = std::sqrt(p * (1 - p) / n);
    real freq = static_cast<real>(counts[sentence]) / n;
    CHECK(std::fabs(freq - p) <= 3 * se + 1e-9);
  }
}

TEST_CASE("composition is permutation invariant and idempotent on duplicates") {
  auto m = micro_model(59);
  Graph g;
  Rng rng(2);
  Tensor c1(m->cfg.dec_lstm_dim, 1), c2(m->cfg.dec_lstm_dim, 1);
  for (auto& v : c1.data) v = rng.uniform(-1, 1);
  for (auto& v : c2.data) v = rng.uniform(-1, 1);
  Node a = g.constant(c1);
  Node b = g.constant(c2);
  Node fwd_children[2] = {a, b};
  Node rev_children[2] = {b, a};
  Node fwd = compose_subtree(g, *m, fwd_children, 1);
  Node rev = compose_subtree(g, *m, rev_children, 1);
  for (int i = 0; i < g.value(fwd).size(); ++i) CHECK(g.value(fwd)[i] == g.value(rev)[i]);

  Node single[1] = {a};
  Node dup[2] = {a, a};
  Node one = compose_subtree(g, *m, single, 0);
  Node two = compose_subtree(g, *m, dup, 0);
  for (int i = 0; i < g.value(one).size(); ++i)
    CHECK(g.value(one)[i] == doctest::Approx(g.value(two)[i]).epsilon(1e-12));
}

TEST_CASE("score_joint gradient passes finite differences") {
  auto m = micro_model(61);
  std::vector<std::int32_t> words = {1, 2};
  auto derivations = enumerate_gen_derivations(m->vocab.num_nts(), m->vocab.num_words(),
                                               m->cfg.constraints(), words);
  REQUIRE(!derivations.empty());
  const auto& target = derivations[0];
  auto build = [&](Graph& g) { return decoder_score_node(g, *m, words, target).log_joint; };
  Rng coords(4);
  CHECK(grad_check(m->params, build, 4, coords) < 1e-4);
}
