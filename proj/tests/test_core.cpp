#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kgc/core.hpp"
#include "oracles.hpp"

using namespace kgc;
using kgc::testing::TempDir;
using kgc::testing::write_text;

namespace {

// Rank by direct definition: sort positions by (score desc, index asc).
std::size_t sorted_rank(const std::vector<double>& s, std::size_t idx) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), idx) - order.begin()) + 1;
}

CandidateQuerySet labeled(std::vector<std::vector<EntityId>> lists, std::vector<std::size_t> truth,
                          std::size_t entities = 2000) {
  std::vector<CandidateQuery> qs;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    qs.push_back({0, 0, lists[i], truth[i]});
  }
  Vocab v;
  v.entity_count = entities;
  v.relation_count = 1;
  return CandidateQuerySet(std::move(qs), v);
}

}  // namespace

TEST_CASE("load_triplets infers counts from max ids") {
  TempDir dir;
  write_text(dir / "t.txt", "0 0 1\n1\t1\t2\n");
  const TripletStore s = load_triplets(dir / "t.txt");
  CHECK(s.size() == 2);
  CHECK(s.vocab().entity_count == 3);
  CHECK(s.vocab().relation_count == 2);
  CHECK(s.triples()[1] == Triple{1, 1, 2});
}

TEST_CASE("load_triplets keeps explicit counts for an empty file") {
  TempDir dir;
  write_text(dir / "t.txt", "# nothing here\n");
  LoadOptions opts;
  opts.entity_count = 5;
  opts.relation_count = 2;
  const TripletStore s = load_triplets(dir / "t.txt", opts);
  CHECK(s.empty());
  CHECK(s.vocab().entity_count == 5);
  CHECK(s.vocab().relation_count == 2);
}

TEST_CASE("load_triplets errors") {
  TempDir dir;
  write_text(dir / "short.txt", "0 0\n");
  CHECK_THROWS_WITH_AS(load_triplets(dir / "short.txt"), doctest::Contains("short.txt:1"),
                       DataError);
  write_text(dir / "neg.txt", "0 0 1\n0 -1 2\n");
  CHECK_THROWS_WITH_AS(load_triplets(dir / "neg.txt"), doctest::Contains(":2"), DataError);
  CHECK_THROWS_WITH_AS(load_triplets(dir / "missing.txt"), doctest::Contains("missing.txt"),
                       DataError);
  write_text(dir / "big.txt", "0 0 9\n");
  LoadOptions opts;
  opts.entity_count = 5;
  CHECK_THROWS_AS(load_triplets(dir / "big.txt", opts), DataError);
}

TEST_CASE("duplicate triples are kept") {
  TempDir dir;
  write_text(dir / "t.txt", "0 0 1\n0 0 1\n");
  CHECK(load_triplets(dir / "t.txt").size() == 2);
}

TEST_CASE("triplet save and load round trip") {
  TempDir dir;
  const TripletStore s = kgc::testing::toy_t1();
  save_triplets(s, dir / "t1.txt");
  const TripletStore back = load_triplets(dir / "t1.txt");
  CHECK(back.triples() == s.triples());
}

TEST_CASE("load_queries parses labeled and test-mode rows") {
  TempDir dir;
  write_text(dir / "v.txt", "0 0 3 5 6 7 1\n");
  const CandidateQuerySet v = load_queries(dir / "v.txt");
  REQUIRE(v.size() == 1);
  CHECK(v[0].head == 0);
  CHECK(v[0].relation == 0);
  CHECK(v[0].candidates == std::vector<EntityId>{5, 6, 7});
  CHECK(v[0].true_index == 1u);
  CHECK(v.labeled());
  CHECK(v[0].true_tail() == 6);

  write_text(dir / "t.txt", "0 0 2 5 6\n");
  const CandidateQuerySet t = load_queries(dir / "t.txt");
  CHECK_FALSE(t.labeled());
  CHECK_FALSE(t[0].true_index.has_value());
}

TEST_CASE("load_queries errors") {
  TempDir dir;
  write_text(dir / "a.txt", "0 0 3 5 6 7 3\n");
  CHECK_THROWS_WITH_AS(load_queries(dir / "a.txt"), doctest::Contains("true_index 3 >= C=3"),
                       DataError);
  write_text(dir / "b.txt", "0 0 3 5 6\n");
  CHECK_THROWS_WITH_AS(load_queries(dir / "b.txt"), doctest::Contains("count mismatch"),
                       DataError);
  write_text(dir / "c.txt", "0 0 2 5 6 0\n0 0 2 5 6\n");
  CHECK_THROWS_AS(load_queries(dir / "c.txt"), DataError);
}

TEST_CASE("query save and load round trip") {
  TempDir dir;
  const auto q = labeled({{5, 6, 7}, {1, 1}}, {2, 0});
  save_queries(q, dir / "q.txt");
  const auto back = load_queries(dir / "q.txt");
  REQUIRE(back.size() == 2);
  CHECK(back[0].candidates == q[0].candidates);
  CHECK(back[1].true_index == 0u);
}

TEST_CASE("rank_of_true examples") {
  CHECK(rank_of_true(std::vector<double>{0.9, 0.5, 0.1}, 0) == 1);
  CHECK(rank_of_true(std::vector<double>{0.5, 0.9, 0.1}, 0) == 2);
  CHECK(rank_of_true(std::vector<double>{0.5, 0.5, 0.5}, 2) == 3);
  CHECK_THROWS_AS(rank_of_true(std::vector<double>{0.5}, 1), DataError);
  CHECK_THROWS_AS(rank_of_true(std::vector<double>{NAN, 0.5}, 1), DataError);
}

TEST_CASE("rank_of_true matches a stable-sort oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> s(1 + trial % 17);
    for (double& x : s) x = level(rng) * 0.25;
    const std::size_t idx = static_cast<std::size_t>(trial) % s.size();
    CHECK(rank_of_true(s, idx) == sorted_rank(s, idx));
  }
}

TEST_CASE("rank_of_true under permutation stays within the tie group") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(8);
    for (double& x : s) x = level(rng);
    const std::size_t idx = 3;
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> p(s.size());
    std::size_t new_idx = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      p[i] = s[perm[i]];
      if (perm[i] == idx) new_idx = i;
    }
    const auto ties = static_cast<std::size_t>(std::count(s.begin(), s.end(), s[idx]));
    const auto a = rank_of_true(s, idx), b = rank_of_true(p, new_idx);
    CHECK((a > b ? a - b : b - a) < ties);
  }
}

TEST_CASE("mrr examples") {
  const auto one = labeled({{1, 2, 3}}, {0});
  CHECK(mrr(one, ScoreMatrix{"x", {{3, 2, 1}}}) == 1.0);

  const auto two = labeled({{1, 2, 3, 4}, {1, 2, 3, 4}}, {0, 3});
  CHECK(mrr(two, ScoreMatrix{"x", {{9, 1, 1, 1}, {4, 3, 2, 1}}}) == doctest::Approx(0.625));

  std::vector<EntityId> many(1001);
  std::iota(many.begin(), many.end(), 0);
  const auto big = labeled({many}, {0});
  CHECK(mrr(big, ScoreMatrix{"x", {std::vector<double>(1001, 0.5)}}) == 1.0);
}

TEST_CASE("mrr errors") {
  const auto q = labeled({{1, 2}}, {0});
  CHECK_THROWS_AS(mrr(q, ScoreMatrix{"x", {{1, 2, 3}}}), DataError);
  CHECK_THROWS_AS(mrr(q, ScoreMatrix{"x", {}}), DataError);
  Vocab v;
  v.entity_count = 3;
  v.relation_count = 1;
  const CandidateQuerySet unlabeled({{0, 0, {1, 2}, std::nullopt}}, v);
  CHECK_THROWS_AS(mrr(unlabeled, ScoreMatrix{"x", {{1, 2}}}), DataError);
}

TEST_CASE("mrr is invariant under strictly increasing row transforms and bounded") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<std::vector<EntityId>> lists(20, std::vector<EntityId>(10, 0));
  std::vector<std::size_t> truth(20);
  ScoreMatrix raw, mapped;
  for (std::size_t q = 0; q < 20; ++q) {
    truth[q] = q % 10;
    std::vector<double> row(10), m(10);
    for (std::size_t i = 0; i < 10; ++i) {
      row[i] = std::round(u(rng) * 2) / 2;
      m[i] = std::exp(3 * row[i]) + 7;
    }
    raw.rows.push_back(row);
    mapped.rows.push_back(m);
  }
  const auto qs = labeled(lists, truth);
  CHECK(mrr(qs, raw) == mrr(qs, mapped));
  CHECK(mrr(qs, raw) >= 0.1);
  CHECK(mrr(qs, raw) <= 1.0);
}

TEST_CASE("score matrix file round trip is exact") {
  TempDir dir;
  ScoreMatrix m{"F_HT", {{0.1, 1.0 / 3.0, -2.5e-300}, {1e300, 0.0, 7.0}}};
  write_score_matrix(m, dir / "m.txt");
  const ScoreMatrix back = read_score_matrix(dir / "m.txt");
  CHECK(back.source == "F_HT");
  CHECK(back.rows == m.rows);
  CHECK(kgc::testing::read_text(dir / "m.txt").rfind("2 3 F_HT\n", 0) == 0);

  ScoreMatrix ragged{"r", {{1.0}, {1.0, 2.0}}};
  write_score_matrix(ragged, dir / "r.txt");
  CHECK(read_score_matrix(dir / "r.txt").rows == ragged.rows);
}

TEST_CASE("read_score_matrix rejects bad files") {
  TempDir dir;
  write_text(dir / "a.txt", "2 2 x\n1 2\n");
  CHECK_THROWS_AS(read_score_matrix(dir / "a.txt"), DataError);
  write_text(dir / "b.txt", "1 2 x\n1 nan\n");
  CHECK_THROWS_AS(read_score_matrix(dir / "b.txt"), DataError);
  write_text(dir / "c.txt", "1 2 x\n1 2 3\n");
  CHECK_THROWS_AS(read_score_matrix(dir / "c.txt"), DataError);
}
