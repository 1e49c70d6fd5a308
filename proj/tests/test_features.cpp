#include <doctest.h>

#include <random>

#include "kgc/features.hpp"
#include "oracles.hpp"

using namespace kgc;
using kgc::testing::BruteForceFeatures;

namespace {

constexpr EntityId A = 0, B = 1, C = 2;
constexpr RelationId r1 = 0, r2 = 1;

DirectionalIndex t1_index() {
  return DirectionalIndex::build(kgc::testing::toy_t1(), nullptr, {});
}

Vocab vocab(std::size_t entities, std::size_t relations) {
  Vocab v;
  v.entity_count = entities;
  v.relation_count = relations;
  return v;
}

std::size_t source_size(const DirectionalIndex& index, Direction d) {
  return source_kind(d) == SlotKind::Entity ? index.entity_count() : index.relation_count();
}

std::size_t target_size(const DirectionalIndex& index, Direction d) {
  return target_kind(d) == SlotKind::Entity ? index.entity_count() : index.relation_count();
}

}  // namespace

TEST_CASE("direction metadata") {
  CHECK(source_kind(Direction::HR) == SlotKind::Entity);
  CHECK(target_kind(Direction::HR) == SlotKind::Relation);
  CHECK(source_kind(Direction::RT) == SlotKind::Relation);
  for (Direction d : kAllDirections) CHECK(transpose(transpose(d)) == d);
  CHECK(transpose(Direction::HT) == Direction::TH);
  CHECK(transpose(Direction::TR) == Direction::RT);
  for (FeatureKind k : kAllFeatureKinds) CHECK(parse_feature_kind(to_string(k)) == k);
  CHECK_FALSE(parse_feature_kind("F_XX").has_value());
}

TEST_CASE("toy counts") {
  const auto index = t1_index();
  CHECK(index.count(Direction::HT, A, B) == 2);
  CHECK(index.count(Direction::HT, A, C) == 1);
  CHECK(index.row_sum(Direction::HT, A) == 3);
  CHECK(index.count(Direction::RT, r1, B) == 2);
  CHECK(index.count(Direction::RT, r1, C) == 1);
  CHECK(index.prob(Direction::HT, A, B) == doctest::Approx(2.0 / 3.0));
  CHECK(prob(index, Direction::HT, A, B) == index.prob(Direction::HT, A, B));
  // A is never a tail, so its TH row is empty.
  CHECK(index.row_sum(Direction::TH, A) == 0);
  CHECK(index.prob(Direction::TH, A, B) == 0.0);
}

TEST_CASE("toy features") {
  const auto index = t1_index();
  CHECK(feature_head_tail(index, FeatureKind::F_HT, A, B) == doctest::Approx(2.0 / 3.0));
  CHECK(feature_head_tail(index, FeatureKind::F_HT_HT, A, C) == doctest::Approx(2.0 / 3.0));
  CHECK(feature_relation_tail(index, FeatureKind::F_RT, r1, B) == doctest::Approx(2.0 / 3.0));
  // Tails of r2 are B and C, each 1/2; TR rows: C -> {r1 1/2, r2 1/2},
  // B -> {r1 2/3, r2 1/3}; P_RT(r1, C) = 1/3, P_RT(r2, C) = 1/2.
  const double hand = 0.5 * (0.5 / 3 + 0.25) + 0.5 * (2.0 / 9 + 1.0 / 6);
  CHECK(hand == doctest::Approx(29.0 / 72.0));
  const BruteForceFeatures brute(kgc::testing::toy_t1().triples(), 3, 2);
  CHECK(brute.relation_tail(FeatureKind::F_RT_TR_RT, r2, C) == doctest::Approx(hand));
  CHECK(feature_relation_tail(index, FeatureKind::F_RT_TR_RT, r2, C) == doctest::Approx(hand));
}

TEST_CASE("empty supports give zero features") {
  // Entity 3 never heads a triple, relation 2 is never used.
  const TripletStore store({{0, 0, 1}, {1, 1, 2}}, vocab(4, 3));
  const auto index = DirectionalIndex::build(store, nullptr, {});
  for (FeatureKind k : kAllFeatureKinds) {
    if (is_head_tail(k)) CHECK(feature_head_tail(index, k, 3, 1) == 0.0);
    if (is_relation_tail(k)) CHECK(feature_relation_tail(index, k, 2, 1) == 0.0);
  }
}

TEST_CASE("candidate pseudo-triples keep multiplicity") {
  const TripletStore empty({}, vocab(3, 1));
  const CandidateQuerySet q({{0, 0, {1, 1}, 0}}, vocab(3, 1));
  FeatureSource src;
  src.include_training = false;
  src.include_candidates = true;
  const auto index = DirectionalIndex::build(empty, &q, src);
  CHECK(index.count(Direction::HT, 0, 1) == 2);
  CHECK(index.count(Direction::RT, 0, 1) == 2);

  src.include_training = true;
  const TripletStore one({{0, 0, 2}}, vocab(3, 1));
  const auto both = DirectionalIndex::build(one, &q, src);
  CHECK(both.row_sum(Direction::HT, 0) == 3);
}

TEST_CASE("index build errors") {
  const auto t1 = kgc::testing::toy_t1();
  FeatureSource none;
  none.include_training = false;
  CHECK_THROWS_AS(DirectionalIndex::build(t1, nullptr, none), UsageError);
  FeatureSource cands;
  cands.include_candidates = true;
  CHECK_THROWS_AS(DirectionalIndex::build(t1, nullptr, cands), UsageError);
  const CandidateQuerySet far({{0, 0, {7}, 0}}, vocab(8, 1));
  // Candidate vocabularies wider than the store widen the index instead.
  const auto wide = DirectionalIndex::build(t1, &far, cands);
  CHECK(wide.entity_count() == 8);
  CHECK(wide.count(Direction::HT, 0, 7) == 1);
  CHECK_THROWS_AS(wide.row(Direction::HT, 8), DataError);
  CHECK_THROWS_AS(feature_head_tail(t1_index(), FeatureKind::F_RT, A, B), UsageError);
  CHECK_THROWS_AS(feature_relation_tail(t1_index(), FeatureKind::F_HT, r1, B), UsageError);
}

TEST_CASE("transpose identities and row sums") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto kg = kgc::testing::random_kg(seed, 200, 30, 5);
    FeatureSource src;
    src.include_candidates = seed % 2 == 1;
    const auto index = DirectionalIndex::build(kg.store, &kg.queries, src);
    for (Direction d : kAllDirections) {
      for (std::uint32_t a = 0; a < source_size(index, d); ++a) {
        std::uint64_t total = 0;
        double p = 0.0;
        for (const auto& e : index.row(d, a)) {
          total += e.count;
          p += index.prob(d, a, e.target);
          CHECK(index.count(transpose(d), e.target, a) == e.count);
        }
        CHECK(total == index.row_sum(d, a));
        if (total == 0) {
          CHECK(p == 0.0);
        } else {
          CHECK(std::abs(p - 1.0) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("indexed features match brute-force enumeration") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto kg = kgc::testing::random_kg(1000 + seed, 200, 30, 5);
    const auto index = DirectionalIndex::build(kg.store, nullptr, {});
    const BruteForceFeatures brute(kg.store.triples(), kg.store.vocab().entity_count,
                                   kg.store.vocab().relation_count);
    for (Direction d : kAllDirections) {
      for (std::uint32_t a = 0; a < source_size(index, d); ++a) {
        for (std::uint32_t b = 0; b < target_size(index, d); ++b) {
          CHECK(std::abs(index.prob(d, a, b) - brute.prob(d, a, b)) <= 1e-12);
        }
      }
    }
    const std::vector<FeatureKind> kinds(kAllFeatureKinds.begin(), kAllFeatureKinds.end());
    const auto mats = compute_feature_matrix(index, kg.queries, kinds);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      CHECK(mats[k].source == to_string(kinds[k]));
      for (std::size_t qi = 0; qi < kg.queries.size(); ++qi) {
        const auto& q = kg.queries[qi];
        for (std::size_t c = 0; c < q.candidates.size(); ++c) {
          const EntityId t = q.candidates[c];
          double want = 0.0;
          if (kinds[k] == FeatureKind::CAND_FREQ) {
            for (const auto& other : kg.queries.queries()) {
              want += static_cast<double>(std::count(other.candidates.begin(),
                                                     other.candidates.end(), t));
            }
          } else if (is_head_tail(kinds[k])) {
            want = brute.head_tail(kinds[k], q.head, t);
          } else {
            want = brute.relation_tail(kinds[k], q.relation, t);
          }
          const double got = mats[k].rows[qi][c];
          CHECK(std::abs(got - want) <= 1e-12);
          if (kinds[k] != FeatureKind::CAND_FREQ) {
            CHECK(got >= 0.0);
            CHECK(got <= 1.0 + 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("feature matrix is thread count independent") {
  const auto kg = kgc::testing::random_kg(77, 200, 30, 5);
  const auto index = DirectionalIndex::build(kg.store, nullptr, {});
  const std::vector<FeatureKind> kinds(kAllFeatureKinds.begin(), kAllFeatureKinds.end());
  const auto serial = compute_feature_matrix(index, kg.queries, kinds, {}, 1);
  const auto parallel = compute_feature_matrix(index, kg.queries, kinds, {}, 3);
  for (std::size_t k = 0; k < kinds.size(); ++k) CHECK(serial[k].rows == parallel[k].rows);
  CHECK_THROWS_AS(compute_feature_matrix(index, kg.queries, {}), UsageError);
}

TEST_CASE("first-hop support cap") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto kg = kgc::testing::random_kg(500 + seed, 200, 15, 3);
    const auto index = DirectionalIndex::build(kg.store, nullptr, {});
    FeatureOptions wide, narrow;
    wide.max_row_support = 1000;
    narrow.max_row_support = 1;
    for (const auto& q : kg.queries.queries()) {
      for (EntityId t : q.candidates) {
        for (FeatureKind k : {FeatureKind::F_HT_HT, FeatureKind::F_HT_HT_TH}) {
          const double full = feature_head_tail(index, k, q.head, t);
          CHECK(feature_head_tail(index, k, q.head, t, wide) == full);
          CHECK(feature_head_tail(index, k, q.head, t, narrow) <= full + 1e-15);
        }
        CHECK(feature_relation_tail(index, FeatureKind::F_RT_TR_RT, q.relation, t, narrow) <=
              feature_relation_tail(index, FeatureKind::F_RT_TR_RT, q.relation, t) + 1e-15);
      }
    }
  }
}

TEST_CASE("unrelated triples leave the direct count alone") {
  const auto kg = kgc::testing::random_kg(9, 100, 20, 3);
  const auto before = DirectionalIndex::build(kg.store, nullptr, {});
  auto triples = kg.store.triples();
  triples.push_back({0, 0, 1});
  const auto after = DirectionalIndex::build(TripletStore(triples, kg.store.vocab()), nullptr, {});
  for (std::uint32_t h = 1; h < kg.store.vocab().entity_count; ++h) {
    for (std::uint32_t t = 0; t < kg.store.vocab().entity_count; ++t) {
      CHECK(after.count(Direction::HT, h, t) == before.count(Direction::HT, h, t));
      if (h != 1) CHECK(after.prob(Direction::HT, h, t) == before.prob(Direction::HT, h, t));
    }
  }
}

TEST_CASE("candidate frequency") {
  const CandidateQuerySet q({{0, 0, {5, 6}, 0}, {1, 0, {5, 7}, 1}}, vocab(8, 1));
  const auto freq = candidate_frequency(q);
  CHECK(freq == CandidateFrequency{{5, 2}, {6, 1}, {7, 1}});
  CHECK(frequency_of(freq, 3) == 0);
  CHECK(candidate_frequency(CandidateQuerySet({}, vocab(1, 1))).empty());

  const FeatureKind kind = FeatureKind::CAND_FREQ;
  const auto m = compute_feature_matrix(t1_index(),
                                        CandidateQuerySet({{0, 0, {1, 2}, 0}, {2, 1, {1, 1}, 0}},
                                                          vocab(3, 2)),
                                        std::span(&kind, 1));
  CHECK(m[0].rows == std::vector<std::vector<double>>{{3, 1}, {3, 3}});

  kgc::testing::TempDir dir;
  write_candidate_frequency(freq, dir / "f.txt");
  CHECK(read_candidate_frequency(dir / "f.txt") == freq);
  kgc::testing::write_text(dir / "bad.txt", "5\n");
  CHECK_THROWS_AS(read_candidate_frequency(dir / "bad.txt"), DataError);
}

TEST_CASE("F_HT matrix composes prob") {
  const auto index = t1_index();
  const CandidateQuerySet q({{A, r1, {A, B, C}, 1}, {B, r2, {C, A}, 0}}, vocab(3, 2));
  const FeatureKind kind = FeatureKind::F_HT;
  const auto m = compute_feature_matrix(index, q, std::span(&kind, 1));
  for (std::size_t i = 0; i < q.size(); ++i) {
    for (std::size_t c = 0; c < q[i].candidates.size(); ++c) {
      CHECK(m[0].rows[i][c] == index.prob(Direction::HT, q[i].head, q[i].candidates[c]));
    }
  }
}
