// Copyright 2026 the drselect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "drselect/retrieval.hpp"
#include "oracles.hpp"

namespace ds = drselect;

namespace {

ds::EmbeddingMatrix docs_of(std::vector<std::string> ids, std::vector<float> rows, std::size_t dim = 2) {
  return {"m", ds::Role::target_docs, dim, std::move(ids), std::move(rows)};
}

std::vector<float> vec(std::initializer_list<float> v) { return v; }

}  // namespace

TEST(Similarity, HandExamples) {
  EXPECT_EQ(ds::similarity(vec({1, 0}), vec({1, 0}), ds::SimilarityKind::cosine), 1.0);
  EXPECT_EQ(ds::similarity(vec({1, 0}), vec({0, 1}), ds::SimilarityKind::dot), 0.0);
  EXPECT_EQ(ds::similarity(vec({1, 2}), vec({3, 4}), ds::SimilarityKind::dot), 11.0);
}

TEST(Similarity, Errors) {
  EXPECT_THROW(ds::similarity(vec({1, 0}), vec({1, 0, 0}), ds::SimilarityKind::dot), ds::Error);
  try {
    ds::similarity(vec({0, 0}), vec({1, 0}), ds::SimilarityKind::cosine);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::numeric);
  }
}

TEST(TopK, HandExamples) {
  const auto d = docs_of({"d1", "d2"}, {1, 0, 0, 1});
  const auto one = ds::top_k(vec({1, 0}), d, ds::SimilarityKind::dot, 1);
  ASSERT_EQ(one.items.size(), 1u);
  EXPECT_EQ(one.items[0], (ds::ScoredDoc{"d1", 1.0}));
  EXPECT_EQ(ds::top_k(vec({1, 0}), d, ds::SimilarityKind::dot, 5).items.size(), 2u);

  const auto scaled = docs_of({"b", "a"}, {2, 0, 1, 0});
  const auto cos = ds::top_k(vec({1, 0}), scaled, ds::SimilarityKind::cosine, 2);
  ASSERT_EQ(cos.items.size(), 2u);
  EXPECT_EQ(cos.items[0], (ds::ScoredDoc{"a", 1.0}));
  EXPECT_EQ(cos.items[1], (ds::ScoredDoc{"b", 1.0}));
}

TEST(TopK, RejectsZeroKAndDimMismatch) {
  const auto d = docs_of({"d1"}, {1, 0});
  EXPECT_THROW(ds::top_k(vec({1, 0}), d, ds::SimilarityKind::dot, 0), ds::Error);
  EXPECT_THROW(ds::top_k(vec({1, 0, 0}), d, ds::SimilarityKind::dot, 1), ds::Error);
}

TEST(TopK, MatchesFullSortOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 1 + rng() % 1000;
    const std::size_t dim = 1 + rng() % 64;
    const std::size_t k = 1 + rng() % (n + 5);
    const auto kind = seed % 2 == 0 ? ds::SimilarityKind::dot : ds::SimilarityKind::cosine;
    const auto docs = oracle::random_matrix(rng, n, dim);
    const auto q = oracle::random_matrix(rng, 1, dim, "q");
    const auto got = ds::top_k(q.row(0), docs, kind, k);
    const auto want = oracle::full_sort_top_k(q.row(0), docs, kind, k);
    ASSERT_EQ(got.items, want.items) << "seed " << seed;
  }
}

TEST(TopK, DuplicateVectorsTieBreakById) {
  const auto d = docs_of({"z", "m", "a"}, {1, 1, 1, 1, 1, 1});
  const auto r = ds::top_k(vec({1, 2}), d, ds::SimilarityKind::dot, 3);
  EXPECT_EQ(r.items[0].doc_id, "a");
  EXPECT_EQ(r.items[1].doc_id, "m");
  EXPECT_EQ(r.items[2].doc_id, "z");
}

TEST(TopK, CorpusPermutationInvariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto docs = oracle::random_matrix(rng, 200, 8);
    const auto q = oracle::random_matrix(rng, 1, 8, "q");
    std::vector<std::size_t> perm(docs.count());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    ds::EmbeddingMatrix shuffled{"m", ds::Role::target_docs, 8, {}, {}};
    for (auto i : perm) {
      shuffled.ids.push_back(docs.ids[i]);
      const auto r = docs.row(i);
      shuffled.rows.insert(shuffled.rows.end(), r.begin(), r.end());
    }
    for (auto kind : {ds::SimilarityKind::dot, ds::SimilarityKind::cosine}) {
      EXPECT_EQ(ds::top_k(q.row(0), docs, kind, 25).items, ds::top_k(q.row(0), shuffled, kind, 25).items);
    }
  }
}

TEST(TopK, CosineScaleInvariance) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto docs = oracle::random_matrix(rng, 100, 6);
    const auto q = oracle::random_matrix(rng, 1, 6, "q");
    const auto before = ds::top_k(q.row(0), docs, ds::SimilarityKind::cosine, 100);
    // Power-of-two scaling keeps every product exact, so scores match bitwise.
    const std::size_t row = rng() % docs.count();
    for (std::size_t j = 0; j < docs.dim; ++j) docs.rows[row * docs.dim + j] *= 4.0f;
    const auto after = ds::top_k(q.row(0), docs, ds::SimilarityKind::cosine, 100);
    EXPECT_EQ(before.items, after.items);
  }
}

TEST(TopK, CosineOrderStableUnderArbitraryScale) {
  std::mt19937_64 rng(13);
  auto docs = oracle::random_matrix(rng, 100, 6);
  const auto q = oracle::random_matrix(rng, 1, 6, "q");
  const auto before = ds::top_k(q.row(0), docs, ds::SimilarityKind::cosine, 100);
  for (std::size_t j = 0; j < docs.dim; ++j) docs.rows[7 * docs.dim + j] *= 3.7f;
  const auto after = ds::top_k(q.row(0), docs, ds::SimilarityKind::cosine, 100);
  ASSERT_EQ(before.items.size(), after.items.size());
  for (std::size_t i = 0; i < before.items.size(); ++i) {
    EXPECT_EQ(before.items[i].doc_id, after.items[i].doc_id);
    EXPECT_NEAR(before.items[i].score, after.items[i].score, 1e-6);
  }
}

TEST(RetrieveAll, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(14);
  const auto docs = oracle::random_matrix(rng, 300, 10);
  const auto qs = oracle::random_matrix(rng, 17, 10, "q");
  const auto a = ds::retrieve_all(qs, docs, ds::SimilarityKind::dot, 20, 1);
  const auto b = ds::retrieve_all(qs, docs, ds::SimilarityKind::dot, 20, 4);
  ASSERT_EQ(a.size(), 17u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].query_id, qs.ids[i]);
    EXPECT_EQ(a[i].items, b[i].items);
  }
}

namespace {

std::vector<std::string> corpus(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
  return ids;
}

ds::RankedList first_ten() {
  ds::RankedList top{"q", {}, ds::SimilarityKind::dot};
  for (int i = 0; i < 10; ++i) top.items.push_back({"d" + std::to_string(i * 3), 10.0 - i});
  return top;
}

double constant_score(const std::string&) { return 0.0; }

}  // namespace

TEST(Negatives, DisjointAndDeterministic) {
  const auto ids = corpus(200);
  const auto top = first_ten();
  const auto a = ds::sample_negatives("q", top, ids, 100, 7, constant_score);
  const auto b = ds::sample_negatives("q", top, ids, 100, 7, constant_score);
  ASSERT_EQ(a.doc_ids.size(), 100u);
  EXPECT_EQ(a.doc_ids, b.doc_ids);
  std::set<std::string> unique(a.doc_ids.begin(), a.doc_ids.end());
  EXPECT_EQ(unique.size(), 100u);
  for (const auto& it : top.items) EXPECT_FALSE(unique.contains(it.doc_id));

  const auto other_seed = ds::sample_negatives("q", top, ids, 100, 8, constant_score);
  EXPECT_NE(a.doc_ids, other_seed.doc_ids);
}

TEST(Negatives, RemainderWhenCorpusIsSmall) {
  const auto ids = corpus(50);
  const auto top = first_ten();
  const auto s = ds::sample_negatives("q", top, ids, 100, 1, constant_score);
  EXPECT_EQ(s.doc_ids.size(), 40u);
  std::set<std::string> got(s.doc_ids.begin(), s.doc_ids.end());
  std::set<std::string> want(ids.begin(), ids.end());
  for (const auto& it : top.items) want.erase(it.doc_id);
  EXPECT_EQ(got, want);
}

TEST(Negatives, MinScoreAndExhaustedCorpus) {
  const std::vector<std::string> ids{"a", "b", "c"};
  const std::map<std::string, double> scores{{"a", 0.5}, {"b", 0.2}, {"c", 0.4}};
  const ds::RankedList empty_top{"q", {}, ds::SimilarityKind::dot};
  const auto s = ds::sample_negatives("q", empty_top, ids, 3, 1, [&](const std::string& id) { return scores.at(id); });
  EXPECT_EQ(s.min_score, 0.2);

  const ds::RankedList all{"q", {{"a", 1}, {"b", 1}, {"c", 1}}, ds::SimilarityKind::dot};
  EXPECT_THROW(ds::sample_negatives("q", all, ids, 3, 1, constant_score), ds::Error);
}

TEST(Negatives, IndependentOfOtherQueries) {
  const auto ids = corpus(500);
  const auto top = first_ten();
  const auto direct = ds::sample_negatives("q7", top, ids, 50, 3, constant_score);
  ds::sample_negatives("q1", top, ids, 50, 3, constant_score);
  const auto again = ds::sample_negatives("q7", top, ids, 50, 3, constant_score);
  EXPECT_EQ(direct.doc_ids, again.doc_ids);
  EXPECT_NE(direct.doc_ids, ds::sample_negatives("q8", top, ids, 50, 3, constant_score).doc_ids);
}
