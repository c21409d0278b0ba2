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

#include <gtest/gtest.h>

#include "drselect/metaeval.hpp"
#include "oracles.hpp"
#include "reference.hpp"

namespace ds = drselect;

namespace {

ds::ModelRanking ranking(const std::vector<std::string>& ids) {
  ds::ModelRanking r;
  for (std::size_t i = 0; i < ids.size(); ++i) r.entries.emplace_back(ids[i], -static_cast<double>(i));
  return r;
}

/// Ids ordered by 1-based rank, where ranks[i] belongs to model i.
std::vector<std::string> by_rank(const std::vector<int>& ranks) {
  std::vector<std::string> ids(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) ids[ranks[i] - 1] = "m" + std::to_string(i);
  return ids;
}

}  // namespace

TEST(KendallTau, HandExample) {
  const auto indomain = by_rank({4, 2, 3, 1, 7, 5, 6, 8, 10, 9, 11});
  const auto covid = by_rank({5, 1, 7, 6, 2, 9, 3, 10, 4, 8, 11});
  EXPECT_NEAR(ds::kendall_tau(ranking(indomain), ranking(covid)), 15.0 / 55.0, 1e-12);
}

TEST(KendallTau, IdentityReverseAndAntisymmetry) {
  const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  auto rev = ids;
  std::reverse(rev.begin(), rev.end());
  EXPECT_EQ(ds::kendall_tau(ranking(ids), ranking(ids)), 1.0);
  EXPECT_EQ(ds::kendall_tau(ranking(ids), ranking(rev)), -1.0);
  const std::vector<std::string> mixed{"c", "a", "e", "b", "d"};
  auto mixed_rev = mixed;
  std::reverse(mixed_rev.begin(), mixed_rev.end());
  EXPECT_DOUBLE_EQ(ds::kendall_tau(ranking(mixed_rev), ranking(ids)), -ds::kendall_tau(ranking(mixed), ranking(ids)));
  EXPECT_DOUBLE_EQ(ds::kendall_tau(ranking(ids), ranking(mixed_rev)), -ds::kendall_tau(ranking(ids), ranking(mixed)));
}

TEST(KendallTau, MatchesPairEnumerationForAllSmallPermutations) {
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<std::string> truth;
    for (std::size_t i = 0; i < n; ++i) truth.push_back("m" + std::to_string(i));
    auto perm = truth;
    do {
      EXPECT_DOUBLE_EQ(ds::kendall_tau(ranking(perm), ranking(truth)), oracle::kendall_pairs(perm, truth));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(KendallTau, Errors) {
  EXPECT_THROW(ds::kendall_tau(ranking({"a"}), ranking({"a"})), ds::Error);
  EXPECT_THROW(ds::kendall_tau(ranking({"a", "b"}), ranking({"a", "c"})), ds::Error);
  EXPECT_THROW(ds::kendall_tau(ranking({"a", "b"}), ranking({"a", "b", "c"})), ds::Error);
}

TEST(Regret, ReferenceExamples) {
  const auto ref = fixture::load_reference();
  EXPECT_NEAR(ds::delta_e("simlm", ref.eff, "trec-covid", ref.registry()), 0.225, 1e-12);
  EXPECT_EQ(ds::delta_e("simlm", ref.eff, "nq", ref.registry()), 0.0);
  EXPECT_EQ(ds::delta_e("cocondenser", ref.eff, "trec-covid", ref.registry()), 0.0);
  EXPECT_NEAR(ds::percent_delta_e("simlm", ref.eff, "trec-covid", ref.registry()), 100.0 * 0.225 / 0.752, 1e-9);
  EXPECT_EQ(ds::percent_delta_e("simlm", ref.eff, "nq", ref.registry()), 0.0);
}

TEST(Regret, NonnegativeAndZeroExactlyAtTheBest) {
  const auto ref = fixture::load_reference();
  for (const auto& d : ref.targets()) {
    const double best = ds::best_effectiveness(ref.eff, d, ref.registry());
    for (const auto& m : ref.registry().models) {
      const double de = ds::delta_e(m.id, ref.eff, d, ref.registry());
      const double pct = ds::percent_delta_e(m.id, ref.eff, d, ref.registry());
      EXPECT_GE(de, 0.0);
      EXPECT_EQ(de == 0.0, ref.eff.at(m.id, d) == best);
      EXPECT_EQ(pct == 0.0, de == 0.0);
    }
  }
}

TEST(Regret, ZeroBestIsNumericError) {
  ds::ModelRegistry reg;
  reg.models.push_back({"a", ds::SimilarityKind::dot, "a"});
  ds::EffectivenessTable eff;
  eff.set("a", "d", 0.0);
  try {
    ds::percent_delta_e("a", eff, "d", reg);
    FAIL();
  } catch (const ds::Error& e) {
    EXPECT_EQ(e.kind(), ds::ErrorKind::numeric);
  }
}

TEST(EvaluateMethod, IndomainOnReference) {
  const auto ref = fixture::load_reference();
  const auto targets = ref.targets();
  std::vector<ds::MethodScoreTable> tables;
  for (const auto& d : targets) tables.push_back(ds::select_indomain(ref.eff, "msmarco", ref.registry(), d));
  const auto ev = ds::evaluate_method(tables, ref.eff, ref.registry(), targets);
  ASSERT_EQ(ev.rows.size(), 10u);
  EXPECT_EQ(ev.method, "indomain");
  EXPECT_EQ(ev.average.dataset, "Avrg");
  EXPECT_NEAR(ev.rows[0].tau, 15.0 / 55.0, 1e-12);
  EXPECT_NEAR(ev.average.delta_e, 0.068, 0.002);
  EXPECT_NEAR(ev.average.tau, 0.524, 0.02);
  double sum = 0.0;
  for (const auto& r : ev.rows) sum += r.delta_e;
  EXPECT_DOUBLE_EQ(ev.average.delta_e, sum / 10.0);
}

TEST(EvaluateMethod, PerfectPredictorScoresOne) {
  const auto ref = fixture::load_reference();
  const auto targets = ref.targets();
  std::vector<ds::MethodScoreTable> tables;
  for (const auto& d : targets) {
    ds::MethodScoreTable t;
    t.method = ds::Method::qsim;
    t.dataset = d;
    for (const auto& m : ref.registry().models) t.scores[m.id] = ref.eff.at(m.id, d);
    tables.push_back(t);
  }
  const auto ev = ds::evaluate_method(tables, ref.eff, ref.registry(), targets);
  for (const auto& r : ev.rows) {
    EXPECT_EQ(r.tau, 1.0);
    EXPECT_EQ(r.delta_e, 0.0);
    EXPECT_EQ(r.pct_delta_e, 0.0);
  }
}

TEST(Reports, CsvAndMarkdownShape) {
  const auto ref = fixture::load_reference();
  const auto targets = ref.targets();
  std::vector<ds::MethodScoreTable> tables;
  for (const auto& d : targets) tables.push_back(ds::select_indomain(ref.eff, "msmarco", ref.registry(), d));
  const std::vector<ds::MethodEvaluation> evs{ds::evaluate_method(tables, ref.eff, ref.registry(), targets)};
  const auto csv = ds::format_evaluation_csv(evs, "# p\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 1 + 11);
  EXPECT_NE(csv.find("indomain,trec-covid,"), std::string::npos);
  const auto md = ds::format_markdown_report(evs);
  EXPECT_NE(md.find("| indomain | 0.273 |"), std::string::npos);
  EXPECT_NE(md.find("| indomain | 0.225 |"), std::string::npos);
  EXPECT_NE(md.find("| indomain | 29.92 |"), std::string::npos);
}
