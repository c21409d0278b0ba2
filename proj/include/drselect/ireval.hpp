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

#pragma once

// Ground-truth effectiveness (nDCG@k with linear gain) and the true model
// ranking it induces.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "drselect/corpusio.hpp"
#include "drselect/error.hpp"
#include "drselect/selectors.hpp"

namespace drselect {

struct MetricKind {
  std::size_t k = 10;

  std::string name() const { return "ndcg@" + std::to_string(k); }

  static MetricKind parse(std::string_view s) {
    constexpr std::string_view prefix = "ndcg@";
    if (s.substr(0, prefix.size()) != prefix) throw config_error("unsupported metric '" + std::string(s) + "'");
    const auto k = detail::parse_int(s.substr(prefix.size()));
    if (!k || *k < 1) throw config_error("metric cutoff must be a positive integer in '" + std::string(s) + "'");
    return MetricKind{static_cast<std::size_t>(*k)};
  }
};

/// Ideal DCG@k from the query's judged grades; 0 when nothing is relevant.
inline double ideal_dcg(const std::map<std::string, int>& judged, std::size_t k) {
  std::vector<int> grades;
  grades.reserve(judged.size());
  for (const auto& [doc, g] : judged) {
    if (g > 0) grades.push_back(g);
  }
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) idcg += grades[i] / std::log2(static_cast<double>(i) + 2.0);
  return idcg;
}

/// nDCG@k of one ranked list. Throws when the query has no relevant judgments,
/// since it then has no defined value.
inline double ndcg_at_k(const RankedList& run, const Qrels& qrels, std::size_t k = 10) {
  if (k == 0) throw data_error("nDCG cutoff must be positive");
  const auto* judged = qrels.for_query(run.query_id);
  const double idcg = judged ? ideal_dcg(*judged, k) : 0.0;
  if (idcg == 0.0) throw data_error("query '" + run.query_id + "' has no relevant judgments");
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, run.items.size()); ++i) {
    auto it = judged->find(run.items[i].doc_id);
    if (it != judged->end() && it->second > 0) dcg += it->second / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg == 0.0 ? 0.0 : dcg / idcg;
}

struct NdcgSummary {
  double mean = 0.0;
  std::size_t evaluated = 0;
  std::vector<std::string> skipped;  // run queries without relevant judgments
};

/// Mean nDCG@k over judged queries. Judged queries absent from the run count
/// as 0; run queries without relevant judgments are skipped and listed.
inline NdcgSummary mean_ndcg(std::span<const RankedList> runs, const Qrels& qrels, std::size_t k = 10) {
  NdcgSummary out;
  std::map<std::string, const RankedList*> by_query;
  for (const auto& r : runs) by_query.emplace(r.query_id, &r);
  double sum = 0.0;
  for (const auto& [qid, judged] : qrels.entries) {
    if (ideal_dcg(judged, k) == 0.0) continue;
    auto it = by_query.find(qid);
    if (it != by_query.end()) sum += ndcg_at_k(*it->second, qrels, k);
    ++out.evaluated;
  }
  for (const auto& [qid, run] : by_query) {
    const auto* judged = qrels.for_query(qid);
    if (judged == nullptr || ideal_dcg(*judged, k) == 0.0) out.skipped.push_back(qid);
  }
  if (out.evaluated > 0) out.mean = sum / static_cast<double>(out.evaluated);
  return out;
}

inline ModelRanking truth_ranking(const EffectivenessTable& effectiveness, const std::string& dataset,
                                  const ModelRegistry& registry) {
  std::map<std::string, double> values;
  for (const auto& m : registry.models) values[m.id] = effectiveness.at(m.id, dataset);
  return rank_by_goodness(values, registry, dataset, "truth");
}

}  // namespace drselect
