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

// Scores selection methods against the ground truth: Kendall tau between the
// predicted and true model rankings, and the effectiveness regret (absolute
// and relative) of deploying the predicted best model.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "drselect/corpusio.hpp"
#include "drselect/detail/text.hpp"
#include "drselect/error.hpp"
#include "drselect/ireval.hpp"
#include "drselect/selectors.hpp"

namespace drselect {

/// Tau over strict total orders: (concordant - discordant) / (n(n-1)/2).
inline double kendall_tau(const ModelRanking& predicted, const ModelRanking& truth) {
  const auto a = predicted.ids();
  const auto b = truth.ids();
  if (a.size() != b.size()) throw data_error("rankings cover different numbers of models");
  std::map<std::string, std::size_t> pos_b;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!pos_b.emplace(b[i], i).second) throw data_error("model '" + b[i] + "' appears twice in a ranking");
  }
  std::vector<std::size_t> mapped;
  mapped.reserve(a.size());
  for (const auto& id : a) {
    auto it = pos_b.find(id);
    if (it == pos_b.end()) throw data_error("model '" + id + "' missing from the truth ranking");
    mapped.push_back(it->second);
  }
  const std::size_t n = mapped.size();
  if (n < 2) throw data_error("Kendall tau needs at least two models");
  long long concordant = 0;
  long long discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (mapped[i] < mapped[j]) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  return static_cast<double>(concordant - discordant) / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

inline double best_effectiveness(const EffectivenessTable& eff, const std::string& dataset,
                                 const ModelRegistry& registry) {
  double best = -1.0;
  for (const auto& m : registry.models) best = std::max(best, eff.at(m.id, dataset));
  return best;
}

/// Regret e(M) - e(predicted), where M is the truly best model. Never negative.
inline double delta_e(const std::string& predicted_best, const EffectivenessTable& eff, const std::string& dataset,
                      const ModelRegistry& registry) {
  return best_effectiveness(eff, dataset, registry) - eff.at(predicted_best, dataset);
}

inline double percent_delta_e(const std::string& predicted_best, const EffectivenessTable& eff,
                              const std::string& dataset, const ModelRegistry& registry) {
  const double best = best_effectiveness(eff, dataset, registry);
  if (best <= 0.0) throw numeric_error("relative regret undefined: best effectiveness on '" + dataset + "' is 0");
  return 100.0 * (best - eff.at(predicted_best, dataset)) / best;
}

struct EvaluationRow {
  std::string method;
  std::string dataset;
  double tau = 0.0;
  double delta_e = 0.0;
  double pct_delta_e = 0.0;
  std::string predicted_best;
  std::string true_best;
};

struct MethodEvaluation {
  std::string method;
  std::vector<EvaluationRow> rows;
  EvaluationRow average;  // dataset "Avrg"; best-model fields empty
};

/// One row per dataset (in the order given) plus the per-measure average.
/// `tables` must hold exactly one table per dataset, all for the same label.
inline MethodEvaluation evaluate_method(std::span<const MethodScoreTable> tables, const EffectivenessTable& truth,
                                        const ModelRegistry& registry, std::span<const std::string> datasets) {
  if (tables.empty() || datasets.empty()) throw data_error("nothing to evaluate");
  MethodEvaluation out;
  out.method = tables.front().label();
  out.average.method = out.method;
  out.average.dataset = "Avrg";
  for (const auto& dataset : datasets) {
    const MethodScoreTable* table = nullptr;
    for (const auto& t : tables) {
      if (t.label() != out.method) throw data_error("mixed method tables passed to evaluate_method");
      if (t.dataset == dataset) {
        if (table != nullptr) throw data_error("two " + out.method + " tables for dataset '" + dataset + "'");
        table = &t;
      }
    }
    if (table == nullptr) throw data_error("no " + out.method + " scores for dataset '" + dataset + "'");
    const auto predicted = assemble_ranking(*table, registry);
    const auto actual = truth_ranking(truth, dataset, registry);
    EvaluationRow row;
    row.method = out.method;
    row.dataset = dataset;
    row.tau = kendall_tau(predicted, actual);
    row.predicted_best = predicted.best();
    row.true_best = actual.best();
    row.delta_e = delta_e(row.predicted_best, truth, dataset, registry);
    row.pct_delta_e = percent_delta_e(row.predicted_best, truth, dataset, registry);
    out.average.tau += row.tau;
    out.average.delta_e += row.delta_e;
    out.average.pct_delta_e += row.pct_delta_e;
    out.rows.push_back(std::move(row));
  }
  const auto n = static_cast<double>(out.rows.size());
  out.average.tau /= n;
  out.average.delta_e /= n;
  out.average.pct_delta_e /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_evaluation_csv(std::span<const MethodEvaluation> evals, const std::string& preamble = {}) {
  std::string out = preamble;
  out += "method,dataset,tau,delta_e,pct_delta_e,predicted_best,true_best\n";
  auto emit = [&](const EvaluationRow& r) {
    out += r.method + "," + r.dataset + "," + detail::format_double(r.tau) + "," + detail::format_double(r.delta_e) +
           "," + detail::format_double(r.pct_delta_e) + "," + r.predicted_best + "," + r.true_best + "\n";
  };
  for (const auto& e : evals) {
    for (const auto& r : e.rows) emit(r);
    emit(e.average);
  }
  return out;
}

/// Three markdown tables (tau, delta e, % delta e): one row per method, one
/// column per dataset plus the average.
inline std::string format_markdown_report(std::span<const MethodEvaluation> evals, const std::string& preamble = {}) {
  std::string out = preamble;
  if (evals.empty()) return out;
  struct Measure {
    const char* title;
    double EvaluationRow::*field;
    int digits;
  };
  const Measure measures[] = {
      {"Kendall tau vs nDCG@10 (higher is better)", &EvaluationRow::tau, 3},
      {"Delta e, nDCG@10 regret (lower is better)", &EvaluationRow::delta_e, 3},
      {"% Delta e, relative nDCG@10 regret (lower is better)", &EvaluationRow::pct_delta_e, 2},
  };
  for (const auto& m : measures) {
    out += "## ";
    out += m.title;
    out += "\n\n| method |";
    for (const auto& r : evals.front().rows) out += " " + r.dataset + " |";
    out += " Avrg |\n|---|";
    for (std::size_t i = 0; i <= evals.front().rows.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& e : evals) {
      out += "| " + e.method + " |";
      for (const auto& r : e.rows) out += " " + detail::format_fixed(r.*m.field, m.digits) + " |";
      out += " " + detail::format_fixed(e.average.*m.field, m.digits) + " |\n";
    }
    out += "\n";
  }
  return out;
}

}  // namespace drselect
