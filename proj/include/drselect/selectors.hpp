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

// The six model-selection criteria. Each produces one scalar per model for a
// target dataset; assemble_ranking() turns a table of those scalars into a
// predicted ordering of the registry.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "drselect/corpusio.hpp"
#include "drselect/detail/text.hpp"
#include "drselect/error.hpp"
#include "drselect/gaussdist.hpp"
#include "drselect/parallel.hpp"
#include "drselect/perturb.hpp"
#include "drselect/retrieval.hpp"

namespace drselect {

enum class Method { indomain, qsim, fd_corpus, fd_extracted, entropy, qalter };
enum class Orientation { higher_better, lower_better };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::indomain:
      return "indomain";
    case Method::qsim:
      return "qsim";
    case Method::fd_corpus:
      return "fd_corpus";
    case Method::fd_extracted:
      return "fd_extracted";
    case Method::entropy:
      return "entropy";
    case Method::qalter:
      return "qalter";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::indomain, Method::qsim, Method::fd_corpus, Method::fd_extracted, Method::entropy,
                 Method::qalter}) {
    if (s == to_string(m)) return m;
  }
  throw config_error("unknown selection method '" + std::string(s) + "'");
}

inline std::string to_string(Orientation o) {
  return o == Orientation::higher_better ? "higher_better" : "lower_better";
}

inline Orientation orientation_of(Method m) {
  return (m == Method::indomain || m == Method::qsim) ? Orientation::higher_better : Orientation::lower_better;
}

/// Per-model criterion values for one method on one target dataset.
struct MethodScoreTable {
  Method method = Method::indomain;
  std::string dataset;
  std::map<std::string, double> scores;
  Orientation orientation = Orientation::higher_better;
  nlohmann::json params = nlohmann::json::object();

  /// Method name plus the parameter that distinguishes report rows,
  /// e.g. `entropy@10` or `qalter@p0.2`.
  std::string label() const {
    switch (method) {
      case Method::fd_extracted:
        return "fd_extracted@" + std::to_string(params.value("k", 100));
      case Method::entropy:
        return "entropy@" + std::to_string(params.value("cutoff", 10));
      case Method::qalter:
        return "qalter@p" + detail::format_double(params.value("p", 0.1));
      default:
        return to_string(method);
    }
  }
};

inline std::string method_of_label(std::string_view label) {
  const auto at = label.find('@');
  return std::string(label.substr(0, at));
}

/// Per-query intermediates (tqr, FD, H^q or score deltas).
struct QueryScoreDetail {
  std::map<std::string, std::vector<double>> per_query;
};

struct SelectorResult {
  double score = 0.0;
  QueryScoreDetail detail;
};

struct ModelRanking {
  std::string dataset;
  std::vector<std::pair<std::string, double>> entries;  // (model id, goodness), best first
  std::string provenance;

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.first);
    return out;
  }

  const std::string& best() const {
    if (entries.empty()) throw data_error("empty ranking for dataset '" + dataset + "'");
    return entries.front().first;
  }
};

/// Descending goodness with registry-order tie-break.
inline ModelRanking rank_by_goodness(const std::map<std::string, double>& goodness, const ModelRegistry& registry,
                                     const std::string& dataset, const std::string& provenance) {
  for (const auto& [id, v] : goodness) {
    if (!registry.position(id)) throw data_error("score for model '" + id + "' which is not in the registry");
    if (std::isnan(v)) throw numeric_error("NaN score for model '" + id + "' on '" + dataset + "'");
  }
  ModelRanking r{dataset, {}, provenance};
  r.entries.reserve(registry.size());
  for (const auto& m : registry.models) {
    auto it = goodness.find(m.id);
    if (it == goodness.end()) {
      throw data_error("missing " + provenance + " score for model '" + m.id + "' on '" + dataset + "'");
    }
    r.entries.emplace_back(m.id, it->second);
  }
  std::stable_sort(r.entries.begin(), r.entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return r;
}

inline ModelRanking assemble_ranking(const MethodScoreTable& table, const ModelRegistry& registry) {
  std::map<std::string, double> goodness;
  for (const auto& [id, s] : table.scores) {
    goodness[id] = table.orientation == Orientation::higher_better ? s : -s;
  }
  return rank_by_goodness(goodness, registry, table.dataset, table.label());
}

// ---------------------------------------------------------------------------
// Method 1: in-domain effectiveness

inline MethodScoreTable select_indomain(const EffectivenessTable& effectiveness, const std::string& source_dataset,
                                        const ModelRegistry& registry, const std::string& target_dataset = {}) {
  MethodScoreTable t;
  t.method = Method::indomain;
  t.dataset = target_dataset;
  t.orientation = orientation_of(Method::indomain);
  t.params = {{"source", source_dataset}};
  for (const auto& m : registry.models) t.scores[m.id] = effectiveness.at(m.id, source_dataset);
  return t;
}

// ---------------------------------------------------------------------------
// Method 2: query similarity

/// Mean over target queries of the best cosine similarity to any source
/// query. Always cosine, whatever similarity the model retrieves with.
inline SelectorResult query_similarity_score(const EmbeddingMatrix& src_q, const EmbeddingMatrix& tgt_q) {
  if (src_q.count() == 0 || tgt_q.count() == 0) throw data_error("query similarity needs non-empty query sets");
  if (src_q.dim != tgt_q.dim) throw data_error("source and target query dimensions differ");
  const ExactIndex index(src_q, SimilarityKind::cosine);
  SelectorResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < tgt_q.count(); ++i) {
    const auto q = tgt_q.row(i);
    const double qn = norm(q);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < src_q.count(); ++j) best = std::max(best, index.score(q, qn, j));
    out.detail.per_query[tgt_q.ids[i]] = {best};
    sum += best;
  }
  out.score = sum / static_cast<double>(tgt_q.count());
  return out;
}

// ---------------------------------------------------------------------------
// Method 3: corpus Frechet distance

inline double corpus_fd_score(const EmbeddingMatrix& src_docs, const EmbeddingMatrix& tgt_docs) {
  if (src_docs.dim != tgt_docs.dim) throw data_error("source and target document dimensions differ");
  return frechet_distance(summarize(src_docs), summarize(tgt_docs));
}

// ---------------------------------------------------------------------------
// Method 4: Frechet distance between per-query extracted document sets

inline SelectorResult extracted_fd_score(SimilarityKind kind, const EmbeddingMatrix& tgt_queries,
                                         const EmbeddingMatrix& src_docs, const EmbeddingMatrix& tgt_docs,
                                         std::size_t k = 100, unsigned threads = 1) {
  if (tgt_queries.count() == 0) throw data_error("extracted-document FD needs at least one target query");
  if (k < 2) throw data_error("extracted-document FD needs k >= 2");
  if (tgt_queries.dim != src_docs.dim || src_docs.dim != tgt_docs.dim) {
    throw data_error("query and document dimensions differ");
  }
  k = std::min({k, src_docs.count(), tgt_docs.count()});
  if (k < 2) throw data_error("extracted-document FD needs corpora with at least 2 documents");

  const ExactIndex src_index(src_docs, kind);
  const ExactIndex tgt_index(tgt_docs, kind);
  const auto src_pos = src_docs.index();
  const auto tgt_pos = tgt_docs.index();
  auto gather = [](const EmbeddingMatrix& docs, const std::unordered_map<std::string, std::size_t>& pos,
                   const RankedList& list) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(list.items.size()), static_cast<Eigen::Index>(docs.dim));
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      const auto r = docs.row(pos.at(list.items[i].doc_id));
      for (std::size_t j = 0; j < docs.dim; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    return x;
  };

  std::vector<double> fds(tgt_queries.count());
  parallel_for(tgt_queries.count(), threads, [&](std::size_t i) {
    const auto q = tgt_queries.row(i);
    const auto ls = src_index.top_k(tgt_queries.ids[i], q, k);
    const auto lt = tgt_index.top_k(tgt_queries.ids[i], q, k);
    fds[i] = frechet_distance(summarize(gather(src_docs, src_pos, ls)), summarize(gather(tgt_docs, tgt_pos, lt)));
  });

  SelectorResult out;
  for (std::size_t i = 0; i < fds.size(); ++i) out.detail.per_query[tgt_queries.ids[i]] = {fds[i]};
  out.score = std::accumulate(fds.begin(), fds.end(), 0.0) / static_cast<double>(fds.size());
  return out;
}

// ---------------------------------------------------------------------------
// Method 5: binary entropy of probability-at-rank

inline constexpr double kProbabilityFloor = 1e-6;

/// Binary entropy in bits.
inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Relevance probabilities p_i = (s_i - min) / (s_1 - min), clamped to
/// [1e-6, 1 - 1e-6]; all 1e-6 when s_1 == min.
inline std::vector<double> rank_probabilities(std::span<const double> scores, double min_score) {
  std::vector<double> p(scores.size(), kProbabilityFloor);
  if (scores.empty()) return p;
  const double span = scores.front() - min_score;
  if (span == 0.0) return p;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::clamp((scores[i] - min_score) / span, kProbabilityFloor, 1.0 - kProbabilityFloor);
  }
  return p;
}

inline double query_entropy(std::span<const double> scores, double min_score) {
  double h = 0.0;
  for (double p : rank_probabilities(scores, min_score)) h += binary_entropy(p);
  return h;
}

inline SelectorResult binary_entropy_score(std::span<const RankedList> runs,
                                           const std::map<std::string, NegativeSample>& negatives,
                                           std::size_t cutoff) {
  if (cutoff == 0) throw data_error("entropy cutoff must be positive");
  if (runs.empty()) throw data_error("entropy needs at least one ranked list");
  SelectorResult out;
  double sum = 0.0;
  for (const auto& run : runs) {
    if (run.items.empty()) throw data_error("empty ranked list for query '" + run.query_id + "'");
    auto neg = negatives.find(run.query_id);
    if (neg == negatives.end()) throw data_error("missing negatives for query '" + run.query_id + "'");
    std::vector<double> scores;
    const std::size_t n = std::min(cutoff, run.items.size());
    scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) scores.push_back(run.items[i].score);
    const double h = query_entropy(scores, neg->second.min_score);
    out.detail.per_query[run.query_id] = {h};
    sum += h;
  }
  out.score = sum / static_cast<double>(runs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Method 6: score stability under query masking

/// Sample standard deviation (n - 1 denominator).
inline double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) throw numeric_error("standard deviation needs at least two values");
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Pooled std of (perturbed score - original score) over every query, trial
/// and document among the first `depth` items of each original run.
inline SelectorResult query_alteration_score(std::span<const RankedList> original_runs,
                                             const EmbeddingMatrix& original_q, const EmbeddingMatrix& perturbed_q,
                                             const EmbeddingMatrix& docs, SimilarityKind kind,
                                             std::size_t depth = 10) {
  if (perturbed_q.dim != docs.dim || original_q.dim != docs.dim) throw data_error("query and document dimensions differ");
  const auto orig_pos = original_q.index();
  std::map<std::string, std::vector<std::size_t>> trials_of;
  for (std::size_t i = 0; i < perturbed_q.count(); ++i) {
    const auto split = split_perturbed_id(perturbed_q.ids[i]);
    if (!split) throw data_error("perturbed query id '" + perturbed_q.ids[i] + "' lacks a '#t<trial>' suffix");
    if (!orig_pos.contains(split->first)) {
      throw data_error("perturbed query '" + perturbed_q.ids[i] + "' has no original query embedding");
    }
    trials_of[split->first].push_back(i);
  }

  const ExactIndex index(docs, kind);
  const auto doc_pos = docs.index();
  SelectorResult out;
  std::vector<double> pool;
  for (const auto& run : original_runs) {
    if (!orig_pos.contains(run.query_id)) {
      throw data_error("run query '" + run.query_id + "' has no original query embedding");
    }
    auto trials = trials_of.find(run.query_id);
    if (trials == trials_of.end()) throw data_error("no perturbed trials for query '" + run.query_id + "'");
    auto& deltas = out.detail.per_query[run.query_id];
    const std::size_t n = std::min(depth, run.items.size());
    for (std::size_t row : trials->second) {
      const auto q = perturbed_q.row(row);
      const double qn = kind == SimilarityKind::cosine ? norm(q) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto d = doc_pos.find(run.items[i].doc_id);
        if (d == doc_pos.end()) throw data_error("run document '" + run.items[i].doc_id + "' has no embedding");
        deltas.push_back(index.score(q, qn, d->second) - run.items[i].score);
      }
    }
    pool.insert(pool.end(), deltas.begin(), deltas.end());
  }
  out.score = sample_std(pool);
  return out;
}

// ---------------------------------------------------------------------------
// Score table CSV: method,dataset,model,score,orientation,params_json

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string format_score_tables(std::span<const MethodScoreTable> tables, const ModelRegistry& registry,
                                       const std::string& preamble = {}) {
  std::string out = preamble;
  out += "method,dataset,model,score,orientation,params_json\n";
  for (const auto& t : tables) {
    const std::string params = csv_quote(t.params.dump());
    for (const auto& m : registry.models) {
      auto it = t.scores.find(m.id);
      if (it == t.scores.end()) continue;
      out += t.label() + "," + t.dataset + "," + m.id + "," + detail::format_double(it->second) + "," +
             to_string(t.orientation) + "," + params + "\n";
    }
  }
  return out;
}

namespace detail {

/// Splits one CSV record; double quotes escape commas and quotes.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace detail

/// Reads a score CSV back into one table per (label, dataset), in file order.
inline std::vector<MethodScoreTable> read_score_tables(const fs::path& path) {
  const std::string text = detail::read_existing(path);
  std::vector<MethodScoreTable> out;
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  bool header = false;
  std::size_t lineno = 0;
  for (const auto& raw : detail::lines_of(text)) {
    ++lineno;
    if (detail::blank_or_comment(raw)) continue;
    const auto line = detail::strip_cr(raw);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!header) {
      if (line != "method,dataset,model,score,orientation,params_json") throw data_error(where + ": bad score header");
      header = true;
      continue;
    }
    const auto cols = detail::split_csv(line);
    const auto score = cols.size() == 6 ? detail::parse_double(cols[3]) : std::nullopt;
    if (!score) throw data_error(where + ": malformed score row");
    auto key = std::make_pair(cols[0], cols[1]);
    auto [it, fresh] = slot.try_emplace(key, out.size());
    if (fresh) {
      MethodScoreTable t;
      t.method = parse_method(method_of_label(cols[0]));
      t.dataset = cols[1];
      t.orientation = cols[4] == "higher_better" ? Orientation::higher_better : Orientation::lower_better;
      if (t.orientation != orientation_of(t.method)) throw data_error(where + ": orientation does not match method");
      try {
        t.params = nlohmann::json::parse(cols[5]);
      } catch (const nlohmann::json::exception&) {
        throw data_error(where + ": params_json is not valid JSON");
      }
      out.push_back(std::move(t));
    }
    if (!out[it->second].scores.emplace(cols[2], *score).second) throw data_error(where + ": duplicate model score");
  }
  return out;
}

}  // namespace drselect
