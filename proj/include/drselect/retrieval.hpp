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

// Exact brute-force scoring and top-k retrieval, plus seeded negative
// sampling outside a query's retrieved list.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "drselect/corpusio.hpp"
#include "drselect/detail/random.hpp"
#include "drselect/error.hpp"
#include "drselect/parallel.hpp"

namespace drselect {

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

namespace detail {

inline double cosine_from_parts(double d, double nq, double nd) {
  if (nq == 0.0 || nd == 0.0) throw numeric_error("zero vector under cosine similarity");
  return d / (nq * nd);
}

}  // namespace detail

inline double similarity(std::span<const float> q, std::span<const float> d, SimilarityKind kind) {
  if (q.size() != d.size()) {
    throw data_error("dimension mismatch (" + std::to_string(q.size()) + " vs " + std::to_string(d.size()) + ")");
  }
  if (kind == SimilarityKind::dot) return dot(q, d);
  return detail::cosine_from_parts(dot(q, d), norm(q), norm(d));
}

/// A document matrix prepared for repeated scans: doc norms are computed once.
class ExactIndex {
 public:
  ExactIndex(const EmbeddingMatrix& docs, SimilarityKind kind) : docs_(&docs), kind_(kind) {
    if (kind_ == SimilarityKind::cosine) {
      norms_.resize(docs.count());
      for (std::size_t i = 0; i < docs.count(); ++i) norms_[i] = norm(docs.row(i));
    }
  }

  const EmbeddingMatrix& docs() const noexcept { return *docs_; }
  SimilarityKind kind() const noexcept { return kind_; }

  /// Same arithmetic as similarity(), so scores are bit-identical.
  double score(std::span<const float> q, double q_norm, std::size_t row) const {
    const double d = dot(q, docs_->row(row));
    if (kind_ == SimilarityKind::dot) return d;
    return detail::cosine_from_parts(d, q_norm, norms_[row]);
  }

  /// Highest-scoring min(k, count) documents; ties break by ascending doc id.
  RankedList top_k(const std::string& query_id, std::span<const float> q, std::size_t k) const {
    if (k == 0) throw data_error("k must be positive");
    if (q.size() != docs_->dim) {
      throw data_error("dimension mismatch (query " + std::to_string(q.size()) + " vs docs " +
                       std::to_string(docs_->dim) + ")");
    }
    const std::size_t n = docs_->count();
    const double q_norm = kind_ == SimilarityKind::cosine ? norm(q) : 0.0;
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = score(q, q_norm, i);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& ids = docs_->ids;
    auto better = [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return ids[a] < ids[b];
    };
    const std::size_t take = std::min(k, n);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);

    RankedList out{query_id, {}, kind_};
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.items.push_back({ids[order[i]], scores[order[i]]});
    return out;
  }

 private:
  const EmbeddingMatrix* docs_;
  SimilarityKind kind_;
  std::vector<double> norms_;
};

inline RankedList top_k(std::span<const float> query_vec, const EmbeddingMatrix& docs, SimilarityKind kind,
                        std::size_t k, const std::string& query_id = "q") {
  return ExactIndex(docs, kind).top_k(query_id, query_vec, k);
}

/// top_k for every row of `queries`, in query row order.
inline std::vector<RankedList> retrieve_all(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs,
                                            SimilarityKind kind, std::size_t k, unsigned threads = 1) {
  if (queries.dim != docs.dim) throw data_error("query and document dimensions differ");
  const ExactIndex index(docs, kind);
  std::vector<RankedList> out(queries.count());
  parallel_for(queries.count(), threads, [&](std::size_t i) { out[i] = index.top_k(queries.ids[i], queries.row(i), k); });
  return out;
}

/// Documents sampled outside a query's retrieved list, with their scores.
struct NegativeSample {
  std::string query_id;
  std::vector<std::string> doc_ids;
  std::vector<double> scores;
  double min_score = 0.0;
};

using DocScorer = std::function<double(const std::string& doc_id)>;

/// Uniform sample without replacement of `count` ids from corpus_ids minus the
/// ids in `top`. The RNG is keyed by (seed, query_id), so the result does not
/// depend on which other queries are sampled or in what order.
inline NegativeSample sample_negatives(const std::string& query_id, const RankedList& top,
                                       std::span<const std::string> corpus_ids, std::size_t count,
                                       std::uint64_t seed, const DocScorer& scorer) {
  std::unordered_set<std::string_view> retrieved;
  for (const auto& it : top.items) retrieved.insert(it.doc_id);
  std::vector<const std::string*> candidates;
  candidates.reserve(corpus_ids.size());
  for (const auto& id : corpus_ids) {
    if (!retrieved.contains(id)) candidates.push_back(&id);
  }
  if (candidates.empty()) {
    throw data_error("no negative candidates left for query '" + query_id + "' (corpus exhausted by the top list)");
  }
  std::mt19937_64 rng(detail::derive_seed(seed, query_id));
  const auto picked = detail::sample_indices(rng, candidates.size(), count);

  NegativeSample out;
  out.query_id = query_id;
  out.doc_ids.reserve(picked.size());
  out.scores.reserve(picked.size());
  for (std::size_t i : picked) {
    out.doc_ids.push_back(*candidates[i]);
    out.scores.push_back(scorer(*candidates[i]));
  }
  out.min_score = *std::min_element(out.scores.begin(), out.scores.end());
  return out;
}

}  // namespace drselect
