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

// Seeded token masking of query texts. Perturbed copies of query `q` are
// identified as `q#t1`, `q#t2`, ... (one per trial).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drselect/corpusio.hpp"
#include "drselect/detail/random.hpp"
#include "drselect/detail/text.hpp"
#include "drselect/error.hpp"

namespace drselect {

struct PerturbConfig {
  double p = 0.1;
  std::uint64_t seed = 0;
  int trials = 1;
  std::string mask_token = "[MASK]";

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw config_error("mask proportion p must lie in [0, 1]");
    if (trials < 1) throw config_error("trials must be >= 1");
    if (mask_token.empty()) throw config_error("mask token must be non-empty");
  }
};

/// Number of positions masked in an n-token query.
inline std::size_t mask_count(double p, std::size_t n) {
  if (p <= 0.0 || n == 0) return 0;
  const auto m = static_cast<std::size_t>(std::floor(p * static_cast<double>(n) + 1e-9));
  return std::min(n, std::max<std::size_t>(1, m));
}

inline std::string perturbed_id(std::string_view qid, int trial) {
  return std::string(qid) + "#t" + std::to_string(trial);
}

/// Splits `q#t3` into ("q", 3); nullopt when the id carries no trial suffix.
inline std::optional<std::pair<std::string, int>> split_perturbed_id(std::string_view id) {
  const auto pos = id.rfind("#t");
  if (pos == std::string_view::npos || pos + 2 >= id.size()) return std::nullopt;
  const auto trial = detail::parse_int(id.substr(pos + 2));
  if (!trial || id[pos + 2] == '+' || id[pos + 2] == '-') return std::nullopt;
  return std::make_pair(std::string(id.substr(0, pos)), static_cast<int>(*trial));
}

inline std::string mask_query(std::string_view text, const PerturbConfig& cfg, std::string_view query_id, int trial) {
  cfg.validate();
  auto tokens = detail::split_ws(text);
  if (tokens.empty()) throw data_error("cannot mask empty query '" + std::string(query_id) + "'");
  const std::size_t m = mask_count(cfg.p, tokens.size());

  std::mt19937_64 rng(detail::derive_seed(cfg.seed, query_id, static_cast<std::uint64_t>(trial)));
  std::vector<bool> masked(tokens.size(), false);
  for (std::size_t i : detail::sample_indices(rng, tokens.size(), m)) masked[i] = true;

  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    if (masked[i]) {
      out += cfg.mask_token;
    } else {
      out.append(tokens[i]);
    }
  }
  return out;
}

/// trials x |queries| masked copies, query-major, ids `<qid>#t<trial>`.
inline QueryList perturb_queries(const QueryList& queries, const PerturbConfig& cfg) {
  cfg.validate();
  QueryList out;
  out.reserve(queries.size() * static_cast<std::size_t>(cfg.trials));
  for (const auto& [qid, text] : queries) {
    if (split_perturbed_id(qid)) {
      throw data_error("query id '" + qid + "' collides with the '#t<trial>' suffix convention");
    }
    for (int t = 1; t <= cfg.trials; ++t) out.emplace_back(perturbed_id(qid, t), mask_query(text, cfg, qid, t));
  }
  return out;
}

inline void perturb_file(const fs::path& input, const fs::path& output, const PerturbConfig& cfg) {
  write_queries_tsv(perturb_queries(read_queries_tsv(input), cfg), output);
}

}  // namespace drselect
