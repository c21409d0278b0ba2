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

// On-disk formats shared by every stage: binary embedding matrices with an
// id sidecar, TREC runs and qrels, effectiveness CSVs, query TSVs, model
// registries and dataset bundle directories.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "drselect/detail/text.hpp"
#include "drselect/error.hpp"

namespace drselect {

namespace fs = std::filesystem;

enum class SimilarityKind { dot, cosine };

inline std::string to_string(SimilarityKind k) { return k == SimilarityKind::dot ? "dot" : "cosine"; }

inline SimilarityKind parse_similarity(std::string_view s) {
  if (s == "dot") return SimilarityKind::dot;
  if (s == "cosine" || s == "cos") return SimilarityKind::cosine;
  throw config_error("unknown similarity kind '" + std::string(s) + "'");
}

enum class Role { source_queries, target_queries, source_docs, target_docs, perturbed_queries };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::source_queries:
      return "source_queries";
    case Role::target_queries:
      return "target_queries";
    case Role::source_docs:
      return "source_docs";
    case Role::target_docs:
      return "target_docs";
    case Role::perturbed_queries:
      return "perturbed_queries";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Embedding matrices

inline constexpr std::array<char, 8> kEmbeddingMagic = {'D', 'R', 'E', 'M', 'B', '1', '\0', '\0'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

/// Dense row-major float32 matrix with one identifier per row.
struct EmbeddingMatrix {
  std::string model_id;
  Role role = Role::target_docs;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<float> rows;

  std::size_t count() const noexcept { return ids.size(); }

  std::span<const float> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }

  /// Throws a data error naming the first violated invariant.
  void validate() const {
    if (dim == 0) throw data_error("dim must be positive");
    if (rows.size() != ids.size() * dim) throw data_error("row count does not match id count");
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
      if (id.empty()) throw data_error("empty id");
      if (id.find_first_of("\n\r") != std::string::npos) throw data_error("id contains a line break");
      if (!seen.insert(id).second) throw data_error("duplicate id '" + id + "'");
    }
    for (float v : rows) {
      if (!std::isfinite(v)) throw data_error("non-finite value in payload");
    }
  }

  std::unordered_map<std::string, std::size_t> index() const {
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], i);
    return out;
  }

  /// Rows picked by id, in the order given.
  EmbeddingMatrix select(std::span<const std::string> wanted) const {
    const auto idx = index();
    EmbeddingMatrix out{model_id, role, dim, {}, {}};
    out.ids.reserve(wanted.size());
    out.rows.reserve(wanted.size() * dim);
    for (const auto& id : wanted) {
      auto it = idx.find(id);
      if (it == idx.end()) throw data_error("id '" + id + "' not present in " + to_string(role) + " embeddings");
      out.ids.push_back(id);
      auto r = row(it->second);
      out.rows.insert(out.rows.end(), r.begin(), r.end());
    }
    return out;
  }
};

/// Bitwise equality of shape, ids and payload.
inline bool bitwise_equal(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  return a.dim == b.dim && a.ids == b.ids && a.rows.size() == b.rows.size() &&
         (a.rows.empty() || std::memcmp(a.rows.data(), b.rows.data(), a.rows.size() * sizeof(float)) == 0);
}

inline fs::path ids_sidecar(const fs::path& path) { return fs::path(path.string() + ".ids"); }

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

inline std::uint64_t get_le(const std::string& in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

inline void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("write failed for '" + path.string() + "'");
}

inline std::string read_existing(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  return read_file(path.string());
}

}  // namespace detail

inline void write_embeddings(const EmbeddingMatrix& m, const fs::path& path) {
  m.validate();
  std::string bytes;
  bytes.reserve(kEmbeddingHeaderBytes + m.rows.size() * 4);
  bytes.append(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  detail::put_u32(bytes, kEmbeddingVersion);
  detail::put_u32(bytes, static_cast<std::uint32_t>(m.dim));
  detail::put_u64(bytes, m.count());
  for (float v : m.rows) detail::put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  detail::write_bytes(path, bytes);

  std::string ids;
  for (const auto& id : m.ids) {
    ids += id;
    ids += '\n';
  }
  detail::write_bytes(ids_sidecar(path), ids);
}

inline EmbeddingMatrix read_embeddings(const fs::path& path, std::string model_id = {},
                                       Role role = Role::target_docs) {
  const std::string bytes = detail::read_existing(path);
  if (bytes.size() < kEmbeddingHeaderBytes) throw data_error(path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kEmbeddingMagic.data(), kEmbeddingMagic.size()) != 0) {
    throw data_error(path.string() + ": bad magic");
  }
  const auto version = detail::get_le(bytes, 8, 4);
  if (version != kEmbeddingVersion) {
    throw data_error(path.string() + ": unsupported version " + std::to_string(version));
  }
  EmbeddingMatrix m;
  m.model_id = std::move(model_id);
  m.role = role;
  m.dim = detail::get_le(bytes, 12, 4);
  const std::uint64_t count = detail::get_le(bytes, 16, 8);
  if (m.dim == 0) throw data_error(path.string() + ": dim must be positive");
  const std::uint64_t payload = bytes.size() - kEmbeddingHeaderBytes;
  if (count > payload / 4 / m.dim || payload < count * m.dim * 4) {
    throw data_error(path.string() + ": truncated payload");
  }
  if (payload != count * m.dim * 4) throw data_error(path.string() + ": trailing bytes after payload");

  m.rows.resize(count * m.dim);
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    m.rows[i] = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(bytes, kEmbeddingHeaderBytes + 4 * i, 4)));
  }

  const fs::path sidecar = ids_sidecar(path);
  const std::string ids_text = detail::read_existing(sidecar);
  if (!ids_text.empty() && ids_text.back() != '\n') throw data_error(sidecar.string() + ": last line not LF-terminated");
  m.ids = detail::lines_of(ids_text);
  if (m.ids.size() != count) {
    throw data_error(path.string() + ": id count mismatch (" + std::to_string(m.ids.size()) + " ids for " +
                     std::to_string(count) + " rows)");
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw with_context(e, path.string());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Runs and qrels (TREC conventions)

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Retrieved documents for one query, best first.
struct RankedList {
  std::string query_id;
  std::vector<ScoredDoc> items;
  SimilarityKind similarity = SimilarityKind::dot;

  void validate() const {
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!seen.insert(items[i].doc_id).second) {
        throw data_error("duplicate doc '" + items[i].doc_id + "' for query '" + query_id + "'");
      }
      if (i > 0 && items[i].score > items[i - 1].score) {
        throw data_error("score order violated for query '" + query_id + "' at rank " + std::to_string(i + 1));
      }
    }
  }

  /// Copy truncated to the first `k` items.
  RankedList head(std::size_t k) const {
    RankedList out{query_id, {}, similarity};
    out.items.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(std::min(k, items.size())));
    return out;
  }
};

inline std::vector<RankedList> read_run(const fs::path& path, SimilarityKind kind = SimilarityKind::dot) {
  const std::string text = detail::read_existing(path);
  struct Row {
    long long rank;
    ScoredDoc doc;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> by_query;
  std::set<std::pair<std::string, std::string>> keys;
  std::size_t lineno = 0;
  for (const auto& raw : detail::lines_of(text)) {
    ++lineno;
    if (detail::blank_or_comment(raw)) continue;
    const auto cols = detail::split_ws(raw);
    const auto rank = cols.size() == 6 ? detail::parse_int(cols[3]) : std::nullopt;
    const auto score = cols.size() == 6 ? detail::parse_double(cols[4]) : std::nullopt;
    if (!rank || !score || *rank < 1 || !std::isfinite(*score)) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": malformed run line");
    }
    std::string qid(cols[0]);
    std::string did(cols[2]);
    if (!keys.emplace(qid, did).second) {
      throw data_error(path.string() + ":" + std::to_string(lineno) + ": duplicate (query, doc) '" + qid + "', '" +
                       did + "'");
    }
    auto [it, fresh] = by_query.try_emplace(qid);
    if (fresh) order.push_back(qid);
    it->second.push_back({*rank, {std::move(did), *score}});
  }

  std::vector<RankedList> out;
  out.reserve(order.size());
  for (const auto& qid : order) {
    auto& rows = by_query[qid];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
    RankedList list{qid, {}, kind};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i > 0 && rows[i].rank == rows[i - 1].rank) {
        throw data_error(path.string() + ": duplicate rank " + std::to_string(rows[i].rank) + " for query '" + qid + "'");
      }
      if (i > 0 && rows[i].doc.score > rows[i - 1].doc.score) {
        throw data_error(path.string() + ": score order disagrees with rank order for query '" + qid + "'");
      }
      list.items.push_back(std::move(rows[i].doc));
    }
    out.push_back(std::move(list));
  }
  return out;
}

inline std::string format_run(std::span<const RankedList> lists, const std::string& tag) {
  std::string out;
  for (const auto& list : lists) {
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      out += list.query_id;
      out += " Q0 ";
      out += list.items[i].doc_id;
      out += ' ';
      out += std::to_string(i + 1);
      out += ' ';
      out += detail::format_double(list.items[i].score);
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

inline void write_run(std::span<const RankedList> lists, const fs::path& path, const std::string& tag = "drselect") {
  for (const auto& l : lists) l.validate();
  detail::write_bytes(path, format_run(lists, tag));
}

/// Graded relevance judgments.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> entries;

  const std::map<std::string, int>* for_query(const std::string& qid) const {
    auto it = entries.find(qid);
    return it == entries.end() ? nullptr : &it->second;
  }

  int grade(const std::string& qid, const std::string& did) const {
    const auto* q = for_query(qid);
    if (q == nullptr) return 0;
    auto it = q->find(did);
    return it == q->end() ? 0 : it->second;
  }

  void add(const std::string& qid, const std::string& did, int grade) {
    if (grade < 0) throw data_error("negative relevance grade for (" + qid + ", " + did + ")");
    if (!entries[qid].emplace(did, grade).second) {
      throw data_error("duplicate qrels key (" + qid + ", " + did + ")");
    }
  }
};

inline Qrels read_qrels(const fs::path& path) {
  const std::string text = detail::read_existing(path);
  Qrels q;
  std::size_t lineno = 0;
  for (const auto& raw : detail::lines_of(text)) {
    ++lineno;
    if (detail::blank_or_comment(raw)) continue;
    const auto cols = detail::split_ws(raw);
    const auto grade = cols.size() == 4 ? detail::parse_int(cols[3]) : std::nullopt;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!grade) throw data_error(where + ": malformed qrels line");
    try {
      q.add(std::string(cols[0]), std::string(cols[2]), static_cast<int>(*grade));
    } catch (const Error& e) {
      throw with_context(e, where);
    }
  }
  return q;
}

inline void write_qrels(const Qrels& q, const fs::path& path) {
  std::string out;
  for (const auto& [qid, docs] : q.entries) {
    for (const auto& [did, g] : docs) out += qid + " 0 " + did + " " + std::to_string(g) + "\n";
  }
  detail::write_bytes(path, out);
}

// ---------------------------------------------------------------------------
// Effectiveness tables

struct EffectivenessTable {
  struct Entry {
    std::string model;
    std::string dataset;
    double value;
  };

  std::string metric = "ndcg@10";
  std::vector<Entry> entries;

  void set(const std::string& model, const std::string& dataset, double value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw data_error("effectiveness value for (" + model + ", " + dataset + ") outside [0,1]");
    }
    for (auto& e : entries) {
      if (e.model == model && e.dataset == dataset) {
        e.value = value;
        return;
      }
    }
    entries.push_back({model, dataset, value});
  }

  std::optional<double> find(const std::string& model, const std::string& dataset) const {
    for (const auto& e : entries) {
      if (e.model == model && e.dataset == dataset) return e.value;
    }
    return std::nullopt;
  }

  double at(const std::string& model, const std::string& dataset) const {
    auto v = find(model, dataset);
    if (!v) throw data_error("no effectiveness value for model '" + model + "' on dataset '" + dataset + "'");
    return *v;
  }

  std::vector<std::string> datasets() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
      if (std::find(out.begin(), out.end(), e.dataset) == out.end()) out.push_back(e.dataset);
    }
    return out;
  }
};

inline EffectivenessTable read_effectiveness(const fs::path& path) {
  const std::string text = detail::read_existing(path);
  EffectivenessTable t;
  bool header = false;
  std::size_t lineno = 0;
  for (const auto& raw : detail::lines_of(text)) {
    ++lineno;
    if (detail::blank_or_comment(raw)) continue;
    const auto line = detail::strip_cr(raw);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (!header) {
      if (line != "model,dataset,value") throw data_error(where + ": expected header 'model,dataset,value'");
      header = true;
      continue;
    }
    const auto cols = detail::split_char(line, ',');
    const auto v = cols.size() == 3 ? detail::parse_double(cols[2]) : std::nullopt;
    if (!v) throw data_error(where + ": malformed effectiveness row");
    if (t.find(std::string(cols[0]), std::string(cols[1]))) throw data_error(where + ": duplicate (model, dataset)");
    try {
      t.set(std::string(cols[0]), std::string(cols[1]), *v);
    } catch (const Error& e) {
      throw with_context(e, where);
    }
  }
  if (!header) throw data_error(path.string() + ": missing header");
  return t;
}

inline std::string format_effectiveness(const EffectivenessTable& t, const std::string& preamble = {}) {
  std::string out = preamble;
  out += "model,dataset,value\n";
  for (const auto& e : t.entries) out += e.model + "," + e.dataset + "," + detail::format_double(e.value) + "\n";
  return out;
}

inline void write_effectiveness(const EffectivenessTable& t, const fs::path& path, const std::string& preamble = {}) {
  detail::write_bytes(path, format_effectiveness(t, preamble));
}

// ---------------------------------------------------------------------------
// Model registry

struct ModelEntry {
  std::string id;
  SimilarityKind similarity = SimilarityKind::dot;
  std::string display_name;
};

/// Candidate models in canonical order; that order is the tie-break everywhere.
struct ModelRegistry {
  std::vector<ModelEntry> models;

  std::size_t size() const noexcept { return models.size(); }

  std::optional<std::size_t> position(const std::string& id) const {
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (models[i].id == id) return i;
    }
    return std::nullopt;
  }

  const ModelEntry& at(const std::string& id) const {
    auto p = position(id);
    if (!p) throw data_error("model '" + id + "' is not in the registry");
    return models[*p];
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& m : models) {
      if (m.id.empty()) throw config_error("registry entry with empty model id");
      if (!detail::plain_name(m.id)) {
        throw config_error("model id '" + m.id + "' must not contain whitespace, commas, quotes or slashes");
      }
      if (!seen.insert(m.id).second) throw config_error("duplicate model id '" + m.id + "' in registry");
    }
  }
};

inline ModelRegistry registry_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw config_error("model registry must be a JSON array");
  ModelRegistry r;
  for (const auto& m : j) {
    if (!m.is_object() || !m.contains("id") || !m["id"].is_string()) {
      throw config_error("registry entry needs a string 'id'");
    }
    ModelEntry e;
    e.id = m["id"].get<std::string>();
    e.similarity = parse_similarity(m.value("similarity", std::string("dot")));
    e.display_name = m.value("name", e.id);
    r.models.push_back(std::move(e));
  }
  r.validate();
  return r;
}

inline nlohmann::json registry_to_json(const ModelRegistry& r) {
  auto out = nlohmann::json::array();
  for (const auto& m : r.models) {
    out.push_back({{"id", m.id}, {"similarity", to_string(m.similarity)}, {"name", m.display_name}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Query TSV (qid<TAB>text)

using QueryList = std::vector<std::pair<std::string, std::string>>;

inline QueryList read_queries_tsv(const fs::path& path) {
  const std::string text = detail::read_existing(path);
  QueryList out;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  for (const auto& raw : detail::lines_of(text)) {
    ++lineno;
    const auto line = detail::strip_cr(raw);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (tab == std::string_view::npos || tab == 0) throw data_error(where + ": expected 'qid<TAB>text'");
    std::string qid(line.substr(0, tab));
    std::string body(line.substr(tab + 1));
    if (body.find_first_not_of(" \t") == std::string::npos) throw data_error(where + ": empty query text");
    if (!seen.insert(qid).second) throw data_error(where + ": duplicate query id '" + qid + "'");
    out.emplace_back(std::move(qid), std::move(body));
  }
  return out;
}

inline std::string format_queries_tsv(const QueryList& queries) {
  std::string out;
  for (const auto& [qid, text] : queries) out += qid + "\t" + text + "\n";
  return out;
}

inline void write_queries_tsv(const QueryList& queries, const fs::path& path) {
  detail::write_bytes(path, format_queries_tsv(queries));
}

inline std::vector<std::string> read_id_list(const fs::path& path) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : detail::lines_of(detail::read_existing(path))) {
    const auto line = detail::strip_cr(raw);
    if (line.empty()) continue;
    if (!seen.emplace(line).second) throw data_error(path.string() + ": duplicate id '" + std::string(line) + "'");
    out.emplace_back(line);
  }
  return out;
}

inline void write_id_list(std::span<const std::string> ids, const fs::path& path) {
  std::string out;
  for (const auto& id : ids) out += id + "\n";
  detail::write_bytes(path, out);
}

// ---------------------------------------------------------------------------
// Dataset bundles
//
// <root>/queries.tsv            qid<TAB>text
// <root>/docs.txt               one document id per line
// <root>/qrels.txt              optional, TREC qrels
// <root>/embeddings/<model>/queries.emb
// <root>/embeddings/<model>/docs.emb
// <root>/embeddings/<model>/perturbed_p<p>.emb

struct DatasetBundle {
  std::string name;
  fs::path root;
  QueryList queries;
  std::vector<std::string> doc_ids;

  std::vector<std::string> query_ids() const {
    std::vector<std::string> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(q.first);
    return out;
  }

  fs::path qrels_path() const { return root / "qrels.txt"; }
  bool has_qrels() const { return fs::exists(qrels_path()); }

  fs::path embedding_path(const std::string& model, const std::string& file) const {
    return root / "embeddings" / model / file;
  }
  fs::path queries_embedding(const std::string& model) const { return embedding_path(model, "queries.emb"); }
  fs::path docs_embedding(const std::string& model) const { return embedding_path(model, "docs.emb"); }
  fs::path perturbed_embedding(const std::string& model, const std::string& p_label) const {
    return embedding_path(model, "perturbed_p" + p_label + ".emb");
  }

  /// Loads an embedding file and checks that its id set equals the bundle's.
  EmbeddingMatrix load_queries(const std::string& model, Role role) const {
    auto m = load_checked(queries_embedding(model), model, role);
    require_same_ids(m, query_ids(), "query");
    return m;
  }

  EmbeddingMatrix load_docs(const std::string& model, Role role) const {
    auto m = load_checked(docs_embedding(model), model, role);
    require_same_ids(m, doc_ids, "document");
    return m;
  }

  static EmbeddingMatrix load_checked(const fs::path& path, const std::string& model, Role role) {
    if (!fs::exists(path)) throw data_error("missing embedding file '" + path.string() + "'");
    return read_embeddings(path, model, role);
  }

  void require_same_ids(const EmbeddingMatrix& m, const std::vector<std::string>& expected,
                        const std::string& what) const {
    std::vector<std::string> a = m.ids;
    std::vector<std::string> b = expected;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) {
      throw data_error("embedding ids for model '" + m.model_id + "' do not match the " + what + " ids of dataset '" +
                       name + "'");
    }
  }
};

inline DatasetBundle load_bundle(const std::string& name, const fs::path& root) {
  DatasetBundle b;
  b.name = name;
  b.root = root;
  if (!fs::is_directory(root)) throw data_error("dataset directory '" + root.string() + "' does not exist");
  b.queries = read_queries_tsv(root / "queries.tsv");
  b.doc_ids = read_id_list(root / "docs.txt");
  return b;
}

}  // namespace drselect
