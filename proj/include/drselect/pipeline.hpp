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

// Batch orchestration: ingest -> retrieve -> perturb -> select -> truth ->
// evaluate -> report. Every stage reads the JSON config plus the outputs of
// earlier stages from the output directory, so stages can run one at a time
// or all together through run_pipeline().
//
// Output layout (under output_dir):
//   ingest.json                     validated inputs and the source sample
//   source_sample_docs.txt          sampled source document ids
//   source_sample_queries.txt       sampled source query ids
//   runs/<model>/<dataset>.trec     exact top-k runs
//   perturbed/<dataset>/p<p>.tsv    masked query texts for the encoder
//   scores/<label>.csv              one score table per method label
//   effectiveness.csv               ground-truth nDCG per (model, dataset)
//   evaluation.csv                  tau / delta e / % delta e per (method, dataset)
//   report.md                       the same as markdown tables

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "drselect/corpusio.hpp"
#include "drselect/detail/random.hpp"
#include "drselect/detail/text.hpp"
#include "drselect/error.hpp"
#include "drselect/gaussdist.hpp"
#include "drselect/ireval.hpp"
#include "drselect/metaeval.hpp"
#include "drselect/parallel.hpp"
#include "drselect/perturb.hpp"
#include "drselect/retrieval.hpp"
#include "drselect/selectors.hpp"

namespace drselect {

struct SourceConfig {
  std::string name;
  fs::path path;
  std::size_t sample_docs = 10000;
  std::size_t sample_queries = 1000;
};

struct TargetConfig {
  std::string name;
  std::optional<fs::path> path;
};

struct MethodsConfig {
  std::set<Method> enabled;
  std::size_t extracted_k = 100;
  std::vector<std::size_t> entropy_cutoffs{10, 1000};
  std::size_t negatives = 100;
  std::vector<double> mask_p{0.1, 0.2, 0.3};
  int trials = 3;
  std::size_t alteration_k = 10;
  std::string mask_token = "[MASK]";

  bool has(Method m) const { return enabled.contains(m); }
};

struct PipelineConfig {
  fs::path config_path;
  std::string digest;
  std::uint64_t seed = 0;
  fs::path output_dir;
  ModelRegistry registry;
  std::optional<SourceConfig> source;
  std::vector<TargetConfig> targets;
  std::optional<fs::path> effectiveness;
  MethodsConfig methods;
  MetricKind metric;
  std::size_t retrieval_depth = 1000;

  /// `# config_digest=<hex> seed=<n>` line written at the top of text outputs.
  std::string provenance() const { return "# config_digest=" + digest + " seed=" + std::to_string(seed) + "\n"; }

  std::string run_tag() const { return "drselect-" + digest; }

  /// Method labels in canonical report order.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    const auto& m = methods;
    if (m.has(Method::indomain)) out.push_back("indomain");
    if (m.has(Method::qsim)) out.push_back("qsim");
    if (m.has(Method::fd_corpus)) out.push_back("fd_corpus");
    if (m.has(Method::fd_extracted)) out.push_back("fd_extracted@" + std::to_string(m.extracted_k));
    if (m.has(Method::entropy)) {
      for (auto c : m.entropy_cutoffs) out.push_back("entropy@" + std::to_string(c));
    }
    if (m.has(Method::qalter)) {
      for (double p : m.mask_p) out.push_back("qalter@p" + detail::format_double(p));
    }
    return out;
  }

  std::vector<std::string> target_names() const {
    std::vector<std::string> out;
    for (const auto& t : targets) out.push_back(t.name);
    return out;
  }

  bool needs_embeddings() const {
    for (auto m : methods.enabled) {
      if (m != Method::indomain) return true;
    }
    return !effectiveness.has_value();
  }

  fs::path run_path(const std::string& model, const std::string& dataset) const {
    return output_dir / "runs" / model / (dataset + ".trec");
  }
  fs::path scores_path(const std::string& label) const { return output_dir / "scores" / (label + ".csv"); }
};

namespace detail {

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error(std::string("config field '") + key + "' has the wrong type");
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw config_error("config file '" + path.string() + "' does not exist");
  const std::string text = detail::read_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw config_error("config must be a JSON object");

  PipelineConfig c;
  c.config_path = path;
  c.digest = detail::hex64(detail::fnv1a(text));
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();

  if (!j.contains("seed") || !j["seed"].is_number_unsigned()) {
    throw config_error("config needs an explicit non-negative integer 'seed'");
  }
  c.seed = j["seed"].get<std::uint64_t>();
  c.output_dir = detail::resolve(base, detail::json_get<std::string>(j, "output_dir", "out"));
  if (!j.contains("models")) throw config_error("config needs a 'models' array");
  c.registry = registry_from_json(j["models"]);
  if (c.registry.size() == 0) throw config_error("config lists no models");
  c.metric = MetricKind::parse(detail::json_get<std::string>(j, "metric", "ndcg@10"));
  c.retrieval_depth = detail::json_get<std::size_t>(j, "retrieval_depth", 1000);

  if (j.contains("effectiveness")) {
    c.effectiveness = detail::resolve(base, detail::json_get<std::string>(j, "effectiveness", ""));
    if (!fs::exists(*c.effectiveness)) {
      throw config_error("effectiveness file '" + c.effectiveness->string() + "' does not exist");
    }
  }

  if (j.contains("source")) {
    const auto& s = j["source"];
    SourceConfig src;
    src.name = detail::json_get<std::string>(s, "name", "");
    if (src.name.empty()) throw config_error("source needs a 'name'");
    if (!detail::plain_name(src.name)) throw config_error("source name '" + src.name + "' is not a plain token");
    if (s.contains("path")) {
      src.path = detail::resolve(base, detail::json_get<std::string>(s, "path", ""));
      if (!fs::is_directory(src.path)) throw config_error("source directory '" + src.path.string() + "' does not exist");
    }
    src.sample_docs = detail::json_get<std::size_t>(s, "sample_docs", src.sample_docs);
    src.sample_queries = detail::json_get<std::size_t>(s, "sample_queries", src.sample_queries);
    c.source = src;
  }

  if (!j.contains("targets") || !j["targets"].is_array() || j["targets"].empty()) {
    throw config_error("config needs a non-empty 'targets' array");
  }
  std::set<std::string> names;
  for (const auto& t : j["targets"]) {
    TargetConfig tc;
    if (t.is_string()) {
      tc.name = t.get<std::string>();
    } else {
      tc.name = detail::json_get<std::string>(t, "name", "");
      if (t.contains("path")) {
        tc.path = detail::resolve(base, detail::json_get<std::string>(t, "path", ""));
        if (!fs::is_directory(*tc.path)) throw config_error("target directory '" + tc.path->string() + "' does not exist");
      }
    }
    if (tc.name.empty()) throw config_error("target without a name");
    if (!detail::plain_name(tc.name)) throw config_error("target name '" + tc.name + "' is not a plain token");
    if (!names.insert(tc.name).second) throw config_error("duplicate target '" + tc.name + "'");
    c.targets.push_back(std::move(tc));
  }

  auto& m = c.methods;
  if (!j.contains("methods")) {
    m.enabled = {Method::indomain, Method::qsim, Method::fd_corpus, Method::fd_extracted, Method::entropy,
                 Method::qalter};
  } else {
    const auto& mj = j["methods"];
    if (!mj.is_object()) throw config_error("'methods' must be an object keyed by method name");
    for (const auto& [name, params] : mj.items()) {
      const Method method = parse_method(name);
      m.enabled.insert(method);
      if (method == Method::fd_extracted) m.extracted_k = detail::json_get<std::size_t>(params, "k", m.extracted_k);
      if (method == Method::entropy) {
        m.entropy_cutoffs = detail::json_get<std::vector<std::size_t>>(params, "cutoffs", m.entropy_cutoffs);
        m.negatives = detail::json_get<std::size_t>(params, "negatives", m.negatives);
      }
      if (method == Method::qalter) {
        m.mask_p = detail::json_get<std::vector<double>>(params, "p", m.mask_p);
        m.trials = detail::json_get<int>(params, "trials", m.trials);
        m.alteration_k = detail::json_get<std::size_t>(params, "k", m.alteration_k);
        m.mask_token = detail::json_get<std::string>(params, "mask_token", m.mask_token);
      }
    }
  }
  if (m.enabled.empty()) throw config_error("no methods enabled");
  if (m.extracted_k < 2) throw config_error("fd_extracted k must be >= 2");
  if (m.entropy_cutoffs.empty() || std::find(m.entropy_cutoffs.begin(), m.entropy_cutoffs.end(), 0) != m.entropy_cutoffs.end()) {
    throw config_error("entropy cutoffs must be positive");
  }
  if (m.negatives == 0) throw config_error("entropy negatives must be positive");
  if (m.mask_p.empty()) throw config_error("qalter needs at least one p");
  for (double p : m.mask_p) PerturbConfig{p, c.seed, m.trials, m.mask_token}.validate();
  if (m.alteration_k == 0) throw config_error("qalter k must be positive");

  std::size_t depth_needed = c.metric.k;
  if (m.has(Method::entropy)) depth_needed = std::max(depth_needed, *std::max_element(m.entropy_cutoffs.begin(), m.entropy_cutoffs.end()));
  if (m.has(Method::qalter)) depth_needed = std::max(depth_needed, m.alteration_k);
  if (c.retrieval_depth < depth_needed) {
    throw config_error("retrieval_depth " + std::to_string(c.retrieval_depth) + " is below the deepest cutoff used (" +
                       std::to_string(depth_needed) + ")");
  }

  const bool embeddings = c.needs_embeddings();
  if (m.has(Method::indomain) || embeddings) {
    if (!c.source) throw config_error("config needs a 'source' dataset");
  }
  if (embeddings) {
    if (c.source->path.empty()) throw config_error("source needs a 'path' for embedding-based methods");
    for (const auto& t : c.targets) {
      if (!t.path) throw config_error("target '" + t.name + "' needs a 'path' for embedding-based methods");
    }
  }
  if (m.has(Method::indomain) && !c.effectiveness && !fs::exists(c.source->path / "qrels.txt")) {
    throw config_error("indomain needs source qrels or an 'effectiveness' table");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Stage helpers

namespace detail {

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw data_error("cannot create directory '" + p.string() + "': " + ec.message());
}

inline std::string triple(const std::string& method, const std::string& model, const std::string& dataset) {
  return "method=" + method + " model=" + model + " dataset=" + dataset;
}

inline std::vector<std::string> sample_ids(const std::vector<std::string>& ids, std::size_t size, std::uint64_t seed,
                                           const std::string& stream) {
  if (size >= ids.size()) return ids;
  std::mt19937_64 rng(derive_seed(seed, stream));
  auto picked = sample_indices(rng, ids.size(), size);
  std::sort(picked.begin(), picked.end());
  std::vector<std::string> out;
  out.reserve(picked.size());
  for (auto i : picked) out.push_back(ids[i]);
  return out;
}

inline std::string p_label(double p) { return format_double(p); }

}  // namespace detail

/// The datasets the pipeline retrieves over: targets, plus the source when it
/// has qrels and no external effectiveness table supplies e_S.
inline std::vector<std::pair<std::string, fs::path>> retrieval_datasets(const PipelineConfig& c) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (c.source && !c.effectiveness && c.methods.has(Method::indomain) && fs::exists(c.source->path / "qrels.txt")) {
    out.emplace_back(c.source->name, c.source->path);
  }
  for (const auto& t : c.targets) {
    if (t.path) out.emplace_back(t.name, *t.path);
  }
  return out;
}

struct StageOptions {
  unsigned threads = 1;
  std::optional<std::string> model;    // retrieve filter
  std::optional<std::string> dataset;  // retrieve filter
  std::optional<std::size_t> k;        // retrieve depth override
  std::optional<SimilarityKind> sim;   // retrieve similarity override
  std::optional<std::vector<double>> p;  // perturb overrides
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::string> method;  // select filter: method name or label
  std::optional<std::string> metric;  // truth metric override
};

// ---------------------------------------------------------------------------
// ingest

inline void stage_ingest(const PipelineConfig& c, const StageOptions& opt = {}) {
  detail::ensure_dir(c.output_dir);
  nlohmann::json manifest;
  manifest["config_digest"] = c.digest;
  manifest["seed"] = c.seed;
  manifest["models"] = registry_to_json(c.registry);
  if (c.effectiveness) {
    const auto eff = read_effectiveness(*c.effectiveness);
    for (const auto& m : c.registry.models) {
      if (c.methods.has(Method::indomain)) eff.at(m.id, c.source->name);
      if (!c.needs_embeddings()) {
        for (const auto& t : c.targets) eff.at(m.id, t.name);
      }
    }
    manifest["effectiveness"] = c.effectiveness->string();
  }
  if (!c.needs_embeddings()) {
    detail::write_bytes(c.output_dir / "ingest.json", manifest.dump(2) + "\n");
    return;
  }

  const auto src = load_bundle(c.source->name, c.source->path);
  const auto sample_docs = detail::sample_ids(src.doc_ids, c.source->sample_docs, c.seed, "source_docs");
  const auto sample_queries = detail::sample_ids(src.query_ids(), c.source->sample_queries, c.seed, "source_queries");
  write_id_list(sample_docs, c.output_dir / "source_sample_docs.txt");
  write_id_list(sample_queries, c.output_dir / "source_sample_queries.txt");
  manifest["source_sample"] = {{"docs", sample_docs.size()}, {"queries", sample_queries.size()}};

  std::vector<DatasetBundle> bundles;
  for (const auto& t : c.targets) bundles.push_back(load_bundle(t.name, *t.path));

  struct Check {
    std::string model;
    std::string dataset;
    nlohmann::json info;
  };
  std::vector<std::pair<std::string, const DatasetBundle*>> tasks;
  for (const auto& m : c.registry.models) {
    tasks.emplace_back(m.id, &src);
    for (const auto& b : bundles) tasks.emplace_back(m.id, &b);
  }
  std::vector<nlohmann::json> infos(tasks.size());
  parallel_for(tasks.size(), opt.threads, [&](std::size_t i) {
    const auto& [model, bundle] = tasks[i];
    const bool is_source = bundle == &src;
    try {
      const auto q = bundle->load_queries(model, is_source ? Role::source_queries : Role::target_queries);
      const auto d = bundle->load_docs(model, is_source ? Role::source_docs : Role::target_docs);
      if (q.dim != d.dim) throw data_error("query and document dimensions differ");
      nlohmann::json info = {{"dim", d.dim}, {"queries", q.count()}, {"docs", d.count()}};
      if (!is_source && c.methods.has(Method::qalter)) {
        for (double p : c.methods.mask_p) {
          const auto pert = DatasetBundle::load_checked(bundle->perturbed_embedding(model, detail::p_label(p)), model,
                                                        Role::perturbed_queries);
          if (pert.dim != d.dim) throw data_error("perturbed query dimension differs");
          info["perturbed_p" + detail::p_label(p)] = pert.count();
        }
      }
      infos[i] = std::move(info);
    } catch (const Error& e) {
      throw with_context(e, "model=" + model + " dataset=" + bundle->name);
    }
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& [model, bundle] = tasks[i];
    if (infos[i]["dim"] != infos[i - i % (bundles.size() + 1)]["dim"]) {
      throw data_error("model '" + model + "' has inconsistent dimensions across datasets");
    }
    manifest["embeddings"][model][bundle->name] = infos[i];
  }
  detail::write_bytes(c.output_dir / "ingest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// retrieve

inline void stage_retrieve(const PipelineConfig& c, const StageOptions& opt = {}) {
  if (!c.needs_embeddings()) return;
  const std::size_t depth = opt.k.value_or(c.retrieval_depth);
  if (depth == 0) throw config_error("--k must be positive");
  std::vector<std::pair<const ModelEntry*, std::pair<std::string, fs::path>>> tasks;
  for (const auto& m : c.registry.models) {
    if (opt.model && *opt.model != m.id) continue;
    for (const auto& ds : retrieval_datasets(c)) {
      if (opt.dataset && *opt.dataset != ds.first) continue;
      tasks.emplace_back(&m, ds);
    }
  }
  if (tasks.empty()) throw config_error("no (model, dataset) pair matches the retrieve filters");
  std::vector<std::string> texts(tasks.size());
  parallel_for(tasks.size(), opt.threads, [&](std::size_t i) {
    const auto& [model, ds] = tasks[i];
    try {
      const auto bundle = load_bundle(ds.first, ds.second);
      const bool is_source = c.source && ds.first == c.source->name;
      const auto q = bundle.load_queries(model->id, is_source ? Role::source_queries : Role::target_queries);
      const auto d = bundle.load_docs(model->id, is_source ? Role::source_docs : Role::target_docs);
      const auto runs = retrieve_all(q, d, opt.sim.value_or(model->similarity), depth);
      texts[i] = format_run(runs, c.run_tag());
    } catch (const Error& e) {
      throw with_context(e, detail::triple("retrieve", model->id, ds.first));
    }
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto path = c.run_path(tasks[i].first->id, tasks[i].second.first);
    detail::ensure_dir(path.parent_path());
    detail::write_bytes(path, texts[i]);
  }
}

// ---------------------------------------------------------------------------
// perturb

inline void stage_perturb(const PipelineConfig& c, const StageOptions& opt = {}) {
  if (!c.methods.has(Method::qalter)) return;
  const auto ps = opt.p.value_or(c.methods.mask_p);
  nlohmann::json manifest;
  manifest["config_digest"] = c.digest;
  for (const auto& t : c.targets) {
    const auto bundle = load_bundle(t.name, *t.path);
    for (double p : ps) {
      PerturbConfig pc{p, opt.seed.value_or(c.seed), opt.trials.value_or(c.methods.trials), c.methods.mask_token};
      const auto out = c.output_dir / "perturbed" / t.name / ("p" + detail::p_label(p) + ".tsv");
      detail::ensure_dir(out.parent_path());
      write_queries_tsv(perturb_queries(bundle.queries, pc), out);
      manifest["files"].push_back({{"dataset", t.name}, {"p", p}, {"seed", pc.seed}, {"trials", pc.trials},
                                   {"path", fs::relative(out, c.output_dir).generic_string()}});
    }
  }
  manifest["seed"] = opt.seed.value_or(c.seed);
  detail::write_bytes(c.output_dir / "perturbed" / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// select

inline std::vector<RankedList> load_run_checked(const PipelineConfig& c, const std::string& model,
                                                const std::string& dataset, SimilarityKind kind) {
  const auto path = c.run_path(model, dataset);
  if (!fs::exists(path)) throw data_error("missing run file '" + path.string() + "' (run the retrieve stage first)");
  return read_run(path, kind);
}

inline EffectivenessTable source_effectiveness(const PipelineConfig& c) {
  if (c.effectiveness) return read_effectiveness(*c.effectiveness);
  EffectivenessTable t;
  t.metric = c.metric.name();
  const auto qrels = read_qrels(c.source->path / "qrels.txt");
  for (const auto& m : c.registry.models) {
    const auto runs = load_run_checked(c, m.id, c.source->name, m.similarity);
    t.set(m.id, c.source->name, mean_ndcg(runs, qrels, c.metric.k).mean);
  }
  return t;
}

inline bool label_selected(const StageOptions& opt, const std::string& label) {
  return !opt.method || *opt.method == label || *opt.method == method_of_label(label);
}

inline void stage_select(const PipelineConfig& c, const StageOptions& opt = {}) {
  const auto labels = c.labels();
  if (opt.method && std::none_of(labels.begin(), labels.end(), [&](const auto& l) { return label_selected(opt, l); })) {
    throw config_error("method '" + *opt.method + "' is not enabled in the config");
  }
  std::map<std::string, std::vector<MethodScoreTable>> tables;  // label -> per-dataset tables

  if (c.methods.has(Method::indomain) && label_selected(opt, "indomain")) {
    const auto eff = source_effectiveness(c);
    for (const auto& t : c.targets) {
      auto table = select_indomain(eff, c.source->name, c.registry, t.name);
      tables["indomain"].push_back(std::move(table));
    }
  }

  const bool any_embedding_method = std::any_of(labels.begin(), labels.end(), [&](const auto& l) {
    return l != "indomain" && label_selected(opt, l);
  });
  if (any_embedding_method) {
    const auto src = load_bundle(c.source->name, c.source->path);
    const auto sample_docs_path = c.output_dir / "source_sample_docs.txt";
    const auto sample_queries_path = c.output_dir / "source_sample_queries.txt";
    if (!fs::exists(sample_docs_path) || !fs::exists(sample_queries_path)) {
      throw data_error("missing source sample under '" + c.output_dir.string() + "' (run the ingest stage first)");
    }
    const auto sample_docs = read_id_list(sample_docs_path);
    const auto sample_queries = read_id_list(sample_queries_path);
    std::vector<DatasetBundle> bundles;
    for (const auto& t : c.targets) bundles.push_back(load_bundle(t.name, *t.path));

    struct Task {
      const ModelEntry* model;
      const DatasetBundle* bundle;
      std::map<std::string, double> scores;  // label -> value
    };
    std::vector<Task> tasks;
    for (const auto& m : c.registry.models) {
      for (const auto& b : bundles) tasks.push_back({&m, &b, {}});
    }

    // Source-side embeddings depend only on the model; load them once.
    struct SourceSide {
      EmbeddingMatrix queries;
      EmbeddingMatrix docs;
    };
    std::vector<SourceSide> source_side(c.registry.size());
    parallel_for(c.registry.size(), opt.threads, [&](std::size_t i) {
      const auto& model = c.registry.models[i].id;
      try {
        source_side[i].queries = src.load_queries(model, Role::source_queries).select(sample_queries);
        source_side[i].docs = src.load_docs(model, Role::source_docs).select(sample_docs);
      } catch (const Error& e) {
        throw with_context(e, detail::triple("select", model, c.source->name));
      }
    });

    parallel_for(tasks.size(), opt.threads, [&](std::size_t ti) {
      auto& task = tasks[ti];
      const auto& model = *task.model;
      const auto& bundle = *task.bundle;
      const auto& side = source_side[*c.registry.position(model.id)];
      std::string current = "load";
      try {
        const auto tq = bundle.load_queries(model.id, Role::target_queries);
        const auto td = bundle.load_docs(model.id, Role::target_docs);
        std::optional<std::vector<RankedList>> runs;
        auto get_runs = [&]() -> const std::vector<RankedList>& {
          if (!runs) runs = load_run_checked(c, model.id, bundle.name, model.similarity);
          return *runs;
        };
        for (const auto& label : labels) {
          if (label == "indomain" || !label_selected(opt, label)) continue;
          current = label;
          const Method method = parse_method(method_of_label(label));
          switch (method) {
            case Method::qsim:
              task.scores[label] = query_similarity_score(side.queries, tq).score;
              break;
            case Method::fd_corpus:
              task.scores[label] = corpus_fd_score(side.docs, td);
              break;
            case Method::fd_extracted:
              task.scores[label] = extracted_fd_score(model.similarity, tq, side.docs, td, c.methods.extracted_k).score;
              break;
            case Method::entropy: {
              const std::size_t cutoff = std::stoul(label.substr(label.find('@') + 1));
              const ExactIndex index(td, model.similarity);
              const auto qpos = tq.index();
              const auto dpos = td.index();
              std::vector<RankedList> heads;
              std::map<std::string, NegativeSample> negatives;
              for (const auto& run : get_runs()) {
                auto head = run.head(cutoff);
                auto qit = qpos.find(run.query_id);
                if (qit == qpos.end()) throw data_error("run query '" + run.query_id + "' has no embedding");
                const auto q = tq.row(qit->second);
                const double qn = model.similarity == SimilarityKind::cosine ? norm(q) : 0.0;
                auto scorer = [&](const std::string& doc) { return index.score(q, qn, dpos.at(doc)); };
                negatives.emplace(run.query_id, sample_negatives(run.query_id, head, bundle.doc_ids,
                                                                 c.methods.negatives, c.seed, scorer));
                heads.push_back(std::move(head));
              }
              task.scores[label] = binary_entropy_score(heads, negatives, cutoff).score;
              break;
            }
            case Method::qalter: {
              const std::string p = label.substr(label.find("@p") + 2);
              const auto pert = DatasetBundle::load_checked(bundle.perturbed_embedding(model.id, p), model.id,
                                                            Role::perturbed_queries);
              task.scores[label] =
                  query_alteration_score(get_runs(), tq, pert, td, model.similarity, c.methods.alteration_k).score;
              break;
            }
            case Method::indomain:
              break;
          }
        }
      } catch (const Error& e) {
        throw with_context(e, detail::triple(current, model.id, bundle.name));
      } catch (const std::exception& e) {
        throw with_context(numeric_error(e.what()), detail::triple(current, model.id, bundle.name));
      }
    });

    for (const auto& label : labels) {
      if (label == "indomain" || !label_selected(opt, label)) continue;
      const Method method = parse_method(method_of_label(label));
      for (const auto& b : bundles) {
        MethodScoreTable t;
        t.method = method;
        t.dataset = b.name;
        t.orientation = orientation_of(method);
        switch (method) {
          case Method::qsim:
            t.params = {{"similarity", "cosine"}, {"source_queries", sample_queries.size()}, {"seed", c.seed}};
            break;
          case Method::fd_corpus:
            t.params = {{"source_docs", sample_docs.size()}, {"seed", c.seed}};
            break;
          case Method::fd_extracted:
            t.params = {{"k", c.methods.extracted_k}, {"source_docs", sample_docs.size()}, {"seed", c.seed}};
            break;
          case Method::entropy:
            t.params = {{"cutoff", std::stoul(label.substr(label.find('@') + 1))},
                        {"negatives", c.methods.negatives},
                        {"seed", c.seed}};
            break;
          case Method::qalter:
            t.params = {{"p", std::stod(label.substr(label.find("@p") + 2))},
                        {"k", c.methods.alteration_k},
                        {"trials", c.methods.trials},
                        {"seed", c.seed}};
            break;
          case Method::indomain:
            break;
        }
        for (const auto& task : tasks) {
          if (task.bundle == &b) t.scores[task.model->id] = task.scores.at(label);
        }
        tables[label].push_back(std::move(t));
      }
    }
  }

  detail::ensure_dir(c.output_dir / "scores");
  for (const auto& label : labels) {
    auto it = tables.find(label);
    if (it == tables.end()) continue;
    detail::write_bytes(c.scores_path(label), format_score_tables(it->second, c.registry, c.provenance()));
  }
}

// ---------------------------------------------------------------------------
// truth

inline void stage_truth(const PipelineConfig& c, const StageOptions& opt = {}) {
  const MetricKind metric = opt.metric ? MetricKind::parse(*opt.metric) : c.metric;
  EffectivenessTable out;
  out.metric = metric.name();
  if (c.effectiveness) {
    const auto given = read_effectiveness(*c.effectiveness);
    for (const auto& m : c.registry.models) {
      for (const auto& t : c.targets) out.set(m.id, t.name, given.at(m.id, t.name));
    }
  } else {
    std::vector<std::pair<const ModelEntry*, const TargetConfig*>> tasks;
    for (const auto& m : c.registry.models) {
      for (const auto& t : c.targets) tasks.emplace_back(&m, &t);
    }
    std::vector<double> values(tasks.size());
    parallel_for(tasks.size(), opt.threads, [&](std::size_t i) {
      const auto& [model, target] = tasks[i];
      try {
        const auto qrels_path = *target->path / "qrels.txt";
        if (!fs::exists(qrels_path)) throw data_error("missing qrels '" + qrels_path.string() + "'");
        const auto qrels = read_qrels(qrels_path);
        const auto runs = load_run_checked(c, model->id, target->name, model->similarity);
        const auto summary = mean_ndcg(runs, qrels, metric.k);
        if (summary.evaluated == 0) throw data_error("no judged queries to evaluate");
        values[i] = summary.mean;
      } catch (const Error& e) {
        throw with_context(e, detail::triple("truth", model->id, target->name));
      }
    });
    for (std::size_t i = 0; i < tasks.size(); ++i) out.set(tasks[i].first->id, tasks[i].second->name, values[i]);
  }
  detail::ensure_dir(c.output_dir);
  write_effectiveness(out, c.output_dir / "effectiveness.csv", c.provenance());
}

// ---------------------------------------------------------------------------
// evaluate / report

inline std::vector<MethodEvaluation> evaluate_all(const PipelineConfig& c) {
  const auto eff_path = c.output_dir / "effectiveness.csv";
  if (!fs::exists(eff_path)) throw data_error("missing '" + eff_path.string() + "' (run the truth stage first)");
  const auto truth = read_effectiveness(eff_path);
  const auto datasets = c.target_names();
  std::vector<MethodEvaluation> out;
  for (const auto& label : c.labels()) {
    const auto path = c.scores_path(label);
    if (!fs::exists(path)) throw data_error("missing score table '" + path.string() + "' (run the select stage first)");
    const auto tables = read_score_tables(path);
    try {
      out.push_back(evaluate_method(tables, truth, c.registry, datasets));
    } catch (const Error& e) {
      throw with_context(e, "method=" + label);
    }
  }
  return out;
}

inline void stage_evaluate(const PipelineConfig& c, const StageOptions& = {}) {
  const auto evals = evaluate_all(c);
  detail::write_bytes(c.output_dir / "evaluation.csv", format_evaluation_csv(evals, c.provenance()));
}

inline std::vector<MethodEvaluation> read_evaluation_csv(const fs::path& path) {
  const std::string text = detail::read_existing(path);
  std::vector<MethodEvaluation> out;
  bool header = false;
  for (const auto& raw : detail::lines_of(text)) {
    if (detail::blank_or_comment(raw)) continue;
    const auto line = detail::strip_cr(raw);
    if (!header) {
      if (line != "method,dataset,tau,delta_e,pct_delta_e,predicted_best,true_best") {
        throw data_error(path.string() + ": bad evaluation header");
      }
      header = true;
      continue;
    }
    const auto cols = detail::split_char(line, ',');
    if (cols.size() != 7) throw data_error(path.string() + ": malformed evaluation row");
    EvaluationRow r;
    r.method = std::string(cols[0]);
    r.dataset = std::string(cols[1]);
    const auto tau = detail::parse_double(cols[2]);
    const auto de = detail::parse_double(cols[3]);
    const auto pde = detail::parse_double(cols[4]);
    if (!tau || !de || !pde) throw data_error(path.string() + ": non-numeric evaluation value");
    r.tau = *tau;
    r.delta_e = *de;
    r.pct_delta_e = *pde;
    r.predicted_best = std::string(cols[5]);
    r.true_best = std::string(cols[6]);
    if (out.empty() || out.back().method != r.method) out.push_back({r.method, {}, {}});
    if (r.dataset == "Avrg") {
      out.back().average = r;
    } else {
      out.back().rows.push_back(r);
    }
  }
  return out;
}

inline void stage_report(const PipelineConfig& c, const StageOptions& = {}) {
  const auto path = c.output_dir / "evaluation.csv";
  if (!fs::exists(path)) throw data_error("missing '" + path.string() + "' (run the evaluate stage first)");
  const auto evals = read_evaluation_csv(path);
  std::string preamble = "<!-- config_digest=" + c.digest + " seed=" + std::to_string(c.seed) + " -->\n\n";
  preamble += "# Dense retriever selection report\n\n";
  detail::write_bytes(c.output_dir / "report.md", format_markdown_report(evals, preamble));
}

inline void run_pipeline(const PipelineConfig& c, const StageOptions& opt = {}) {
  stage_ingest(c, opt);
  stage_retrieve(c, opt);
  stage_perturb(c, opt);
  stage_select(c, opt);
  stage_truth(c, opt);
  stage_evaluate(c, opt);
  stage_report(c, opt);
}

}  // namespace drselect
