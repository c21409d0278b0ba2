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

// Writes the synthetic mini-benchmark: three fabricated models, a source
// dataset and two target datasets, with queries, qrels, documents and
// pre-computed embeddings (including masked-query trials).
//
//   make_synthetic <output-dir>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "drselect/drselect.hpp"

namespace {

namespace ds = drselect;

constexpr std::size_t kLatent = 8;
constexpr std::size_t kDim = 16;
constexpr int kTrials = 3;
const double kMaskP[] = {0.1, 0.2, 0.3};

class Gauss {
 public:
  explicit Gauss(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    const double u1 = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t next(std::uint64_t bound) { return ds::detail::bounded(rng_, bound); }

 private:
  std::mt19937_64 rng_;
};

using Vec = std::vector<double>;

struct Model {
  std::string id;
  ds::SimilarityKind sim;
  std::vector<Vec> weights;  // kDim x kLatent
  double source_noise;       // embedding noise on the source domain
  double target_noise;       // embedding noise on target domains
  double mask_sensitivity;   // perturbation scale per unit of p
};

struct Dataset {
  std::string name;
  bool source;
  std::size_t docs;
  std::size_t queries;
  std::size_t topics;
  double shift;
};

Vec project(const Model& m, const Vec& latent, double noise, Gauss& g) {
  Vec out(kDim, 0.0);
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kLatent; ++j) out[i] += m.weights[i][j] * latent[j];
    out[i] += noise * g();
  }
  return out;
}

void normalize(Vec& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

void append(ds::EmbeddingMatrix& m, const std::string& id, const Vec& v) {
  m.ids.push_back(id);
  for (double x : v) m.rows.push_back(static_cast<float>(std::round(x * 4096.0) / 4096.0));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_synthetic <output-dir>\n";
    return 2;
  }
  const ds::fs::path root = argv[1];

  Gauss wg(7);
  std::vector<Model> models = {
      {"alpha", ds::SimilarityKind::dot, {}, 0.02, 0.16, 0.6},
      {"beta", ds::SimilarityKind::cosine, {}, 0.05, 0.08, 0.3},
      {"gamma", ds::SimilarityKind::dot, {}, 0.10, 0.12, 1.2},
  };
  // Near-orthonormal projections: Q from a QR factorization plus a
  // model-specific distortion, so dot and cosine rankings stay comparable.
  const double distortion[] = {0.15, 0.05, 0.30};
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    Eigen::MatrixXd a(kDim, kLatent);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = wg();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() * Eigen::MatrixXd::Identity(kDim, kLatent);
    auto& m = models[mi];
    m.weights.assign(kDim, Vec(kLatent));
    for (std::size_t i = 0; i < kDim; ++i) {
      for (std::size_t j = 0; j < kLatent; ++j) {
        m.weights[i][j] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) + distortion[mi] * 0.25 * wg();
      }
    }
  }

  const std::vector<Dataset> datasets = {
      {"source", true, 1500, 30, 12, 0.0},
      {"ds-alpha", false, 1200, 20, 8, 1.0},
      {"ds-beta", false, 1200, 20, 10, 2.0},
  };

  std::uint64_t stream = 100;
  for (const auto& d : datasets) {
    Gauss g(++stream);
    const auto dir = root / d.name;
    ds::fs::create_directories(dir);

    Vec shift(kLatent);
    for (auto& s : shift) s = d.shift * 0.5 * g();
    std::vector<Vec> centers(d.topics, Vec(kLatent));
    for (auto& c : centers) {
      for (std::size_t j = 0; j < kLatent; ++j) c[j] = g() + shift[j];
      normalize(c);
    }

    std::vector<Vec> doc_latent(d.docs, Vec(kLatent));
    std::vector<std::size_t> doc_topic(d.docs);
    std::vector<std::string> doc_ids;
    for (std::size_t i = 0; i < d.docs; ++i) {
      doc_topic[i] = g.next(d.topics);
      for (std::size_t j = 0; j < kLatent; ++j) doc_latent[i][j] = centers[doc_topic[i]][j] + 0.35 * g();
      normalize(doc_latent[i]);
      doc_ids.push_back("d" + std::to_string(i));
    }
    ds::write_id_list(doc_ids, dir / "docs.txt");

    ds::QueryList queries;
    std::vector<Vec> query_latent;
    ds::Qrels qrels;
    for (std::size_t i = 0; i < d.queries; ++i) {
      const std::size_t anchor = g.next(d.docs);
      Vec ql(kLatent);
      for (std::size_t j = 0; j < kLatent; ++j) ql[j] = doc_latent[anchor][j] + 0.12 * g();
      normalize(ql);
      query_latent.push_back(ql);
      const std::string qid = "q" + std::to_string(i);
      std::string text = "topic" + std::to_string(doc_topic[anchor]);
      const std::size_t words = 3 + g.next(6);
      for (std::size_t w = 0; w < words; ++w) text += " w" + std::to_string(g.next(50));
      queries.emplace_back(qid, text);
      qrels.add(qid, doc_ids[anchor], 2);
      // Two more same-topic documents with partial relevance.
      std::size_t added = 0;
      for (std::size_t k = 0; k < d.docs && added < 2; ++k) {
        const std::size_t cand = (anchor + 1 + k * 7) % d.docs;
        if (cand != anchor && doc_topic[cand] == doc_topic[anchor]) {
          qrels.add(qid, doc_ids[cand], 1);
          ++added;
        }
      }
    }
    ds::write_queries_tsv(queries, dir / "queries.tsv");
    ds::write_qrels(qrels, dir / "qrels.txt");

    for (const auto& m : models) {
      Gauss mg(++stream);
      const double noise = d.source ? m.source_noise : m.target_noise * (1.0 + 0.2 * d.shift);
      const auto edir = dir / "embeddings" / m.id;
      ds::fs::create_directories(edir);

      ds::EmbeddingMatrix docs{m.id, ds::Role::target_docs, kDim, {}, {}};
      for (std::size_t i = 0; i < d.docs; ++i) append(docs, doc_ids[i], project(m, doc_latent[i], noise, mg));
      ds::write_embeddings(docs, edir / "docs.emb");

      ds::EmbeddingMatrix qm{m.id, ds::Role::target_queries, kDim, {}, {}};
      for (std::size_t i = 0; i < d.queries; ++i) append(qm, queries[i].first, project(m, query_latent[i], noise, mg));
      ds::write_embeddings(qm, edir / "queries.emb");

      if (d.source) continue;
      for (double p : kMaskP) {
        ds::EmbeddingMatrix pm{m.id, ds::Role::perturbed_queries, kDim, {}, {}};
        for (std::size_t i = 0; i < d.queries; ++i) {
          for (int t = 1; t <= kTrials; ++t) {
            Vec pl = query_latent[i];
            for (auto& x : pl) x += 0.1 * p * m.mask_sensitivity * (1.0 + 0.3 * d.shift) * mg();
            append(pm, ds::perturbed_id(queries[i].first, t), project(m, pl, noise, mg));
          }
        }
        ds::write_embeddings(pm, edir / ("perturbed_p" + ds::detail::format_double(p) + ".emb"));
      }
    }
  }
  std::cout << "wrote synthetic benchmark to " << root << "\n";
  return 0;
}
