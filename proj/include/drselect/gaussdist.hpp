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

// Gaussian summaries of embedding sets and the Frechet distance between them:
//
//   FD = |mu_s - mu_t|^2 + Tr(S) + Tr(T) - 2 Tr((S T)^(1/2))
//
// Tr((S T)^(1/2)) is evaluated through the symmetric form
// Tr((S^(1/2) T S^(1/2))^(1/2)), which has the same eigenvalues and only needs
// self-adjoint eigendecompositions.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "drselect/corpusio.hpp"
#include "drselect/error.hpp"

namespace drselect {

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// Mean and unbiased (n - 1) covariance of the rows of `x`.
inline GaussianSummary summarize(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw data_error("at least two rows are needed for a covariance (got " +
                                     std::to_string(x.rows()) + ")");
  if (!x.allFinite()) throw data_error("non-finite value in rows to summarize");
  GaussianSummary g;
  g.n = static_cast<std::size_t>(x.rows());
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

inline Eigen::MatrixXd to_eigen(const EmbeddingMatrix& m) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m.count()), static_cast<Eigen::Index>(m.dim));
  for (std::size_t i = 0; i < m.count(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < m.dim; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
  }
  return x;
}

inline GaussianSummary summarize(const EmbeddingMatrix& m) { return summarize(to_eigen(m)); }

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& a, const char* name) {
  if (a.rows() != a.cols()) throw data_error(std::string(name) + " is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw data_error(std::string(name) + " is not symmetric");
  }
}

inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_sym(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw numeric_error("symmetric eigendecomposition failed");
  return es;
}

/// Principal square root of a PSD matrix; negative eigenvalues clamp to 0.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const auto es = eigen_sym(a);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Tr((a b)^(1/2)) for symmetric PSD a and b. Always real and >= 0.
inline double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw data_error("covariance dimension mismatch");
  detail::require_symmetric(a, "first covariance");
  detail::require_symmetric(b, "second covariance");
  if (a.size() == 0) return 0.0;
  const Eigen::MatrixXd root_a = detail::psd_sqrt(a);
  Eigen::MatrixXd m = root_a * b * root_a;
  m = 0.5 * (m + m.transpose());
  const auto es = detail::eigen_sym(m);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

struct FrechetOptions {
  /// Added to both diagonals when either side has n <= dim (rank-deficient).
  double ridge = 1e-6;
};

inline double frechet_distance(const GaussianSummary& s, const GaussianSummary& t, FrechetOptions opt = {}) {
  if (s.dim() != t.dim()) {
    throw data_error("summary dimension mismatch (" + std::to_string(s.dim()) + " vs " + std::to_string(t.dim()) + ")");
  }
  const auto dim = static_cast<std::size_t>(s.dim());
  Eigen::MatrixXd cs = s.cov;
  Eigen::MatrixXd ct = t.cov;
  if (opt.ridge > 0.0 && (s.n <= dim || t.n <= dim)) {
    cs.diagonal().array() += opt.ridge;
    ct.diagonal().array() += opt.ridge;
  }
  const double mean_term = (s.mean - t.mean).squaredNorm();
  const double fd = mean_term + cs.trace() + ct.trace() - 2.0 * trace_sqrt_product(cs, ct);
  if (!std::isfinite(fd)) throw numeric_error("non-finite Frechet distance");
  return std::max(0.0, fd);
}

}  // namespace drselect
