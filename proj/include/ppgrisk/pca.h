/*
 * Copyright 2026 The ppgrisk Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Principal components of encoder embeddings.

#ifndef PPGRISK_PCA_H_
#define PPGRISK_PCA_H_

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ppgrisk {

struct PcaModel {
  Eigen::VectorXd mean;                // d
  Eigen::MatrixXd components;          // k x d, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, non-increasing

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
};

// Top-k eigenvectors of the sample covariance (divisor n - 1), each signed
// so its largest-magnitude coordinate is positive. k is capped at d.
// Throws ValidationError for fewer than 5 rows or non-finite entries.
PcaModel FitPca(const Eigen::MatrixXd& x, std::size_t k = 5);
PcaModel FitPca(const std::vector<std::vector<double>>& rows, std::size_t k = 5);

// components * (x - mean); no whitening.
Eigen::VectorXd Project(const PcaModel& model, std::span<const double> x);
Eigen::MatrixXd ProjectRows(const PcaModel& model, const Eigen::MatrixXd& x);

// CSV: mean row, one row per component, variance row (padded with empty
// fields to width d).
void WritePcaCsv(std::ostream& out, const PcaModel& model);
PcaModel ReadPcaCsv(std::istream& in);

}  // namespace ppgrisk

#endif  // PPGRISK_PCA_H_
